#pragma once

// Shared domain types for the FingerVision stack: points, marker sets,
// displacement vectors, deformation fields, labeled samples, grayscale
// images and the deterministic random stream every stochastic routine takes.
//
// Image convention: origin top-left, x to the right, y downward. Pixel
// (ix, iy) is centered on the coordinate (ix, iy).

#include <array>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace fv {

enum class Errc {
  EmptyImage,
  EmptyMarkerSet,
  NotInitialized,
  TooFewAnchors,
  DegenerateGeometry,
  SolveFailure,
  ShapeMismatch,
  WrongLength,
  Config,
  Io,
  Data,
};

const char* to_string(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what);
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Vec2&, const Vec2&) = default;
};

inline Vec2 operator-(const Point2& a, const Point2& b) { return {a.x - b.x, a.y - b.y}; }
inline Point2 operator+(const Point2& p, const Vec2& v) { return {p.x + v.x, p.y + v.y}; }
inline Vec2 operator+(const Vec2& a, const Vec2& b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator*(double s, const Vec2& v) { return {s * v.x, s * v.y}; }

double squared_distance(const Point2& a, const Point2& b);

struct MarkerSet {
  std::vector<Point2> points;
  std::uint64_t frame_index = 0;
};

/// Per-anchor displacement relative to the anchor's initial position.
/// Entries flagged invalid carry the last accepted (stale) vector.
struct DisplacementVectors {
  std::vector<Point2> anchors;
  std::vector<Vec2> vectors;
  std::vector<bool> validity;

  std::size_t size() const { return anchors.size(); }
  std::size_t valid_count() const;
};

/// Axis-aligned image-space rectangle a field grid spans.
struct Roi {
  double x = 0.0;
  double y = 0.0;
  double width = 0.0;
  double height = 0.0;

  friend bool operator==(const Roi&, const Roi&) = default;
};

inline constexpr int kGridSize = 30;
inline constexpr int kFieldChannels = 3;

/// Displacement field on a regular grid, channels (dx, dy, magnitude) in
/// pixels, stored row-major as (row, col, channel). The magnitude channel is
/// always derived from dx/dy, so it cannot drift out of sync.
class DeformationField {
 public:
  DeformationField() : DeformationField(Roi{}, kGridSize, kGridSize) {}
  DeformationField(Roi roi, int rows, int cols);

  /// dx and dy are row-major rows*cols planes.
  static DeformationField from_components(Roi roi, int rows, int cols,
                                          const std::vector<double>& dx,
                                          const std::vector<double>& dy);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  const Roi& roi() const { return roi_; }

  double dx(int r, int c) const { return grid_[index(r, c, 0)]; }
  double dy(int r, int c) const { return grid_[index(r, c, 1)]; }
  double magnitude(int r, int c) const { return grid_[index(r, c, 2)]; }
  double at(int r, int c, int ch) const { return grid_[index(r, c, ch)]; }

  void set(int r, int c, double dx, double dy);

  /// Image-space center of grid cell (r, c).
  Point2 cell_center(int r, int c) const;
  double cell_width() const { return roi_.width / cols_; }
  double cell_height() const { return roi_.height / rows_; }

  const std::vector<double>& values() const { return grid_; }

 private:
  std::size_t index(int r, int c, int ch) const {
    return (static_cast<std::size_t>(r) * cols_ + c) * kFieldChannels + ch;
  }

  Roi roi_;
  int rows_;
  int cols_;
  std::vector<double> grid_;
};

enum class SlipLabel : int { NonSlip = 0, Slip = 1 };

struct Provenance {
  std::uint64_t raw_id = 0;
  int window_offset = 0;
};

struct Sample {
  std::vector<DeformationField> frames;
  SlipLabel label = SlipLabel::NonSlip;
  Provenance provenance;
};

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  GrayImage() = default;
  GrayImage(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

  std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  bool empty() const { return width == 0 || height == 0; }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

/// Deterministic random stream: 64-bit Mersenne Twister (std::mt19937_64)
/// with hand-rolled distributions so streams are identical across standard
/// libraries. Uniforms use the top 53 bits; normals use the polar method.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n);
  double normal();

  /// Independent child stream; seeds are derived with splitmix64 so child
  /// streams depend only on (seed, stream id).
  Rng split(std::uint64_t stream) const;

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[uniform_int(i)]);
    }
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

/// dx, dy and magnitude planes as 8-bit images with a mapping symmetric
/// around zero: 0 -> 128, +scale -> 255, -scale -> 1. A non-positive scale
/// uses the largest absolute value in the field.
struct FieldImages {
  GrayImage dx;
  GrayImage dy;
  GrayImage magnitude;
};
FieldImages field_channels(const DeformationField& field, double scale = 0.0);

struct FieldStats {
  Vec2 mean_vector;
  double mean_magnitude = 0.0;
  double net_divergence = 0.0;
  double net_curl = 0.0;
};

/// Mean vector over all cells; divergence and curl from central differences
/// (cell spacing in pixels) averaged over interior cells.
FieldStats field_stats(const DeformationField& field);

}  // namespace fv
