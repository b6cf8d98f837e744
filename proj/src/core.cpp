#include "fingervision/core.hpp"

#include <algorithm>
#include <cmath>

namespace fv {

const char* to_string(Errc code) {
  switch (code) {
    case Errc::EmptyImage: return "EmptyImage";
    case Errc::EmptyMarkerSet: return "EmptyMarkerSet";
    case Errc::NotInitialized: return "NotInitialized";
    case Errc::TooFewAnchors: return "TooFewAnchors";
    case Errc::DegenerateGeometry: return "DegenerateGeometry";
    case Errc::SolveFailure: return "SolveFailure";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::WrongLength: return "WrongLength";
    case Errc::Config: return "ConfigError";
    case Errc::Io: return "IoError";
    case Errc::Data: return "DataError";
  }
  return "Unknown";
}

Error::Error(Errc code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

double squared_distance(const Point2& a, const Point2& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return dx * dx + dy * dy;
}

std::size_t DisplacementVectors::valid_count() const {
  return static_cast<std::size_t>(std::count(validity.begin(), validity.end(), true));
}

DeformationField::DeformationField(Roi roi, int rows, int cols)
    : roi_(roi),
      rows_(rows),
      cols_(cols),
      grid_(static_cast<std::size_t>(rows) * cols * kFieldChannels, 0.0) {
  if (rows <= 0 || cols <= 0) {
    throw Error(Errc::ShapeMismatch, "field grid must be non-empty");
  }
}

DeformationField DeformationField::from_components(Roi roi, int rows, int cols,
                                                   const std::vector<double>& dx,
                                                   const std::vector<double>& dy) {
  const auto n = static_cast<std::size_t>(rows) * cols;
  if (dx.size() != n || dy.size() != n) {
    throw Error(Errc::ShapeMismatch, "component planes do not match grid size");
  }
  DeformationField field(roi, rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const auto i = static_cast<std::size_t>(r) * cols + c;
      field.set(r, c, dx[i], dy[i]);
    }
  }
  return field;
}

void DeformationField::set(int r, int c, double dx, double dy) {
  if (!std::isfinite(dx) || !std::isfinite(dy)) {
    throw Error(Errc::Data, "non-finite displacement");
  }
  grid_[index(r, c, 0)] = dx;
  grid_[index(r, c, 1)] = dy;
  grid_[index(r, c, 2)] = std::hypot(dx, dy);
}

Point2 DeformationField::cell_center(int r, int c) const {
  return {roi_.x + (c + 0.5) * cell_width(), roi_.y + (r + 0.5) * cell_height()};
}

// ---------------------------------------------------------------------------

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

std::uint64_t Rng::next_u64() { return engine_(); }

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::uint64_t Rng::uniform_int(std::uint64_t n) {
  if (n <= 1) return 0;
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t v = next_u64();
  while (v >= limit) v = next_u64();
  return v % n;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // Marsaglia polar method.
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * f;
  has_spare_ = true;
  return u * f;
}

Rng Rng::split(std::uint64_t stream) const {
  return Rng(splitmix64(seed_ ^ splitmix64(stream + 0x632be59bd9b4e019ULL)));
}

// ---------------------------------------------------------------------------

namespace {

std::uint8_t map_symmetric(double v, double scale) {
  if (scale <= 0.0) return 128;
  const double t = std::clamp(v / scale, -1.0, 1.0);
  // std::round is symmetric around zero, so map(-v) == 256 - map(v).
  return static_cast<std::uint8_t>(128 + static_cast<int>(std::round(127.0 * t)));
}

}  // namespace

FieldImages field_channels(const DeformationField& field, double scale) {
  if (scale <= 0.0) {
    scale = 0.0;
    for (double v : field.values()) scale = std::max(scale, std::abs(v));
  }
  FieldImages out{GrayImage(field.cols(), field.rows()), GrayImage(field.cols(), field.rows()),
                  GrayImage(field.cols(), field.rows())};
  for (int r = 0; r < field.rows(); ++r) {
    for (int c = 0; c < field.cols(); ++c) {
      out.dx.at(c, r) = map_symmetric(field.dx(r, c), scale);
      out.dy.at(c, r) = map_symmetric(field.dy(r, c), scale);
      out.magnitude.at(c, r) = map_symmetric(field.magnitude(r, c), scale);
    }
  }
  return out;
}

FieldStats field_stats(const DeformationField& field) {
  FieldStats stats;
  const int rows = field.rows();
  const int cols = field.cols();
  const double n = static_cast<double>(rows) * cols;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      stats.mean_vector.x += field.dx(r, c);
      stats.mean_vector.y += field.dy(r, c);
      stats.mean_magnitude += field.magnitude(r, c);
    }
  }
  stats.mean_vector.x /= n;
  stats.mean_vector.y /= n;
  stats.mean_magnitude /= n;

  if (rows < 3 || cols < 3) return stats;
  const double hx = 2.0 * field.cell_width();
  const double hy = 2.0 * field.cell_height();
  if (hx <= 0.0 || hy <= 0.0) return stats;
  double div = 0.0;
  double curl = 0.0;
  for (int r = 1; r < rows - 1; ++r) {
    for (int c = 1; c < cols - 1; ++c) {
      const double dudx = (field.dx(r, c + 1) - field.dx(r, c - 1)) / hx;
      const double dudy = (field.dx(r + 1, c) - field.dx(r - 1, c)) / hy;
      const double dvdx = (field.dy(r, c + 1) - field.dy(r, c - 1)) / hx;
      const double dvdy = (field.dy(r + 1, c) - field.dy(r - 1, c)) / hy;
      div += dudx + dvdy;
      curl += dvdx - dudy;
    }
  }
  const double interior = static_cast<double>(rows - 2) * (cols - 2);
  stats.net_divergence = div / interior;
  stats.net_curl = curl / interior;
  return stats;
}

}  // namespace fv
