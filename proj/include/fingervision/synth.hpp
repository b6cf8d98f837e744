#pragma once

// Analytic elastomer surrogate and marker-image renderer. Stands in for the
// physical sensor and provides ground truth for every downstream stage.

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "fingervision/core.hpp"

namespace fv {

struct SensorSpec {
  int image_width = 640;
  int image_height = 480;
  int marker_rows = 20;
  int marker_cols = 20;
  double marker_spacing_px = 18.0;
  double marker_radius_px = 4.0;
  double background_level = 0.85;
  double marker_level = 0.15;
  double noise_sigma = 0.0;

  /// Throws Errc::Config when the grid does not fit or levels are inverted.
  void validate() const;

  /// Rest positions, row-major, grid centered in the image.
  std::vector<Point2> rest_positions() const;
  /// Rectangle covering the marker grid plus half a spacing on every side.
  Roi default_roi() const;
};

struct ContactLoad {
  Point2 center;
  double radius_sigma = 30.0;
  double normal_amp = 0.0;
  Vec2 tangential;
  double torsion = 0.0;
};

/// u(p) = w(r) * [normal_amp * (r_vec / sigma) + tangential + torsion * (z x r_vec)],
/// w(r) = exp(-r^2 / (2 sigma^2)), r_vec = p - center.
Vec2 analytic_displacement(const ContactLoad& load, const Point2& p);

enum class MotionKind { NonSlipRampHold, TranslationalSlip, RotationalSlip, IncipientSlip };

inline constexpr int kRawFrames = 15;
inline constexpr double kFrameRateHz = 15.0;
/// Frame index at which ramps reach full load.
inline constexpr int kRampFrames = 7;

const char* to_string(MotionKind kind);
MotionKind motion_kind_from_string(const std::string& name);
inline SlipLabel label_of(MotionKind kind) {
  return kind == MotionKind::NonSlipRampHold ? SlipLabel::NonSlip : SlipLabel::Slip;
}

struct MotionProfile {
  MotionKind kind = MotionKind::NonSlipRampHold;
  std::array<ContactLoad, kRawFrames> loads{};
  /// First slipping frame (not meaningful for non-slip profiles).
  int onset_frame = 0;
};

/// Ranges the random profile generator draws from.
struct ProfileRanges {
  double sigma_min = 25.0;
  double sigma_max = 45.0;
  double normal_min = 1.0;
  double normal_max = 3.0;
  double tangential_min = 1.0;
  double tangential_max = 3.0;
  double torsion_max = 0.03;
  double slip_speed_min = 0.8;
  double slip_speed_max = 2.0;
  double twist_rate_min = 0.006;
  double twist_rate_max = 0.012;
  int onset_min = 3;
  int onset_max = 6;
  /// Contact center offset from the grid center, as a fraction of grid extent.
  double center_jitter = 0.2;
};

MotionProfile make_profile(MotionKind kind, const SensorSpec& spec, const ProfileRanges& ranges,
                           Rng& rng);

/// First frame whose contact center has moved more than 0.5 px from the
/// hold position, if any.
std::optional<int> slip_onset_frame(const MotionProfile& profile);

/// Markers drawn as anti-aliased disks (4x4 supersampled coverage) at
/// rest + analytic_displacement(rest), additive Gaussian noise, clamped and
/// quantized to 8 bits.
GrayImage render_frame(const SensorSpec& spec, const ContactLoad& load, Rng& rng);

/// Renders disks at explicit centers; render_frame is a thin wrapper.
GrayImage render_markers(const SensorSpec& spec, const std::vector<Point2>& centers, Rng& rng);

/// Analytic displacement sampled at the grid cell centers of roi.
DeformationField sample_analytic_field(const ContactLoad& load, const Roi& roi, int rows = kGridSize,
                                       int cols = kGridSize);

struct RawRender {
  std::vector<GrayImage> frames;
  SlipLabel label = SlipLabel::NonSlip;
  std::vector<DeformationField> truth;
};

RawRender generate_raw(const SensorSpec& spec, const MotionProfile& profile, const Roi& roi, Rng& rng);

}  // namespace fv
