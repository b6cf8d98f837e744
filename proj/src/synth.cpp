#include "fingervision/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace fv {

void SensorSpec::validate() const {
  if (image_width <= 0 || image_height <= 0) {
    throw Error(Errc::Config, "sensor image size must be positive");
  }
  if (marker_rows <= 0 || marker_cols <= 0) {
    throw Error(Errc::Config, "marker grid must be non-empty");
  }
  if (marker_spacing_px <= 0.0 || marker_radius_px <= 0.0) {
    throw Error(Errc::Config, "marker spacing and radius must be positive");
  }
  if (!(marker_level < background_level) || marker_level < 0.0 || background_level > 1.0) {
    throw Error(Errc::Config, "marker_level must be below background_level within [0, 1]");
  }
  if (noise_sigma < 0.0 || noise_sigma > 1.0) {
    throw Error(Errc::Config, "noise_sigma must be within [0, 1]");
  }
  const double margin = 2.0 * marker_radius_px;
  const double extent_x = (marker_cols - 1) * marker_spacing_px + 2.0 * margin;
  const double extent_y = (marker_rows - 1) * marker_spacing_px + 2.0 * margin;
  if (extent_x > image_width || extent_y > image_height) {
    throw Error(Errc::Config, "marker grid does not fit inside the image with a 2*radius margin");
  }
}

std::vector<Point2> SensorSpec::rest_positions() const {
  const double x0 = 0.5 * (image_width - (marker_cols - 1) * marker_spacing_px);
  const double y0 = 0.5 * (image_height - (marker_rows - 1) * marker_spacing_px);
  std::vector<Point2> out;
  out.reserve(static_cast<std::size_t>(marker_rows) * marker_cols);
  for (int r = 0; r < marker_rows; ++r) {
    for (int c = 0; c < marker_cols; ++c) {
      out.push_back({x0 + c * marker_spacing_px, y0 + r * marker_spacing_px});
    }
  }
  return out;
}

Roi SensorSpec::default_roi() const {
  const double w = marker_cols * marker_spacing_px;
  const double h = marker_rows * marker_spacing_px;
  return {0.5 * (image_width - w), 0.5 * (image_height - h), w, h};
}

Vec2 analytic_displacement(const ContactLoad& load, const Point2& p) {
  const Vec2 r = p - load.center;
  const double sigma = load.radius_sigma;
  const double r2 = r.x * r.x + r.y * r.y;
  const double w = std::exp(-r2 / (2.0 * sigma * sigma));
  // r_hat * (r / sigma) == r_vec / sigma, which is zero at the center.
  const double radial = load.normal_amp / sigma;
  return {w * (radial * r.x + load.tangential.x - load.torsion * r.y),
          w * (radial * r.y + load.tangential.y + load.torsion * r.x)};
}

const char* to_string(MotionKind kind) {
  switch (kind) {
    case MotionKind::NonSlipRampHold: return "non-slip-ramp-hold";
    case MotionKind::TranslationalSlip: return "translational-slip";
    case MotionKind::RotationalSlip: return "rotational-slip";
    case MotionKind::IncipientSlip: return "incipient-slip";
  }
  return "unknown";
}

MotionKind motion_kind_from_string(const std::string& name) {
  for (auto kind : {MotionKind::NonSlipRampHold, MotionKind::TranslationalSlip,
                    MotionKind::RotationalSlip, MotionKind::IncipientSlip}) {
    if (name == to_string(kind)) return kind;
  }
  throw Error(Errc::Config, "unknown motion kind '" + name + "'");
}

namespace {

double ramp(int frame) { return std::min(1.0, static_cast<double>(frame) / kRampFrames); }

}  // namespace

MotionProfile make_profile(MotionKind kind, const SensorSpec& spec, const ProfileRanges& ranges,
                           Rng& rng) {
  const Roi roi = spec.default_roi();
  const Point2 grid_center{roi.x + 0.5 * roi.width, roi.y + 0.5 * roi.height};
  const Point2 center{grid_center.x + rng.uniform(-1.0, 1.0) * ranges.center_jitter * roi.width,
                      grid_center.y + rng.uniform(-1.0, 1.0) * ranges.center_jitter * roi.height};
  const double sigma = rng.uniform(ranges.sigma_min, ranges.sigma_max);
  const double normal = rng.uniform(ranges.normal_min, ranges.normal_max);
  const double heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const Vec2 dir{std::cos(heading), std::sin(heading)};
  const double tangential = rng.uniform(ranges.tangential_min, ranges.tangential_max);
  const int onset = ranges.onset_min + static_cast<int>(rng.uniform_int(
                                           static_cast<std::uint64_t>(ranges.onset_max - ranges.onset_min + 1)));

  MotionProfile profile;
  profile.kind = kind;
  profile.onset_frame = onset;
  for (int k = 0; k < kRawFrames; ++k) {
    ContactLoad& load = profile.loads[k];
    load.center = center;
    load.radius_sigma = sigma;
    load.normal_amp = ramp(k) * normal;
  }

  switch (kind) {
    case MotionKind::NonSlipRampHold: {
      const double torsion = rng.uniform(-1.0, 1.0) * ranges.torsion_max;
      for (int k = 0; k < kRawFrames; ++k) {
        profile.loads[k].tangential = (ramp(k) * tangential) * dir;
        profile.loads[k].torsion = ramp(k) * torsion;
      }
      profile.onset_frame = kRawFrames;
      break;
    }
    case MotionKind::TranslationalSlip: {
      // Stick until onset, then the contact slides along the load direction
      // with the tangential deformation frozen at its onset value.
      const double speed = rng.uniform(ranges.slip_speed_min, ranges.slip_speed_max);
      const double stuck = ramp(onset - 1) * tangential;
      for (int k = 0; k < kRawFrames; ++k) {
        ContactLoad& load = profile.loads[k];
        if (k < onset) {
          load.tangential = (ramp(k) * tangential) * dir;
        } else {
          load.tangential = stuck * dir;
          load.center = center + (speed * (k - onset + 1)) * dir;
        }
      }
      break;
    }
    case MotionKind::RotationalSlip: {
      const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
      const double torsion = sign * rng.uniform(0.5, 1.0) * ranges.torsion_max;
      const double rate = sign * rng.uniform(ranges.twist_rate_min, ranges.twist_rate_max);
      for (int k = 0; k < kRawFrames; ++k) {
        ContactLoad& load = profile.loads[k];
        if (k < onset) {
          load.torsion = ramp(k) * torsion;
        } else {
          load.torsion = ramp(onset - 1) * torsion + rate * (k - onset + 1);
        }
      }
      break;
    }
    case MotionKind::IncipientSlip: {
      // Tangential load keeps ramping to the end; after onset the footprint
      // contracts so displacement at r_p = 1.5 sigma stays at its onset value
      // while the center keeps loading.
      const double rp = 1.5 * sigma;
      const double t_onset = tangential * (onset - 1) / (kRawFrames - 1.0);
      for (int k = 0; k < kRawFrames; ++k) {
        ContactLoad& load = profile.loads[k];
        const double t = tangential * k / (kRawFrames - 1.0);
        load.tangential = t * dir;
        if (k >= onset) {
          load.radius_sigma = rp / std::sqrt(rp * rp / (sigma * sigma) + 2.0 * std::log(t / t_onset));
        }
      }
      break;
    }
  }
  return profile;
}

std::optional<int> slip_onset_frame(const MotionProfile& profile) {
  const Point2 hold = profile.loads.front().center;
  for (int k = 0; k < kRawFrames; ++k) {
    if (squared_distance(profile.loads[k].center, hold) > 0.25) return k;
  }
  return std::nullopt;
}

GrayImage render_markers(const SensorSpec& spec, const std::vector<Point2>& centers, Rng& rng) {
  constexpr int kSuper = 4;
  const int w = spec.image_width;
  const int h = spec.image_height;
  std::vector<float> coverage(static_cast<std::size_t>(w) * h, 0.0f);
  const double radius = spec.marker_radius_px;
  const double r2 = radius * radius;

  for (const Point2& c : centers) {
    const int x_lo = std::max(0, static_cast<int>(std::floor(c.x - radius - 1.0)));
    const int x_hi = std::min(w - 1, static_cast<int>(std::ceil(c.x + radius + 1.0)));
    const int y_lo = std::max(0, static_cast<int>(std::floor(c.y - radius - 1.0)));
    const int y_hi = std::min(h - 1, static_cast<int>(std::ceil(c.y + radius + 1.0)));
    for (int iy = y_lo; iy <= y_hi; ++iy) {
      for (int ix = x_lo; ix <= x_hi; ++ix) {
        int hits = 0;
        for (int sy = 0; sy < kSuper; ++sy) {
          const double py = iy - 0.5 + (sy + 0.5) / kSuper - c.y;
          for (int sx = 0; sx < kSuper; ++sx) {
            const double px = ix - 0.5 + (sx + 0.5) / kSuper - c.x;
            hits += (px * px + py * py <= r2) ? 1 : 0;
          }
        }
        if (hits > 0) {
          float& cov = coverage[static_cast<std::size_t>(iy) * w + ix];
          cov = std::min(1.0f, cov + static_cast<float>(hits) / (kSuper * kSuper));
        }
      }
    }
  }

  GrayImage image(w, h);
  const double contrast = spec.background_level - spec.marker_level;
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    double v = spec.background_level - coverage[i] * contrast;
    if (spec.noise_sigma > 0.0) v += spec.noise_sigma * rng.normal();
    v = std::clamp(v, 0.0, 1.0);
    image.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  return image;
}

GrayImage render_frame(const SensorSpec& spec, const ContactLoad& load, Rng& rng) {
  std::vector<Point2> centers = spec.rest_positions();
  for (Point2& p : centers) p = p + analytic_displacement(load, p);
  return render_markers(spec, centers, rng);
}

DeformationField sample_analytic_field(const ContactLoad& load, const Roi& roi, int rows, int cols) {
  DeformationField field(roi, rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const Vec2 u = analytic_displacement(load, field.cell_center(r, c));
      field.set(r, c, u.x, u.y);
    }
  }
  return field;
}

RawRender generate_raw(const SensorSpec& spec, const MotionProfile& profile, const Roi& roi, Rng& rng) {
  RawRender raw;
  raw.label = label_of(profile.kind);
  raw.frames.reserve(kRawFrames);
  raw.truth.reserve(kRawFrames);
  for (const ContactLoad& load : profile.loads) {
    raw.frames.push_back(render_frame(spec, load, rng));
    raw.truth.push_back(sample_analytic_field(load, roi));
  }
  return raw;
}

}  // namespace fv
