#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "fingervision/core.hpp"
#include "fingervision/synth.hpp"

using namespace fv;

namespace {

DeformationField random_field(Rng& rng, Roi roi = {0, 0, 300, 300}) {
  DeformationField f(roi, kGridSize, kGridSize);
  for (int r = 0; r < f.rows(); ++r)
    for (int c = 0; c < f.cols(); ++c) f.set(r, c, rng.uniform(-3, 3), rng.uniform(-3, 3));
  return f;
}

}  // namespace

TEST(DeformationField, MagnitudeChannelTracksComponents) {
  Rng rng(1);
  const DeformationField f = random_field(rng);
  for (int r = 0; r < f.rows(); ++r)
    for (int c = 0; c < f.cols(); ++c) EXPECT_EQ(f.magnitude(r, c), std::hypot(f.dx(r, c), f.dy(r, c)));
}

TEST(DeformationField, RejectsNonFiniteValues) {
  DeformationField f;
  try {
    f.set(0, 0, NAN, 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::Data);
  }
  EXPECT_THROW(f.set(0, 0, 0.0, INFINITY), Error);
}

TEST(DeformationField, FromComponentsChecksShape) {
  EXPECT_THROW(DeformationField::from_components({}, 2, 2, {1, 2, 3}, {1, 2, 3, 4}), Error);
  const auto f = DeformationField::from_components({0, 0, 2, 2}, 2, 2, {3, 0, 0, 0}, {4, 0, 0, 1});
  EXPECT_EQ(f.magnitude(0, 0), 5.0);
  EXPECT_EQ(f.dy(1, 1), 1.0);
}

TEST(DeformationField, CellCentersSpanRoi) {
  const DeformationField f({10, 20, 300, 60}, 30, 30);
  EXPECT_DOUBLE_EQ(f.cell_width(), 10.0);
  EXPECT_DOUBLE_EQ(f.cell_height(), 2.0);
  EXPECT_DOUBLE_EQ(f.cell_center(0, 0).x, 15.0);
  EXPECT_DOUBLE_EQ(f.cell_center(0, 0).y, 21.0);
  EXPECT_DOUBLE_EQ(f.cell_center(29, 29).x, 305.0);
  EXPECT_DOUBLE_EQ(f.cell_center(29, 29).y, 79.0);
}

TEST(FieldStats, ZeroField) {
  const FieldStats s = field_stats(DeformationField({0, 0, 300, 300}, 30, 30));
  EXPECT_EQ(s.mean_vector.x, 0.0);
  EXPECT_EQ(s.mean_vector.y, 0.0);
  EXPECT_EQ(s.mean_magnitude, 0.0);
  EXPECT_EQ(s.net_divergence, 0.0);
  EXPECT_EQ(s.net_curl, 0.0);
}

TEST(FieldStats, UniformFieldHasNoDerivatives) {
  DeformationField f({0, 0, 300, 300}, 30, 30);
  for (int r = 0; r < 30; ++r)
    for (int c = 0; c < 30; ++c) f.set(r, c, 1.75, 0.0);
  const FieldStats s = field_stats(f);
  EXPECT_DOUBLE_EQ(s.mean_vector.x, 1.75);
  EXPECT_DOUBLE_EQ(s.mean_vector.y, 0.0);
  EXPECT_DOUBLE_EQ(s.mean_magnitude, 1.75);
  EXPECT_EQ(s.net_divergence, 0.0);
  EXPECT_EQ(s.net_curl, 0.0);
}

TEST(FieldStats, LinearInTheField) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const DeformationField f = random_field(rng);
    const DeformationField g = random_field(rng);
    const double a = rng.uniform(-2, 2), b = rng.uniform(-2, 2);
    DeformationField h({0, 0, 300, 300}, 30, 30);
    for (int r = 0; r < 30; ++r)
      for (int c = 0; c < 30; ++c)
        h.set(r, c, a * f.dx(r, c) + b * g.dx(r, c), a * f.dy(r, c) + b * g.dy(r, c));
    const FieldStats sf = field_stats(f), sg = field_stats(g), sh = field_stats(h);
    EXPECT_NEAR(sh.mean_vector.x, a * sf.mean_vector.x + b * sg.mean_vector.x, 1e-9);
    EXPECT_NEAR(sh.mean_vector.y, a * sf.mean_vector.y + b * sg.mean_vector.y, 1e-9);
    EXPECT_NEAR(sh.net_divergence, a * sf.net_divergence + b * sg.net_divergence, 1e-9);
    EXPECT_NEAR(sh.net_curl, a * sf.net_curl + b * sg.net_curl, 1e-9);
  }
}

TEST(FieldStats, LinearFieldDerivativesAreExact) {
  // u = (0.01 x, 0.02 y) -> div 0.03; v = (-0.05 y, 0.05 x) -> curl 0.1
  DeformationField f({0, 0, 300, 300}, 30, 30), g({0, 0, 300, 300}, 30, 30);
  for (int r = 0; r < 30; ++r)
    for (int c = 0; c < 30; ++c) {
      const Point2 p = f.cell_center(r, c);
      f.set(r, c, 0.01 * p.x, 0.02 * p.y);
      g.set(r, c, -0.05 * p.y, 0.05 * p.x);
    }
  EXPECT_NEAR(field_stats(f).net_divergence, 0.03, 1e-12);
  EXPECT_NEAR(field_stats(f).net_curl, 0.0, 1e-12);
  EXPECT_NEAR(field_stats(g).net_curl, 0.1, 1e-12);
  EXPECT_NEAR(field_stats(g).net_divergence, 0.0, 1e-12);
}

TEST(FieldStats, TorsionIsCurlDominated) {
  const SensorSpec spec;
  const Roi roi = spec.default_roi();
  ContactLoad load;
  load.center = {roi.x + roi.width / 2, roi.y + roi.height / 2};
  load.radius_sigma = 40;
  load.torsion = 0.04;
  const FieldStats s = field_stats(sample_analytic_field(load, roi));
  EXPECT_GT(std::abs(s.net_curl), 10.0 * std::abs(s.net_divergence));
  EXPECT_GT(std::abs(s.net_curl), 0.0);
}

TEST(FieldChannels, ZeroFieldMapsToMidGray) {
  const FieldImages img = field_channels(DeformationField({0, 0, 30, 30}, 30, 30));
  for (auto v : img.dx.pixels) EXPECT_EQ(v, 128);
  for (auto v : img.magnitude.pixels) EXPECT_EQ(v, 128);
}

TEST(FieldChannels, SymmetricAroundZero) {
  Rng rng(5);
  const DeformationField f = random_field(rng, {0, 0, 30, 30});
  DeformationField neg({0, 0, 30, 30}, 30, 30);
  for (int r = 0; r < 30; ++r)
    for (int c = 0; c < 30; ++c) neg.set(r, c, -f.dx(r, c), -f.dy(r, c));
  const FieldImages a = field_channels(f, 3.0), b = field_channels(neg, 3.0);
  for (std::size_t i = 0; i < a.dx.pixels.size(); ++i) {
    EXPECT_EQ(a.dx.pixels[i] + b.dx.pixels[i], 256);
    EXPECT_EQ(a.dy.pixels[i] + b.dy.pixels[i], 256);
  }
  EXPECT_EQ(field_channels(f).magnitude.width, 30);
}

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  Rng c(42), d(42);
  for (int i = 0; i < 101; ++i) EXPECT_EQ(c.normal(), d.normal());
}

TEST(Rng, SplitStreamsAreDistinctAndStable) {
  const Rng base(9);
  std::set<std::uint64_t> firsts;
  for (std::uint64_t s = 0; s < 64; ++s) {
    Rng child = base.split(s);
    firsts.insert(child.next_u64());
    Rng again = base.split(s);
    Rng child2 = base.split(s);
    EXPECT_EQ(again.next_u64(), child2.next_u64());
  }
  EXPECT_EQ(firsts.size(), 64u);
}

TEST(Rng, DistributionMoments) {
  Rng rng(3);
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    su += u;
    const double z = rng.normal();
    sn += z;
    sn2 += z * z;
  }
  EXPECT_NEAR(su / n, 0.5, 0.005);
  EXPECT_NEAR(sn / n, 0.0, 0.01);
  EXPECT_NEAR(sn2 / n, 1.0, 0.015);
}

TEST(Rng, UniformIntAndShuffle) {
  Rng rng(8);
  std::vector<int> hist(7, 0);
  for (int i = 0; i < 70000; ++i) ++hist[rng.uniform_int(7)];
  for (int h : hist) EXPECT_NEAR(h, 10000, 500);
  EXPECT_EQ(rng.uniform_int(1), 0u);
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  rng.shuffle(v);
  std::set<int> s(v.begin(), v.end());
  EXPECT_EQ(s.size(), 50u);
  bool moved = false;
  for (int i = 0; i < 50; ++i) moved |= v[i] != i;
  EXPECT_TRUE(moved);
}
