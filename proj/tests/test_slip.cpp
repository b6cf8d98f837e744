#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "fingervision/slip.hpp"

using namespace fv;

namespace {

constexpr int kSmall = 4;

DeformationField constant_field(double dx, double dy, int n = kSmall) {
  DeformationField f(Roi{0, 0, 40, 40}, n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) f.set(r, c, dx, dy);
  return f;
}

/// Frame k carries (k, raw_id) so windows can be identified by content.
RawSample tagged_raw(std::uint64_t id, int frames = kRawFrames) {
  RawSample raw;
  raw.raw_id = id;
  raw.kind = motion_kind_for(id);
  raw.label = label_of(raw.kind);
  for (int k = 0; k < frames; ++k) raw.frames.push_back(constant_field(k, static_cast<double>(id)));
  return raw;
}

/// Slip raws keep moving after frame 7, non-slip raws hold; amplitude and
/// direction vary per raw.
RawSample toy_raw(std::uint64_t id, Rng& rng) {
  RawSample raw;
  raw.raw_id = id;
  raw.kind = motion_kind_for(id);
  raw.label = label_of(raw.kind);
  const double amp = rng.uniform(0.5, 1.5);
  const double angle = rng.uniform(0.0, 6.283185307179586);
  for (int k = 0; k < kRawFrames; ++k) {
    const double t = raw.label == SlipLabel::Slip ? k / 7.0 : std::min(1.0, k / 7.0);
    DeformationField f(Roi{0, 0, 40, 40}, kSmall, kSmall);
    for (int r = 0; r < kSmall; ++r)
      for (int c = 0; c < kSmall; ++c)
        f.set(r, c, amp * t * std::cos(angle) + 0.02 * rng.normal(), amp * t * std::sin(angle) + 0.02 * rng.normal());
    raw.frames.push_back(std::move(f));
  }
  return raw;
}

std::vector<RawSample> toy_dataset(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<RawSample> raws;
  for (std::size_t i = 0; i < n; ++i) raws.push_back(toy_raw(i, rng));
  return raws;
}

DatasetManifest balanced_manifest(std::size_t raws) {
  std::vector<RawSample> v;
  for (std::size_t i = 0; i < raws; ++i) {
    RawSample r;
    r.raw_id = i;
    r.label = label_of(motion_kind_for(i));
    v.push_back(r);
  }
  return build_manifest(v, 0);
}

NetConfig toy_net() {
  NetConfig c;
  c.hidden_channels = 3;
  c.height = kSmall;
  c.width = kSmall;
  return c;
}

}  // namespace

TEST(Slice, FiveWindowsOfTen) {
  const RawSample raw = tagged_raw(42);
  const auto samples = slice(raw);
  ASSERT_EQ(samples.size(), 5u);
  for (int w = 0; w < 5; ++w) {
    const Sample& s = samples[w];
    ASSERT_EQ(s.frames.size(), 10u);
    EXPECT_EQ(s.label, raw.label);
    EXPECT_EQ(s.provenance.raw_id, 42u);
    EXPECT_EQ(s.provenance.window_offset, w);
    EXPECT_EQ(s.frames.front().dx(0, 0), w);
    EXPECT_EQ(s.frames.back().dx(0, 0), w + 9);
  }
  EXPECT_EQ(samples.back().frames.back().dx(0, 0), 13.0);
}

TEST(Slice, WrongLength) {
  for (int n : {0, 10, 14, 16}) {
    try {
      slice(tagged_raw(1, n));
      FAIL() << n;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::WrongLength);
    }
  }
}

TEST(Slice, PreservesLabels) {
  for (std::uint64_t id = 0; id < 12; ++id) {
    const RawSample raw = tagged_raw(id);
    for (const Sample& s : slice(raw)) EXPECT_EQ(s.label, raw.label);
  }
}

TEST(MotionKinds, BalancedAssignment) {
  std::array<int, 4> kinds{};
  int slip = 0;
  for (std::uint64_t id = 0; id < 1600; ++id) {
    kinds[static_cast<int>(motion_kind_for(id))]++;
    slip += label_of(motion_kind_for(id)) == SlipLabel::Slip;
  }
  EXPECT_EQ(slip, 800);
  EXPECT_EQ(kinds[static_cast<int>(MotionKind::NonSlipRampHold)], 800);
  for (MotionKind k : {MotionKind::TranslationalSlip, MotionKind::RotationalSlip, MotionKind::IncipientSlip})
    EXPECT_NEAR(kinds[static_cast<int>(k)], 800 / 3.0, 1.0);
}

TEST(Manifest, FiveRecordsPerRaw) {
  const DatasetManifest m = balanced_manifest(1600);
  const DatasetCounts c = m.counts();
  EXPECT_EQ(c.raw, 1600u);
  EXPECT_EQ(c.samples, 8000u);
  EXPECT_EQ(c.slip, 4000u);
  EXPECT_EQ(c.non_slip, 4000u);
  std::map<std::uint64_t, std::set<int>> offsets;
  for (const SampleRecord& r : m.records) offsets[r.raw_id].insert(r.offset);
  for (const auto& [id, o] : offsets) EXPECT_EQ(o, (std::set<int>{0, 1, 2, 3, 4}));
  EXPECT_EQ(m.records[5].path, "raw_00001.fvf");
  EXPECT_EQ(raw_file_name(123, "x/"), "x/00123.fvf");
}

TEST(Split, CountsAndBalance) {
  const DatasetManifest m = balanced_manifest(1600);
  Rng rng(5);
  const SplitManifests s = split(m, 0.9, rng);
  EXPECT_EQ(s.train.records.size(), 7200u);
  EXPECT_EQ(s.test.records.size(), 800u);
  const DatasetCounts tr = s.train.counts();
  const DatasetCounts te = s.test.counts();
  EXPECT_EQ(tr.train, 7200u);
  EXPECT_EQ(te.test, 800u);
  EXPECT_LE(std::abs(static_cast<long>(tr.slip) - static_cast<long>(tr.non_slip)), 5);
  EXPECT_LE(std::abs(static_cast<long>(te.slip) - static_cast<long>(te.non_slip)), 5);
  EXPECT_NO_THROW(check_no_leakage(s.train, s.test));
}

TEST(Split, OddCountsStayWithinOneRaw) {
  for (std::size_t n : {7u, 21u, 99u, 301u}) {
    const DatasetManifest m = balanced_manifest(n);
    Rng rng(n);
    const SplitManifests s = split(m, 0.9, rng);
    const DatasetCounts te = s.test.counts();
    EXPECT_LE(std::abs(static_cast<long>(te.slip / 5) - static_cast<long>(te.non_slip / 5)), 1) << n;
    EXPECT_EQ(te.samples + s.train.counts().samples, 5 * n);
    check_no_leakage(s.train, s.test);
  }
}

TEST(Split, WindowsOfARawStayTogether) {
  const DatasetManifest m = balanced_manifest(200);
  Rng rng(9);
  const SplitManifests s = split(m, 0.9, rng);
  std::map<std::uint64_t, int> train_count, test_count;
  for (const auto& r : s.train.records) train_count[r.raw_id]++;
  for (const auto& r : s.test.records) test_count[r.raw_id]++;
  for (const auto& [id, n] : train_count) {
    EXPECT_EQ(n, 5);
    EXPECT_FALSE(test_count.contains(id));
  }
  for (const auto& [id, n] : test_count) EXPECT_EQ(n, 5);
}

TEST(Split, DeterministicPerSeed) {
  const DatasetManifest m = balanced_manifest(400);
  Rng a(3), b(3), c(4);
  const auto sa = split(m, 0.9, a);
  const auto sb = split(m, 0.9, b);
  const auto sc = split(m, 0.9, c);
  auto ids = [](const DatasetManifest& x) {
    std::set<std::uint64_t> out;
    for (const auto& r : x.records) out.insert(r.raw_id);
    return out;
  };
  EXPECT_EQ(ids(sa.test), ids(sb.test));
  EXPECT_NE(ids(sa.test), ids(sc.test));
}

TEST(Split, LeakageDetected) {
  const DatasetManifest m = balanced_manifest(10);
  Rng rng(1);
  SplitManifests s = split(m, 0.8, rng);
  s.test.records.push_back(s.train.records.front());
  try {
    check_no_leakage(s.train, s.test);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::Data);
  }
}

TEST(Split, NamesRoundTrip) {
  for (Split s : {Split::Unassigned, Split::Train, Split::Test}) EXPECT_EQ(split_from_string(to_string(s)), s);
  EXPECT_THROW(split_from_string("validation"), Error);
}

TEST(TensorDataset, WindowsMatchNetworkLayout) {
  std::vector<RawSample> raws{tagged_raw(0), tagged_raw(1)};
  const DatasetManifest m = build_manifest(raws, 0);
  const TensorDataset ds = make_tensor_dataset(raws, m);
  ASSERT_EQ(ds.size(), 10u);
  EXPECT_EQ(ds.raw_count(), 2u);
  const std::size_t plane = kSmall * kSmall;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto seq = ds.sequence(i);
    ASSERT_EQ(seq.size(), 10 * 3 * plane);
    const auto& rec = m.records[i];
    const auto samples = slice(raws[rec.raw_id]);
    const auto want = to_network_layout(samples[rec.offset].frames);
    EXPECT_TRUE(std::equal(seq.begin(), seq.end(), want.begin()));
    EXPECT_EQ(ds.label(i), static_cast<int>(raws[rec.raw_id].label));
  }
  // channel planes: dx, dy, magnitude
  const auto seq = ds.sequence(6);
  EXPECT_EQ(seq[0], 1.0f);
  EXPECT_EQ(seq[plane], 1.0f);
  EXPECT_FLOAT_EQ(seq[2 * plane], std::sqrt(2.0f));
}

TEST(TensorDataset, UnknownRawRejected) {
  std::vector<RawSample> raws{tagged_raw(0)};
  DatasetManifest m = build_manifest(raws, 0);
  m.records[0].raw_id = 77;
  EXPECT_THROW(make_tensor_dataset(raws, m), Error);
}

TEST(Evaluate, AlwaysZeroOnBalancedSet) {
  std::vector<int> truth, pred;
  for (int i = 0; i < 800; ++i) {
    truth.push_back(i % 2);
    pred.push_back(0);
  }
  const EvalResult r = evaluate_predictions(pred, truth);
  EXPECT_EQ(r.accuracy, 0.5);
  EXPECT_EQ(r.confusion[0][0], 400u);
  EXPECT_EQ(r.confusion[1][0], 400u);
  EXPECT_EQ(r.confusion[1][1], 0u);
}

TEST(Evaluate, PerfectPredictor) {
  std::vector<int> truth;
  for (int i = 0; i < 100; ++i) truth.push_back((i * 7) % 3 == 0);
  const EvalResult r = evaluate_predictions(truth, truth);
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.confusion[0][1], 0u);
  EXPECT_EQ(r.confusion[1][0], 0u);
  EXPECT_EQ(r.confusion[0][0] + r.confusion[1][1], 100u);
  EXPECT_THROW(evaluate_predictions(std::vector<int>{1}, std::vector<int>{}), Error);
}

TEST(Evaluate, WilsonInterval) {
  // Reference values computed independently from the closed form.
  auto [lo, hi] = wilson_interval(95, 100);
  EXPECT_NEAR(lo, 0.888250, 1e-6);
  EXPECT_NEAR(hi, 0.978456, 1e-6);
  std::tie(lo, hi) = wilson_interval(0, 10);
  EXPECT_EQ(lo, 0.0);
  EXPECT_NEAR(hi, 0.277533, 1e-6);
  std::tie(lo, hi) = wilson_interval(760, 800);
  EXPECT_LT(lo, 0.95);
  EXPECT_GT(hi, 0.95);
  std::tie(lo, hi) = wilson_interval(0, 0);
  EXPECT_EQ(lo, 0.0);
  EXPECT_EQ(hi, 1.0);
}

TEST(Train, ZeroStepsIsChance) {
  const auto raws = toy_dataset(200, 1);
  const TensorDataset ds = make_tensor_dataset(raws, build_manifest(raws, 0));
  TrainOptions opt;
  opt.net = toy_net();
  opt.steps = 0;
  const TrainResult r = train(ds, ds, opt);
  EXPECT_TRUE(r.report.step_loss.empty());
  EXPECT_NEAR(r.report.final_accuracy, 0.5, 0.05);
  Rng init_rng = Rng(opt.seed).split(0);
  EXPECT_EQ(r.params.values, init_params<float>(opt.net, init_rng).values);
}

TEST(Train, BitDeterministic) {
  const auto raws = toy_dataset(40, 2);
  const TensorDataset ds = make_tensor_dataset(raws, build_manifest(raws, 0));
  TrainOptions opt;
  opt.net = toy_net();
  opt.steps = 20;
  opt.batch = 8;
  opt.learning_rate = 1e-3;
  opt.eval_every = 10;
  const TrainResult a = train(ds, ds, opt);
  const TrainResult b = train(ds, ds, opt);
  EXPECT_EQ(a.params.values, b.params.values);
  EXPECT_EQ(a.report.step_loss, b.report.step_loss);
  EXPECT_EQ(a.report.test_accuracy, b.report.test_accuracy);
  ASSERT_EQ(a.report.test_accuracy.size(), 2u);
  opt.seed = 1;
  EXPECT_NE(train(ds, ds, opt).params.values, a.params.values);
}

TEST(Train, LossDecreasesMajorityOfSeeds) {
  const auto raws = toy_dataset(60, 3);
  const TensorDataset ds = make_tensor_dataset(raws, build_manifest(raws, 0));
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    TrainOptions opt;
    opt.net = toy_net();
    opt.steps = 60;
    opt.batch = 32;
    opt.learning_rate = 1e-3;
    opt.eval_every = 0;
    opt.seed = seed;
    const TrainResult r = train(ds, TensorDataset(kSmall, kSmall), opt);
    wins += r.report.step_loss.back() < r.report.step_loss.front();
  }
  EXPECT_GE(wins, 3);
}

TEST(Train, RejectsBadOptions) {
  TrainOptions opt;
  opt.net = toy_net();
  opt.batch = 0;
  EXPECT_THROW(train(TensorDataset(kSmall, kSmall), TensorDataset(kSmall, kSmall), opt), Error);
  opt.batch = 4;
  EXPECT_THROW(train(TensorDataset(kSmall, kSmall), TensorDataset(kSmall, kSmall), opt), Error);
}

TEST(StreamInfer, WarmsUpThenReports) {
  const NetConfig cfg = toy_net();
  Rng rng(4);
  const NetParams<float> p = init_params<float>(cfg, rng);
  StreamInfer s(p);
  const auto raw = toy_raw(1, rng);
  for (int k = 0; k < 9; ++k) EXPECT_FALSE(s.push(raw.frames[k]).has_value()) << k;
  for (int k = 9; k < 15; ++k) {
    const auto prob = s.push(raw.frames[k]);
    ASSERT_TRUE(prob.has_value());
    const std::vector<DeformationField> window(raw.frames.begin() + k - 9, raw.frames.begin() + k + 1);
    const auto logits = forward<float>(to_network_layout(window), p);
    EXPECT_NEAR(*prob, softmax<float>(logits)[1], 1e-7);
  }
}

TEST(StreamInfer, ZeroParamsGiveHalf) {
  const NetParams<float> p(toy_net());
  StreamInfer s(p);
  for (int k = 0; k < 20; ++k) {
    const auto prob = s.push(constant_field(0, 0));
    if (k >= 9) {
      EXPECT_EQ(prob.value(), 0.5);
    }
  }
}

TEST(StreamInfer, ResetSeparatesStreams) {
  const NetConfig cfg = toy_net();
  Rng rng(6);
  const NetParams<float> p = init_params<float>(cfg, rng);
  const auto a = toy_raw(1, rng);
  const auto b = toy_raw(2, rng);
  auto run = [&](StreamInfer& s, const RawSample& raw) {
    std::vector<std::optional<double>> out;
    for (const auto& f : raw.frames) out.push_back(s.push(f));
    return out;
  };
  StreamInfer fresh_a(p), fresh_b(p), joined(p);
  auto want = run(fresh_a, a);
  const auto tail = run(fresh_b, b);
  want.insert(want.end(), tail.begin(), tail.end());
  auto got = run(joined, a);
  joined.reset();
  const auto got_b = run(joined, b);
  got.insert(got.end(), got_b.begin(), got_b.end());
  EXPECT_EQ(got, want);
}

TEST(StreamInfer, RejectsWrongGrid) {
  const NetParams<float> p(toy_net());
  StreamInfer s(p);
  EXPECT_THROW(s.push(constant_field(0, 0, 5)), Error);
}
