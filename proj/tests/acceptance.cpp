// Acceptance gate: one PASS/FAIL line per criterion.
//
//   fv_acceptance            run all criteria
//   fv_acceptance 1 5 7      run a subset

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fingervision/config.hpp"
#include "fingervision/convlstm.hpp"
#include "fingervision/detect.hpp"
#include "fingervision/interp.hpp"
#include "fingervision/pipeline.hpp"
#include "fingervision/slip.hpp"
#include "fingervision/synth.hpp"
#include "fingervision/track.hpp"
#include "oracles.hpp"

using namespace fv;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const char* name, const Outcome& o, double secs, double budget_s) {
  const bool in_time = budget_s <= 0 || secs <= budget_s;
  const bool ok = o.pass && in_time;
  if (!ok) ++failures;
  std::printf("[%s] %d. %s: %s (%.1f s%s)\n", ok ? "PASS" : "FAIL", id, name, o.detail.c_str(), secs,
              in_time ? "" : ", over time budget");
  std::fflush(stdout);
}

void info(const char* name, const std::string& detail) {
  std::printf("[INFO] %s: %s\n", name, detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// --- 1 ---------------------------------------------------------------------

Outcome parameter_count() {
  const std::size_t n = param_count(NetConfig{});
  const NetParams<float> p{NetConfig{}};
  return {n == 269826 && p.values.size() == n, fmt("param_count = %zu, allocated %zu, expected 269826", n, p.values.size())};
}

// --- 2 ---------------------------------------------------------------------

Outcome gradient_check() {
  double worst = 0;
  int instances = 0;
  for (std::uint64_t seed = 0; seed < 24; ++seed) {
    Rng rng(seed);
    NetConfig cfg;
    cfg.hidden_channels = 2 + static_cast<int>(seed % 3);
    cfg.height = cfg.width = 4;
    cfg.seq_len = 3;
    NetParams<double> p(cfg);
    for (double& v : p.values) v = rng.uniform(-0.6, 0.6);
    std::vector<double> seq(cfg.sequence_size());
    for (double& v : seq) v = rng.uniform(-1, 1);
    worst = std::max(worst, oracle::gradient_check(seq, static_cast<int>(seed % 2), p, 1e-5));
    ++instances;
  }
  return {worst < 1e-4, fmt("%d instances, max relative error %.3g (< 1e-4)", instances, worst)};
}

// --- 3 ---------------------------------------------------------------------

Outcome tracking_equivalence() {
  Rng rng(3);
  int mismatches = 0, violations = 0, updates = 0;
  for (int inst = 0; inst < 100; ++inst) {
    const int n = 1 + static_cast<int>(rng.uniform_int(500));
    MarkerSet m;
    for (int i = 0; i < n; ++i) m.points.push_back({rng.uniform(0, 640), rng.uniform(0, 480)});
    const double d = rng.uniform(2, 20);
    TrackState s = track_init(m, {d});
    for (int frame = 0; frame < 5; ++frame) {
      MarkerSet next;
      const int cnt = static_cast<int>(rng.uniform_int(n + 1));
      for (int i = 0; i < cnt; ++i) {
        const Point2& base = m.points[rng.uniform_int(n)];
        next.points.push_back({base.x + rng.uniform(-2 * d, 2 * d), base.y + rng.uniform(-2 * d, 2 * d)});
      }
      const auto expect = oracle::brute_force_update(s.current_pos(), next.points, d);
      const TrackState t = track_update(s, next);
      mismatches += t.current_pos() != expect.current || t.alive() != expect.alive;
      for (std::size_t k = 0; k < t.size(); ++k)
        violations += squared_distance(t.current_pos()[k], s.current_pos()[k]) > d * d;
      ++updates;
      s = t;
    }
  }
  return {mismatches == 0 && violations == 0,
          fmt("100 instances, %d updates: %d mismatches vs brute force, %d step-bound violations", updates, mismatches,
              violations)};
}

// --- 4 ---------------------------------------------------------------------

Outcome tracking_accuracy() {
  SensorSpec spec;
  spec.noise_sigma = 0.0;
  const auto rest = spec.rest_positions();
  double worst = 0;
  for (int seq = 0; seq < 3; ++seq) {
    Rng rng(40 + seq);
    ContactLoad load;
    load.center = {rng.uniform(260, 380), rng.uniform(180, 300)};
    load.radius_sigma = rng.uniform(30, 45);
    const double amp = rng.uniform(1.5, 2.5);
    TrackState state;
    double sum = 0;
    std::size_t count = 0;
    for (int f = 0; f < 100; ++f) {
      const double phase = 2 * std::numbers::pi * f / 25.0;
      load.normal_amp = 1.0 + 0.5 * std::sin(phase);
      load.tangential = {amp * std::sin(phase), 0.6 * amp * std::sin(0.5 * phase)};
      load.torsion = 0.01 * std::sin(phase);
      const MarkerSet m = detect_markers(render_frame(spec, load, rng));
      state = f == 0 ? track_init(m) : track_update(state, m);
      if (f == 0) continue;
      const DisplacementVectors v = displacements(state);
      for (std::size_t k = 0; k < v.size(); ++k) {
        std::size_t idx = 0;
        for (std::size_t j = 1; j < rest.size(); ++j)
          if (squared_distance(rest[j], v.anchors[k]) < squared_distance(rest[idx], v.anchors[k])) idx = j;
        const Vec2 truth = analytic_displacement(load, rest[idx]);
        sum += std::pow(v.vectors[k].x - truth.x, 2) + std::pow(v.vectors[k].y - truth.y, 2);
        ++count;
      }
    }
    worst = std::max(worst, std::sqrt(sum / count));
  }
  return {worst < 0.5, fmt("3 sequences x 100 frames, worst RMS %.4f px (< 0.5)", worst)};
}

// --- 5 ---------------------------------------------------------------------

Outcome rbf_properties() {
  Rng rng(5);
  const Roi roi{140, 60, 360, 360};
  double node = 0, affine = 0;
  for (int inst = 0; inst < 50; ++inst) {
    DisplacementVectors v;
    for (int i = 0; i < 50; ++i) {
      v.anchors.push_back({rng.uniform(140, 500), rng.uniform(60, 420)});
      v.vectors.push_back({rng.uniform(-3, 3), rng.uniform(-3, 3)});
      v.validity.push_back(true);
    }
    const RbfModel m = rbf_fit(v);
    for (std::size_t i = 0; i < v.size(); ++i) {
      const Vec2 u = m.evaluate(v.anchors[i]);
      node = std::max({node, std::abs(u.x - v.vectors[i].x), std::abs(u.y - v.vectors[i].y)});
    }
    const double a[6] = {rng.uniform(-2, 2), rng.uniform(-0.01, 0.01), rng.uniform(-0.01, 0.01),
                         rng.uniform(-2, 2), rng.uniform(-0.01, 0.01), rng.uniform(-0.01, 0.01)};
    auto truth = [&](const Point2& p) { return Vec2{a[0] + a[1] * p.x + a[2] * p.y, a[3] + a[4] * p.x + a[5] * p.y}; };
    for (int i = 0; i < 10; ++i) {
      v.anchors.push_back({rng.uniform(140, 500), rng.uniform(60, 420)});
      v.validity.push_back(true);
    }
    v.vectors.resize(v.anchors.size());
    for (std::size_t i = 0; i < v.size(); ++i) v.vectors[i] = truth(v.anchors[i]);
    const DeformationField f = evaluate_grid(rbf_fit(v), roi);
    for (int r = 0; r < f.rows(); ++r)
      for (int c = 0; c < f.cols(); ++c) {
        const Vec2 u = truth(f.cell_center(r, c));
        affine = std::max({affine, std::abs(f.dx(r, c) - u.x), std::abs(f.dy(r, c) - u.y)});
      }
  }
  return {node <= 1e-9 && affine <= 1e-7,
          fmt("50 instances (50 anchors; 60 for the affine field), node error %.2e (<= 1e-9), affine error %.2e (<= 1e-7)", node, affine)};
}

// --- 6 and 9 ---------------------------------------------------------------

struct DefaultDataset {
  PipelineConfig cfg;
  std::vector<RawSample> raws;
  SplitManifests parts;
  double generation_s = 0;
};

DefaultDataset make_default_dataset() {
  DefaultDataset d;
  const auto t0 = Clock::now();
  d.raws = generate_dataset(d.cfg.dataset_options());
  d.generation_s = seconds_since(t0);
  Rng rng = Rng(d.cfg.seed).split(kSplitStream);
  d.parts = split(build_manifest(d.raws, d.cfg.seed), d.cfg.dataset.train_ratio, rng);
  return d;
}

Outcome classification(const DefaultDataset& d) {
  const TensorDataset train_set = make_tensor_dataset(d.raws, d.parts.train);
  const TensorDataset test_set = make_tensor_dataset(d.raws, d.parts.test);
  TrainOptions opt = d.cfg.train_options();
  opt.net.hidden_channels = 16;
  opt.eval_every = 0;
  std::vector<double> acc;
  int passed = 0;
  std::string runs;
  std::optional<NetParams<float>> first_model;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    opt.seed = seed;
    TrainResult r = train(train_set, test_set, opt);
    const EvalResult e = evaluate(r.params, test_set);
    acc.push_back(e.accuracy);
    passed += e.accuracy >= 0.95;
    runs += fmt("%sseed %llu: %.4f [%.3f, %.3f] loss %.3f->%.3f", seed ? "; " : "", static_cast<unsigned long long>(seed),
                e.accuracy, e.wilson_low, e.wilson_high, r.report.step_loss.front(), r.report.step_loss.back());
    if (!first_model) first_model = std::move(r.params);
    if (passed >= 2 || static_cast<int>(seed) + 1 - passed >= 2) break;
  }

  // Streaming check on held-out translational slips.
  std::set<std::uint64_t> test_ids;
  for (const auto& r : d.parts.test.records) test_ids.insert(r.raw_id);
  int crossed = 0, total = 0;
  for (std::uint64_t id : test_ids) {
    if (motion_kind_for(id) != MotionKind::TranslationalSlip) continue;
    Rng rng = Rng(d.cfg.seed).split(id);
    const MotionProfile prof = make_profile(MotionKind::TranslationalSlip, d.cfg.sensor, d.cfg.profiles, rng);
    const int onset = slip_onset_frame(prof).value_or(prof.onset_frame);
    StreamInfer stream(*first_model);
    bool hit = false;
    for (int k = 0; k < kRawFrames; ++k) {
      const auto p = stream.push(d.raws[id].frames[k]);
      if (p && *p > 0.5 && k <= onset + 10) hit = true;
    }
    crossed += hit;
    ++total;
  }
  info("stream", fmt("held-out translational slips crossing 0.5 within 10 frames of onset: %d/%d", crossed, total));

  return {passed >= 2, fmt("hidden 16, 1000 steps, batch 32; %s; %d of %zu seeds >= 0.95", runs.c_str(), passed, acc.size())};
}

Outcome dataset_protocol(const DefaultDataset& d) {
  std::size_t sliced = 0;
  for (const RawSample& raw : d.raws) sliced += slice(raw).size();
  const DatasetCounts all = build_manifest(d.raws, 0).counts();
  const DatasetCounts tr = d.parts.train.counts();
  const DatasetCounts te = d.parts.test.counts();
  bool leak_free = true;
  try {
    check_no_leakage(d.parts.train, d.parts.test);
  } catch (const Error&) {
    leak_free = false;
  }
  auto balanced = [](const DatasetCounts& c) {
    return std::abs(static_cast<long>(c.slip) - static_cast<long>(c.non_slip)) <= kWindowsPerRaw;
  };
  const bool ok = d.raws.size() == 1600 && sliced == 8000 && all.slip == 4000 && all.non_slip == 4000 &&
                  tr.samples == 7200 && te.samples == 800 && balanced(tr) && balanced(te) && leak_free;
  return {ok, fmt("%zu raw -> %zu sliced (%zu slip / %zu non-slip); train %zu (%zu/%zu), test %zu (%zu/%zu); %s",
                  d.raws.size(), sliced, all.slip, all.non_slip, tr.samples, tr.slip, tr.non_slip, te.samples, te.slip,
                  te.non_slip, leak_free ? "no raw-id leakage" : "LEAKAGE")};
}

// --- 7 ---------------------------------------------------------------------

Outcome throughput() {
  const PipelineConfig cfg;
  Rng rng(7);
  std::vector<GrayImage> frames;
  for (std::uint64_t rep = 0; frames.size() < 150; ++rep) {
    const MotionProfile prof = make_profile(motion_kind_for(rep), cfg.sensor, cfg.profiles, rng);
    for (const ContactLoad& load : prof.loads) frames.push_back(render_frame(cfg.sensor, load, rng));
  }
  frames.resize(150);
  const PipelineRun threaded = run_pipeline(cfg.pipeline_settings(), frames, true);
  const PipelineRun serial = run_pipeline(cfg.pipeline_settings(), frames, false);
  const double fps = std::max(threaded.fps, serial.fps);
  return {fps >= 15.0, fmt("640x480, 150 frames: %.1f FPS threaded, %.1f FPS single-thread (>= 15)", threaded.fps,
                           serial.fps)};
}

// --- 8 ---------------------------------------------------------------------

Outcome latency() {
  const NetConfig cfg;
  Rng rng(8);
  const NetParams<float> p = init_params<float>(cfg, rng);
  std::vector<float> seq(cfg.sequence_size());
  for (float& v : seq) v = static_cast<float>(rng.normal());
  ConvLstmWorkspace<float> ws(cfg);
  ws.forward(seq, p);
  const auto t0 = Clock::now();
  for (int i = 0; i < 10; ++i) ws.forward(seq, p);
  const double ms = seconds_since(t0) * 100.0;
  // Informational target; recorded but never gating.
  return {true, fmt("default config forward %.1f ms per sequence (target <= 50 ms, %s)", ms,
                    ms <= 50.0 ? "met" : "not met")};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  auto wanted = [&](int id) { return only.empty() || only.contains(id); };

  auto run = [&](int id, const char* name, double budget_s, const std::function<Outcome()>& fn) {
    if (!wanted(id)) return;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    report(id, name, o, seconds_since(t0), budget_s);
  };

  run(1, "parameter count", 5, parameter_count);
  run(2, "gradient correctness", 120, gradient_check);
  run(3, "tracking oracle equivalence", 60, tracking_equivalence);
  run(4, "tracking accuracy", 120, tracking_accuracy);
  run(5, "RBF properties", 60, rbf_properties);

  std::optional<DefaultDataset> data;
  if (wanted(6) || wanted(9)) {
    const auto t0 = Clock::now();
    try {
      data = make_default_dataset();
      info("dataset", fmt("generated 1600 raw samples in %.1f s", data->generation_s));
    } catch (const std::exception& e) {
      info("dataset", std::string("generation failed: ") + e.what());
    }
    const double gen_s = seconds_since(t0);
    if (wanted(6)) {
      const auto t1 = Clock::now();
      Outcome o{false, "no dataset"};
      try {
        if (data) o = classification(*data);
      } catch (const std::exception& e) {
        o = {false, std::string("error: ") + e.what()};
      }
      const double total = gen_s + seconds_since(t1);
      report(6, "end-to-end classification", o, total, 1800);
    }
  }
  run(7, "pipeline throughput", 60, throughput);
  run(8, "forward latency (informational)", 0, latency);
  if (wanted(9)) {
    const auto t0 = Clock::now();
    report(9, "dataset protocol", data ? dataset_protocol(*data) : Outcome{false, "no dataset"}, seconds_since(t0), 0);
  }

  std::printf("%d criterion/criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
