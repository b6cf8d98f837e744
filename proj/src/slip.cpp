#include "fingervision/slip.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <set>
#include <thread>

#include "fingervision/pipeline.hpp"

namespace fv {

std::vector<Sample> slice(const RawSample& raw) {
  if (raw.frames.size() != static_cast<std::size_t>(kRawFrames)) {
    throw Error(Errc::WrongLength,
                "raw sample has " + std::to_string(raw.frames.size()) + " frames, expected " +
                    std::to_string(kRawFrames));
  }
  std::vector<Sample> out;
  out.reserve(kWindowsPerRaw);
  for (int offset = 0; offset < kWindowsPerRaw; ++offset) {
    Sample s;
    s.frames.assign(raw.frames.begin() + offset, raw.frames.begin() + offset + kWindowLength);
    s.label = raw.label;
    s.provenance = {raw.raw_id, offset};
    out.push_back(std::move(s));
  }
  return out;
}

MotionKind motion_kind_for(std::uint64_t raw_id) {
  if (raw_id % 2 == 0) return MotionKind::NonSlipRampHold;
  static constexpr MotionKind kSlipKinds[3] = {MotionKind::TranslationalSlip, MotionKind::RotationalSlip,
                                               MotionKind::IncipientSlip};
  return kSlipKinds[(raw_id / 2) % 3];
}

RawSample generate_raw_sample(const DatasetOptions& options, std::uint64_t raw_id) {
  Rng rng = Rng(options.seed).split(raw_id);
  RawSample raw;
  raw.raw_id = raw_id;
  raw.seed = rng.seed();
  raw.kind = motion_kind_for(raw_id);
  raw.label = label_of(raw.kind);
  const MotionProfile profile = make_profile(raw.kind, options.sensor, options.ranges, rng);
  FieldPipeline pipeline(PipelineSettings{options.detector, options.tracker, options.roi});
  raw.frames.reserve(kRawFrames);
  for (const ContactLoad& load : profile.loads) {
    raw.frames.push_back(pipeline.process(render_frame(options.sensor, load, rng)));
  }
  return raw;
}

std::vector<RawSample> generate_dataset(const DatasetOptions& options) {
  options.sensor.validate();
  std::vector<RawSample> out(options.raw_count);
  const unsigned threads =
      std::max(1u, options.threads ? options.threads : std::thread::hardware_concurrency());
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < out.size(); i = next++) {
      try {
        out[i] = generate_raw_sample(options, i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = out.size();
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);
  return out;
}

const char* to_string(Split split) {
  switch (split) {
    case Split::Unassigned: return "unassigned";
    case Split::Train: return "train";
    case Split::Test: return "test";
  }
  return "unassigned";
}

Split split_from_string(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "test") return Split::Test;
  if (name == "unassigned") return Split::Unassigned;
  throw Error(Errc::Data, "unknown split '" + name + "'");
}

DatasetCounts DatasetManifest::counts() const {
  DatasetCounts c;
  std::set<std::uint64_t> raws;
  for (const SampleRecord& r : records) {
    raws.insert(r.raw_id);
    ++c.samples;
    (r.label == SlipLabel::Slip ? c.slip : c.non_slip) += 1;
    if (r.split == Split::Train) ++c.train;
    if (r.split == Split::Test) ++c.test;
  }
  c.raw = raws.size();
  return c;
}

std::string raw_file_name(std::uint64_t raw_id, const std::string& prefix) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%05llu", static_cast<unsigned long long>(raw_id));
  return prefix + buf + ".fvf";
}

DatasetManifest build_manifest(const std::vector<RawSample>& raws, std::uint64_t seed,
                               const std::string& path_prefix) {
  DatasetManifest manifest;
  manifest.seed = seed;
  for (const RawSample& raw : raws) {
    for (int offset = 0; offset < kWindowsPerRaw; ++offset) {
      manifest.records.push_back({raw_file_name(raw.raw_id, path_prefix), raw.label, raw.raw_id, offset});
    }
  }
  return manifest;
}

SplitManifests split(const DatasetManifest& manifest, double ratio, Rng& rng) {
  // Raw ids per label, in first-appearance order so the shuffle input is canonical.
  std::array<std::vector<std::uint64_t>, 2> by_label;
  std::set<std::uint64_t> seen;
  for (const SampleRecord& r : manifest.records) {
    if (seen.insert(r.raw_id).second) by_label[static_cast<int>(r.label)].push_back(r.raw_id);
  }
  std::set<std::uint64_t> test_ids;
  for (auto& ids : by_label) {
    std::sort(ids.begin(), ids.end());
    rng.shuffle(ids);
    const auto n_test = static_cast<std::size_t>(std::llround((1.0 - ratio) * static_cast<double>(ids.size())));
    test_ids.insert(ids.begin(), ids.begin() + std::min(n_test, ids.size()));
  }
  SplitManifests out;
  out.train.seed = out.test.seed = manifest.seed;
  for (SampleRecord r : manifest.records) {
    if (test_ids.count(r.raw_id)) {
      r.split = Split::Test;
      out.test.records.push_back(std::move(r));
    } else {
      r.split = Split::Train;
      out.train.records.push_back(std::move(r));
    }
  }
  return out;
}

void check_no_leakage(const DatasetManifest& train, const DatasetManifest& test) {
  std::set<std::uint64_t> train_ids;
  for (const SampleRecord& r : train.records) train_ids.insert(r.raw_id);
  for (const SampleRecord& r : test.records) {
    if (train_ids.count(r.raw_id)) {
      throw Error(Errc::Data, "raw sample " + std::to_string(r.raw_id) + " appears in both train and test");
    }
  }
}

// ---------------------------------------------------------------------------

std::vector<float> to_network_layout(std::span<const DeformationField> frames) {
  std::vector<float> out;
  if (frames.empty()) return out;
  const int rows = frames[0].rows();
  const int cols = frames[0].cols();
  const std::size_t plane = static_cast<std::size_t>(rows) * cols;
  out.resize(frames.size() * kFieldChannels * plane);
  for (std::size_t f = 0; f < frames.size(); ++f) {
    if (frames[f].rows() != rows || frames[f].cols() != cols) {
      throw Error(Errc::ShapeMismatch, "frames in a sequence must share the grid size");
    }
    float* dst = out.data() + f * kFieldChannels * plane;
    for (int ch = 0; ch < kFieldChannels; ++ch) {
      for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
          dst[ch * plane + static_cast<std::size_t>(r) * cols + c] = static_cast<float>(frames[f].at(r, c, ch));
        }
      }
    }
  }
  return out;
}

std::size_t TensorDataset::add_raw(const RawSample& raw) {
  if (!raw.frames.empty() && (raw.frames[0].rows() != rows_ || raw.frames[0].cols() != cols_)) {
    throw Error(Errc::ShapeMismatch, "raw sample grid does not match dataset grid");
  }
  const std::vector<float> tensor = to_network_layout(raw.frames);
  raw_start_.push_back(data_.size());
  raw_frames_.push_back(static_cast<int>(raw.frames.size()));
  data_.insert(data_.end(), tensor.begin(), tensor.end());
  labels_.push_back(static_cast<int>(raw.label));
  raw_ids_.push_back(raw.raw_id);
  return labels_.size() - 1;
}

std::span<const float> TensorDataset::sequence(std::size_t item, int seq_len) const {
  const Item& it = items_.at(item);
  if (it.offset + seq_len > raw_frames_[it.raw_index]) {
    throw Error(Errc::WrongLength, "window runs past the end of its raw sample");
  }
  return std::span<const float>(data_).subspan(raw_start_[it.raw_index] + it.offset * frame_size(),
                                               seq_len * frame_size());
}

TensorDataset make_tensor_dataset(const std::vector<RawSample>& raws, const DatasetManifest& manifest) {
  std::map<std::uint64_t, std::size_t> by_id;
  for (std::size_t i = 0; i < raws.size(); ++i) by_id[raws[i].raw_id] = i;
  const int rows = raws.empty() ? kGridSize : raws[0].frames.at(0).rows();
  const int cols = raws.empty() ? kGridSize : raws[0].frames.at(0).cols();
  TensorDataset out(rows, cols);
  std::map<std::uint64_t, std::size_t> added;
  for (const SampleRecord& r : manifest.records) {
    auto found = by_id.find(r.raw_id);
    if (found == by_id.end()) throw Error(Errc::Data, "manifest references unknown raw id " + std::to_string(r.raw_id));
    auto [it, inserted] = added.try_emplace(r.raw_id, 0);
    if (inserted) it->second = out.add_raw(raws[found->second]);
    out.add_item(it->second, r.offset);
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

int argmax(const std::vector<float>& logits) {
  return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

}  // namespace

std::pair<double, double> wilson_interval(std::size_t k, std::size_t n, double z) {
  if (n == 0) return {0.0, 1.0};
  const double p = static_cast<double>(k) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double center = (p + z2 / (2.0 * n)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

EvalResult evaluate_predictions(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size()) throw Error(Errc::ShapeMismatch, "prediction and label counts differ");
  EvalResult out;
  out.total = truth.size();
  for (std::size_t i = 0; i < truth.size(); ++i) {
    out.confusion.at(truth[i]).at(predicted[i]) += 1;
    if (truth[i] == predicted[i]) ++out.correct;
  }
  out.accuracy = out.total ? static_cast<double>(out.correct) / out.total : 0.0;
  std::tie(out.wilson_low, out.wilson_high) = wilson_interval(out.correct, out.total);
  return out;
}

EvalResult evaluate(const NetParams<float>& params, const TensorDataset& test_set) {
  ConvLstmWorkspace<float> ws(params.config);
  std::vector<int> predicted(test_set.size());
  std::vector<int> truth(test_set.size());
  for (std::size_t i = 0; i < test_set.size(); ++i) {
    predicted[i] = argmax(ws.forward(test_set.sequence(i, params.config.seq_len), params));
    truth[i] = test_set.label(i);
  }
  return evaluate_predictions(predicted, truth);
}

TrainResult train(const TensorDataset& train_set, const TensorDataset& test_set, const TrainOptions& options) {
  if (options.steps < 0 || options.batch <= 0) throw Error(Errc::Config, "steps must be >= 0 and batch > 0");
  if (train_set.size() == 0 && options.steps > 0) throw Error(Errc::Data, "empty training set");
  const auto start = std::chrono::steady_clock::now();
  Rng rng(options.seed);
  Rng init_rng = rng.split(0);
  Rng batch_rng = rng.split(1);

  TrainResult result{init_params<float>(options.net, init_rng), {}};
  result.report.options = options;
  AdamState<float> adam(result.params.values.size(), options.learning_rate);
  ConvLstmWorkspace<float> ws(options.net);
  NetParams<float> grads(options.net);

  std::vector<std::size_t> order(train_set.size());
  std::size_t cursor = order.size();
  const float scale = 1.0f / static_cast<float>(options.batch);

  for (int step = 1; step <= options.steps; ++step) {
    std::fill(grads.values.begin(), grads.values.end(), 0.0f);
    double loss = 0.0;
    for (int b = 0; b < options.batch; ++b) {
      if (cursor == order.size()) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        batch_rng.shuffle(order);
        cursor = 0;
      }
      const std::size_t item = order[cursor++];
      loss += ws.accumulate_gradients(train_set.sequence(item, options.net.seq_len), train_set.label(item),
                                      result.params, grads, scale);
    }
    adam_step(result.params, grads, adam);
    result.report.step_loss.push_back(loss / options.batch);
    if (options.eval_every > 0 && step % options.eval_every == 0 && test_set.size() > 0) {
      result.report.test_accuracy.emplace_back(step, evaluate(result.params, test_set).accuracy);
    }
  }
  if (test_set.size() > 0) {
    if (!result.report.test_accuracy.empty() && result.report.test_accuracy.back().first == options.steps) {
      result.report.final_accuracy = result.report.test_accuracy.back().second;
    } else {
      result.report.final_accuracy = evaluate(result.params, test_set).accuracy;
      result.report.test_accuracy.emplace_back(options.steps, result.report.final_accuracy);
    }
  }
  result.report.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

// ---------------------------------------------------------------------------

StreamInfer::StreamInfer(const NetParams<float>& params) : params_(&params), workspace_(params.config) {}

std::optional<double> StreamInfer::push(const DeformationField& field) {
  const NetConfig& cfg = params_->config;
  std::vector<float> frame = to_network_layout(std::span<const DeformationField>(&field, 1));
  if (frame.size() != cfg.frame_size()) throw Error(Errc::ShapeMismatch, "field does not match network input");
  buffer_.push_back(std::move(frame));
  if (buffer_.size() > static_cast<std::size_t>(cfg.seq_len)) buffer_.pop_front();
  if (buffer_.size() < static_cast<std::size_t>(cfg.seq_len)) return std::nullopt;
  sequence_.clear();
  for (const auto& f : buffer_) sequence_.insert(sequence_.end(), f.begin(), f.end());
  const std::vector<float> logits = workspace_.forward(sequence_, *params_);
  const std::vector<float> probs = softmax<float>(logits);
  return probs.at(static_cast<int>(SlipLabel::Slip));
}

void StreamInfer::reset() { buffer_.clear(); }

}  // namespace fv
