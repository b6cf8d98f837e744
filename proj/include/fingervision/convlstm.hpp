#pragma once

// Single-layer convolutional LSTM over a sequence of multi-channel frames,
// followed by a fully connected layer on the flattened final hidden state.
//
//   i = sigmoid(Wxi * x + Whi * h + bi)     f = sigmoid(Wxf * x + Whf * h + bf)
//   g = tanh   (Wxg * x + Whg * h + bg)     o = sigmoid(Wxo * x + Who * h + bo)
//   c' = f . c + i . g                      h' = o . tanh(c')
//
// '*' is a stride-1 "same" convolution, '.' the elementwise product. No
// peephole terms.
//
// Tensor layouts (all row-major):
//   sequence      [seq_len, in_channels, height, width]
//   hidden/cell   [hidden, height, width]
//   w_x           [4 * hidden, in_channels, k, k]  gate blocks in order i, f, g, o
//   w_h           [4 * hidden, hidden, k, k]
//   bias          [4 * hidden]
//   fc.w          [classes, hidden * height * width]
//   fc.b          [classes]
// NetParams stores them back to back in exactly this order; the per-gate
// names reported by param_layout() index into the same buffer.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "fingervision/core.hpp"

namespace fv {

/// Buffers handed to Eigen start on its maximum alignment, so vectorized
/// reductions see the same peeling, and give the same bits, on every run.
template <typename T>
using AlignedVector = std::vector<T, Eigen::aligned_allocator<T>>;

struct NetConfig {
  int in_channels = 3;
  int hidden_channels = 64;
  int kernel = 3;
  int height = kGridSize;
  int width = kGridSize;
  int seq_len = 10;
  int classes = 2;

  void validate() const;
  std::size_t frame_size() const { return static_cast<std::size_t>(in_channels) * height * width; }
  std::size_t sequence_size() const { return frame_size() * seq_len; }

  friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

/// 4 k^2 (C_in + C_h) C_h + 4 C_h + H W C_h classes + classes.
std::size_t param_count(const NetConfig& cfg);

struct TensorInfo {
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
};

/// Named tensors in storage order: gate_{input,forget,cell,output}.w_x, then
/// the four .w_h, then the four .bias, then fc.w and fc.b.
std::vector<TensorInfo> param_layout(const NetConfig& cfg);

template <typename T>
struct NetParams {
  NetConfig config;
  AlignedVector<T> values;

  NetParams() = default;
  explicit NetParams(const NetConfig& cfg);

  std::size_t wx_offset() const { return 0; }
  std::size_t wh_offset() const;
  std::size_t bias_offset() const;
  std::size_t fc_w_offset() const;
  std::size_t fc_b_offset() const;

  std::span<T> tensor(const std::string& name);
  std::span<const T> tensor(const std::string& name) const;

  template <typename U>
  NetParams<U> cast() const {
    NetParams<U> out(config);
    for (std::size_t i = 0; i < values.size(); ++i) out.values[i] = static_cast<U>(values[i]);
    return out;
  }
};

/// Gate kernels uniform in +-1/sqrt(k^2 (C_in + C_h)), FC uniform in
/// +-1/sqrt(fan_in), forget-gate bias +1, other biases 0.
template <typename T>
NetParams<T> init_params(const NetConfig& cfg, Rng& rng);

template <typename T>
struct CellOutput {
  std::vector<T> h;
  std::vector<T> c;
};

/// One recurrent step; x is [in_channels, H, W], h_prev/c_prev [hidden, H, W].
template <typename T>
CellOutput<T> cell_forward(std::span<const T> x, std::span<const T> h_prev, std::span<const T> c_prev,
                           const NetParams<T>& params);

/// Unrolls seq_len steps from zero state and returns class logits.
template <typename T>
std::vector<T> forward(std::span<const T> sequence, const NetParams<T>& params);

/// Softmax cross-entropy via log-sum-exp.
template <typename T>
T cross_entropy(std::span<const T> logits, int label);

template <typename T>
std::vector<T> softmax(std::span<const T> logits);

template <typename T>
struct BackwardResult {
  T loss{};
  std::vector<T> logits;
  NetParams<T> grads;
};

/// Exact gradient of cross_entropy(forward(sequence), label) w.r.t. every
/// parameter, by backpropagation through time.
template <typename T>
BackwardResult<T> backward(std::span<const T> sequence, int label, const NetParams<T>& params);

/// Reusable scratch space for repeated forward/backward passes on one config.
template <typename T>
class ConvLstmWorkspace {
 public:
  explicit ConvLstmWorkspace(const NetConfig& cfg);

  std::vector<T> forward(std::span<const T> sequence, const NetParams<T>& params);
  /// Adds scale * d(loss)/d(params) into grads and returns the unscaled loss.
  T accumulate_gradients(std::span<const T> sequence, int label, const NetParams<T>& params,
                         NetParams<T>& grads, T scale, std::vector<T>* logits_out = nullptr);

 private:
  void run_forward(std::span<const T> sequence, const NetParams<T>& params);

  NetConfig cfg_;
  AlignedVector<T> col_x_;    // [in k k, seq_len * HW]
  AlignedVector<T> pre_x_;    // [4 hidden, seq_len * HW]
  AlignedVector<T> acts_;     // per step [4 hidden, HW]: i, f, g, o
  AlignedVector<T> cells_;    // per step [hidden, HW]
  AlignedVector<T> tanh_c_;   // per step [hidden, HW]
  AlignedVector<T> col_h_;    // per step [hidden k k, HW] of h_{t-1}
  AlignedVector<T> h_;        // [hidden, HW]
  AlignedVector<T> d_acts_;   // [4 hidden, seq_len * HW]
  AlignedVector<T> d_col_;    // [hidden k k, HW]
  AlignedVector<T> dh_;
  AlignedVector<T> dc_;
};

template <typename T>
struct AdamState {
  double learning_rate = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::vector<T> m;
  std::vector<T> v;

  AdamState() = default;
  AdamState(std::size_t n, double lr) : learning_rate(lr), m(n, T{}), v(n, T{}) {}
};

/// Bias-corrected Adam update applied in place.
template <typename T>
void adam_step(NetParams<T>& params, const NetParams<T>& grads, AdamState<T>& state);

}  // namespace fv
