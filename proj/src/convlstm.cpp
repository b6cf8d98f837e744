#include "fingervision/convlstm.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace fv {

void NetConfig::validate() const {
  if (in_channels <= 0 || hidden_channels <= 0 || height <= 0 || width <= 0 || seq_len <= 0 || classes <= 0) {
    throw Error(Errc::Config, "network dimensions must be positive");
  }
  if (kernel <= 0 || kernel % 2 == 0) throw Error(Errc::Config, "convolution kernel must be odd");
}

std::size_t param_count(const NetConfig& cfg) {
  const std::size_t k2 = static_cast<std::size_t>(cfg.kernel) * cfg.kernel;
  const std::size_t ch = cfg.hidden_channels;
  const std::size_t lstm = 4 * k2 * (cfg.in_channels + ch) * ch + 4 * ch;
  const std::size_t fc = static_cast<std::size_t>(cfg.height) * cfg.width * ch * cfg.classes + cfg.classes;
  return lstm + fc;
}

namespace {

constexpr const char* kGateNames[4] = {"gate_input", "gate_forget", "gate_cell", "gate_output"};

}  // namespace

std::vector<TensorInfo> param_layout(const NetConfig& cfg) {
  const int k = cfg.kernel;
  const int ch = cfg.hidden_channels;
  std::vector<TensorInfo> out;
  std::size_t offset = 0;
  auto add = [&](std::string name, std::vector<int> shape) {
    std::size_t size = 1;
    for (int d : shape) size *= static_cast<std::size_t>(d);
    out.push_back({std::move(name), std::move(shape), offset, size});
    offset += size;
  };
  for (const char* g : kGateNames) add(std::string(g) + ".w_x", {ch, cfg.in_channels, k, k});
  for (const char* g : kGateNames) add(std::string(g) + ".w_h", {ch, ch, k, k});
  for (const char* g : kGateNames) add(std::string(g) + ".bias", {ch});
  add("fc.w", {cfg.classes, ch * cfg.height * cfg.width});
  add("fc.b", {cfg.classes});
  return out;
}

template <typename T>
NetParams<T>::NetParams(const NetConfig& cfg) : config(cfg) {
  cfg.validate();
  values.assign(param_count(cfg), T{});
}

template <typename T>
std::size_t NetParams<T>::wh_offset() const {
  const std::size_t k2 = static_cast<std::size_t>(config.kernel) * config.kernel;
  return 4 * k2 * config.in_channels * config.hidden_channels;
}

template <typename T>
std::size_t NetParams<T>::bias_offset() const {
  const std::size_t k2 = static_cast<std::size_t>(config.kernel) * config.kernel;
  return wh_offset() + 4 * k2 * config.hidden_channels * config.hidden_channels;
}

template <typename T>
std::size_t NetParams<T>::fc_w_offset() const {
  return bias_offset() + 4 * static_cast<std::size_t>(config.hidden_channels);
}

template <typename T>
std::size_t NetParams<T>::fc_b_offset() const {
  return fc_w_offset() + static_cast<std::size_t>(config.classes) * config.hidden_channels * config.height *
                             config.width;
}

template <typename T>
std::span<T> NetParams<T>::tensor(const std::string& name) {
  for (const TensorInfo& info : param_layout(config)) {
    if (info.name == name) return std::span<T>(values).subspan(info.offset, info.size);
  }
  throw Error(Errc::ShapeMismatch, "no parameter tensor named '" + name + "'");
}

template <typename T>
std::span<const T> NetParams<T>::tensor(const std::string& name) const {
  return const_cast<NetParams<T>*>(this)->tensor(name);
}

template <typename T>
NetParams<T> init_params(const NetConfig& cfg, Rng& rng) {
  NetParams<T> params(cfg);
  const double gate_bound =
      1.0 / std::sqrt(static_cast<double>(cfg.kernel) * cfg.kernel * (cfg.in_channels + cfg.hidden_channels));
  const double fc_bound = 1.0 / std::sqrt(static_cast<double>(cfg.hidden_channels) * cfg.height * cfg.width);
  auto& v = params.values;
  for (std::size_t i = 0; i < params.bias_offset(); ++i) v[i] = static_cast<T>(rng.uniform(-gate_bound, gate_bound));
  const std::size_t ch = cfg.hidden_channels;
  for (std::size_t i = 0; i < ch; ++i) v[params.bias_offset() + ch + i] = T{1};
  for (std::size_t i = params.fc_w_offset(); i < params.fc_b_offset(); ++i) {
    v[i] = static_cast<T>(rng.uniform(-fc_bound, fc_bound));
  }
  return params;
}

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ArrMap = Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>;
template <typename T>
using ConstArrMap = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>;

template <typename T>
MatMap<T> mat(T* data, Eigen::Index rows, Eigen::Index cols, Eigen::Index stride) {
  return MatMap<T>(data, rows, cols, Eigen::OuterStride<>(stride));
}

template <typename T>
ConstMatMap<T> cmat(const T* data, Eigen::Index rows, Eigen::Index cols, Eigen::Index stride) {
  return ConstMatMap<T>(data, rows, cols, Eigen::OuterStride<>(stride));
}

/// Unfolds a [channels, h, w] tensor into rows (c, ky, kx) x columns (y, x)
/// with zero padding; rows are row_stride apart in `out`.
template <typename T>
void im2col(const T* in, int channels, int h, int w, int k, T* out, std::size_t row_stride) {
  const int pad = k / 2;
  for (int c = 0; c < channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* dst = out + static_cast<std::size_t>((c * k + ky) * k + kx) * row_stride;
        const int x_lo = std::max(0, pad - kx);
        const int x_hi = std::min(w, w + pad - kx);
        for (int y = 0; y < h; ++y) {
          T* row = dst + static_cast<std::size_t>(y) * w;
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h) {
            std::fill(row, row + w, T{});
            continue;
          }
          const T* src = in + (static_cast<std::size_t>(c) * h + sy) * w + (kx - pad);
          std::fill(row, row + x_lo, T{});
          std::copy(src + x_lo, src + x_hi, row + x_lo);
          std::fill(row + x_hi, row + w, T{});
        }
      }
    }
  }
}

/// Adjoint of im2col: scatters columns back and adds into a [channels, h, w] tensor.
template <typename T>
void col2im_add(const T* col, int channels, int h, int w, int k, T* out) {
  const int pad = k / 2;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int c = 0; c < channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* src = col + static_cast<std::size_t>((c * k + ky) * k + kx) * hw;
        const int x_lo = std::max(0, pad - kx);
        const int x_hi = std::min(w, w + pad - kx);
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h) continue;
          T* dst = out + (static_cast<std::size_t>(c) * h + sy) * w + (kx - pad);
          const T* row = src + static_cast<std::size_t>(y) * w;
          for (int x = x_lo; x < x_hi; ++x) dst[x] += row[x];
        }
      }
    }
  }
}

/// Applies gate nonlinearities in place on a [4 hidden, hw] block, then
/// writes the new cell state, tanh(cell) and hidden state.
template <typename T>
void gate_step(T* acts, const T* c_prev, T* c_out, T* tanh_c, T* h_out, std::size_t n) {
  ArrMap<T> i(acts, n), f(acts + n, n), g(acts + 2 * n, n), o(acts + 3 * n, n);
  i = (T{1} + (-i).exp()).inverse();
  f = (T{1} + (-f).exp()).inverse();
  g = g.tanh();
  o = (T{1} + (-o).exp()).inverse();
  ArrMap<T> c(c_out, n), tc(tanh_c, n), h(h_out, n);
  if (c_prev) {
    c = f * ConstArrMap<T>(c_prev, n) + i * g;
  } else {
    c = i * g;
  }
  tc = c.tanh();
  h = o * tc;
}

inline void check_size(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw Error(Errc::ShapeMismatch, std::string(what) + ": expected " + std::to_string(want) + " values, got " +
                                         std::to_string(got));
  }
}

}  // namespace

template <typename T>
CellOutput<T> cell_forward(std::span<const T> x, std::span<const T> h_prev, std::span<const T> c_prev,
                           const NetParams<T>& params) {
  const NetConfig& cfg = params.config;
  const int k = cfg.kernel;
  const int ch = cfg.hidden_channels;
  const std::size_t hw = static_cast<std::size_t>(cfg.height) * cfg.width;
  const std::size_t n = ch * hw;
  check_size(x.size(), cfg.frame_size(), "cell input");
  check_size(h_prev.size(), n, "hidden state");
  check_size(c_prev.size(), n, "cell state");

  const int kx = cfg.in_channels * k * k;
  const int kh = ch * k * k;
  AlignedVector<T> col_x(kx * hw), col_h(kh * hw), acts(4 * n);
  im2col(x.data(), cfg.in_channels, cfg.height, cfg.width, k, col_x.data(), hw);
  im2col(h_prev.data(), ch, cfg.height, cfg.width, k, col_h.data(), hw);

  auto a = mat(acts.data(), 4 * ch, hw, hw);
  a.noalias() = cmat(params.values.data() + params.wx_offset(), 4 * ch, kx, kx) * cmat(col_x.data(), kx, hw, hw);
  a.noalias() += cmat(params.values.data() + params.wh_offset(), 4 * ch, kh, kh) * cmat(col_h.data(), kh, hw, hw);
  for (int r = 0; r < 4 * ch; ++r) a.row(r).array() += params.values[params.bias_offset() + r];

  CellOutput<T> out{std::vector<T>(n), std::vector<T>(n)};
  AlignedVector<T> tanh_c(n);
  gate_step(acts.data(), c_prev.data(), out.c.data(), tanh_c.data(), out.h.data(), n);
  return out;
}

template <typename T>
ConvLstmWorkspace<T>::ConvLstmWorkspace(const NetConfig& cfg) : cfg_(cfg) {
  cfg.validate();
  const std::size_t hw = static_cast<std::size_t>(cfg.height) * cfg.width;
  const std::size_t k2 = static_cast<std::size_t>(cfg.kernel) * cfg.kernel;
  const std::size_t ch = cfg.hidden_channels;
  const std::size_t s = cfg.seq_len;
  col_x_.resize(cfg.in_channels * k2 * s * hw);
  pre_x_.resize(4 * ch * s * hw);
  acts_.resize(4 * ch * s * hw);
  cells_.resize(ch * s * hw);
  tanh_c_.resize(ch * s * hw);
  col_h_.resize(ch * k2 * s * hw);
  h_.resize(ch * hw);
  d_acts_.resize(4 * ch * s * hw);
  d_col_.resize(ch * k2 * hw);
  dh_.resize(ch * hw);
  dc_.resize(ch * hw);
}

template <typename T>
void ConvLstmWorkspace<T>::run_forward(std::span<const T> sequence, const NetParams<T>& params) {
  if (!(params.config == cfg_)) throw Error(Errc::ShapeMismatch, "parameters were built for another config");
  check_size(sequence.size(), cfg_.sequence_size(), "sequence");
  const int k = cfg_.kernel;
  const int ch = cfg_.hidden_channels;
  const int s = cfg_.seq_len;
  const std::size_t hw = static_cast<std::size_t>(cfg_.height) * cfg_.width;
  const std::size_t n = ch * hw;
  const int kx = cfg_.in_channels * k * k;
  const int kh = ch * k * k;
  const std::size_t wide = s * hw;

  for (int t = 0; t < s; ++t) {
    im2col(sequence.data() + t * cfg_.frame_size(), cfg_.in_channels, cfg_.height, cfg_.width, k,
           col_x_.data() + t * hw, wide);
  }
  auto pre = mat(pre_x_.data(), 4 * ch, wide, wide);
  pre.noalias() = cmat(params.values.data() + params.wx_offset(), 4 * ch, kx, kx) *
                  cmat(col_x_.data(), kx, wide, wide);
  const auto wh = cmat(params.values.data() + params.wh_offset(), 4 * ch, kh, kh);
  const T* bias = params.values.data() + params.bias_offset();

  for (int t = 0; t < s; ++t) {
    T* acts = acts_.data() + t * 4 * n;
    auto a = mat(acts, 4 * ch, hw, hw);
    a = cmat(pre_x_.data() + t * hw, 4 * ch, hw, wide);
    for (int r = 0; r < 4 * ch; ++r) a.row(r).array() += bias[r];
    if (t > 0) {
      T* col_h = col_h_.data() + t * kh * hw;
      im2col(h_.data(), ch, cfg_.height, cfg_.width, k, col_h, hw);
      a.noalias() += wh * cmat(col_h, kh, hw, hw);
    }
    gate_step(acts, t > 0 ? cells_.data() + (t - 1) * n : nullptr, cells_.data() + t * n,
              tanh_c_.data() + t * n, h_.data(), n);
  }
}

template <typename T>
std::vector<T> ConvLstmWorkspace<T>::forward(std::span<const T> sequence, const NetParams<T>& params) {
  run_forward(sequence, params);
  const std::size_t n = static_cast<std::size_t>(cfg_.hidden_channels) * cfg_.height * cfg_.width;
  std::vector<T> logits(cfg_.classes);
  Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> out(logits.data(), cfg_.classes);
  out.noalias() = cmat(params.values.data() + params.fc_w_offset(), cfg_.classes, n, n) *
                  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(h_.data(), n);
  for (int c = 0; c < cfg_.classes; ++c) logits[c] += params.values[params.fc_b_offset() + c];
  return logits;
}

template <typename T>
T ConvLstmWorkspace<T>::accumulate_gradients(std::span<const T> sequence, int label, const NetParams<T>& params,
                                             NetParams<T>& grads, T scale, std::vector<T>* logits_out) {
  if (label < 0 || label >= cfg_.classes) throw Error(Errc::ShapeMismatch, "label out of range");
  if (!(grads.config == cfg_)) throw Error(Errc::ShapeMismatch, "gradient buffer was built for another config");
  std::vector<T> logits = forward(sequence, params);
  const T loss = cross_entropy<T>(logits, label);
  std::vector<T> dlogits = softmax<T>(logits);
  dlogits[label] -= T{1};
  for (T& d : dlogits) d *= scale;
  if (logits_out) *logits_out = logits;

  const int k = cfg_.kernel;
  const int ch = cfg_.hidden_channels;
  const int s = cfg_.seq_len;
  const std::size_t hw = static_cast<std::size_t>(cfg_.height) * cfg_.width;
  const std::size_t n = ch * hw;
  const int kx = cfg_.in_channels * k * k;
  const int kh = ch * k * k;
  const std::size_t wide = s * hw;
  T* g = grads.values.data();

  // Fully connected head.
  for (int c = 0; c < cfg_.classes; ++c) {
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(g + grads.fc_w_offset() + c * n, n) +=
        dlogits[c] * Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(h_.data(), n);
    g[grads.fc_b_offset() + c] += dlogits[c];
  }
  Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> dh(dh_.data(), n);
  dh.noalias() = cmat(params.values.data() + params.fc_w_offset(), cfg_.classes, n, n).transpose() *
                 Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(dlogits.data(), cfg_.classes);
  std::fill(dc_.begin(), dc_.end(), T{});

  const auto wh = cmat(params.values.data() + params.wh_offset(), 4 * ch, kh, kh);
  auto dwh = mat(g + grads.wh_offset(), 4 * ch, kh, kh);

  for (int t = s - 1; t >= 0; --t) {
    const T* acts = acts_.data() + t * 4 * n;
    ConstArrMap<T> i(acts, n), f(acts + n, n), gg(acts + 2 * n, n), o(acts + 3 * n, n);
    ConstArrMap<T> tc(tanh_c_.data() + t * n, n);
    ArrMap<T> dha(dh_.data(), n), dc(dc_.data(), n);

    // d_acts for step t lives in column block t of the wide matrix.
    auto da = mat(d_acts_.data() + t * hw, 4 * ch, hw, wide);
    dc += dha * o * (T{1} - tc.square());
    for (int r = 0; r < ch; ++r) {
      const std::size_t off = r * hw;
      auto seg = [&](const ConstArrMap<T>& arr) { return arr.segment(off, hw); };
      const auto dcr = dc.segment(off, hw);
      da.row(r).array() = (dcr * seg(gg) * seg(i) * (T{1} - seg(i))).transpose();
      if (t > 0) {
        const ConstArrMap<T> c_prev(cells_.data() + (t - 1) * n, n);
        da.row(ch + r).array() = (dcr * c_prev.segment(off, hw) * seg(f) * (T{1} - seg(f))).transpose();
      } else {
        da.row(ch + r).setZero();
      }
      da.row(2 * ch + r).array() = (dcr * seg(i) * (T{1} - seg(gg).square())).transpose();
      da.row(3 * ch + r).array() =
          (dha.segment(off, hw) * seg(tc) * seg(o) * (T{1} - seg(o))).transpose();
    }
    dc *= f;

    if (t > 0) {
      const auto col_h = cmat(col_h_.data() + t * kh * hw, kh, hw, hw);
      dwh.noalias() += da * col_h.transpose();
      auto dcol = mat(d_col_.data(), kh, hw, hw);
      dcol.noalias() = wh.transpose() * da;
      std::fill(dh_.begin(), dh_.end(), T{});
      col2im_add(d_col_.data(), ch, cfg_.height, cfg_.width, k, dh_.data());
    }
  }

  const auto da_all = cmat(d_acts_.data(), 4 * ch, wide, wide);
  auto dwx = mat(g + grads.wx_offset(), 4 * ch, kx, kx);
  dwx.noalias() += da_all * cmat(col_x_.data(), kx, wide, wide).transpose();
  Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(g + grads.bias_offset(), 4 * ch) += da_all.rowwise().sum();
  return loss;
}

template <typename T>
std::vector<T> forward(std::span<const T> sequence, const NetParams<T>& params) {
  ConvLstmWorkspace<T> ws(params.config);
  return ws.forward(sequence, params);
}

template <typename T>
T cross_entropy(std::span<const T> logits, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size()) {
    throw Error(Errc::ShapeMismatch, "label out of range");
  }
  const T m = *std::max_element(logits.begin(), logits.end());
  T sum{};
  for (T l : logits) sum += std::exp(l - m);
  return m + std::log(sum) - logits[label];
}

template <typename T>
std::vector<T> softmax(std::span<const T> logits) {
  const T m = *std::max_element(logits.begin(), logits.end());
  std::vector<T> out(logits.size());
  T sum{};
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    sum += out[i];
  }
  for (T& p : out) p /= sum;
  return out;
}

template <typename T>
BackwardResult<T> backward(std::span<const T> sequence, int label, const NetParams<T>& params) {
  ConvLstmWorkspace<T> ws(params.config);
  BackwardResult<T> out{T{}, {}, NetParams<T>(params.config)};
  out.loss = ws.accumulate_gradients(sequence, label, params, out.grads, T{1}, &out.logits);
  return out;
}

template <typename T>
void adam_step(NetParams<T>& params, const NetParams<T>& grads, AdamState<T>& state) {
  const std::size_t n = params.values.size();
  if (grads.values.size() != n || state.m.size() != n || state.v.size() != n) {
    throw Error(Errc::ShapeMismatch, "adam_step: parameter, gradient and moment sizes differ");
  }
  ++state.step;
  const double b1 = state.beta1;
  const double b2 = state.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grads.values[i];
    const double m = b1 * state.m[i] + (1.0 - b1) * g;
    const double v = b2 * state.v[i] + (1.0 - b2) * g * g;
    state.m[i] = static_cast<T>(m);
    state.v[i] = static_cast<T>(v);
    const double update = state.learning_rate * (m / c1) / (std::sqrt(v / c2) + state.epsilon);
    params.values[i] = static_cast<T>(params.values[i] - update);
  }
}

#define FV_INSTANTIATE(T)                                                                                       \
  template struct NetParams<T>;                                                                                 \
  template NetParams<T> init_params<T>(const NetConfig&, Rng&);                                                 \
  template CellOutput<T> cell_forward<T>(std::span<const T>, std::span<const T>, std::span<const T>,            \
                                         const NetParams<T>&);                                                  \
  template std::vector<T> forward<T>(std::span<const T>, const NetParams<T>&);                                  \
  template T cross_entropy<T>(std::span<const T>, int);                                                         \
  template std::vector<T> softmax<T>(std::span<const T>);                                                       \
  template BackwardResult<T> backward<T>(std::span<const T>, int, const NetParams<T>&);                         \
  template class ConvLstmWorkspace<T>;                                                                          \
  template void adam_step<T>(NetParams<T>&, const NetParams<T>&, AdamState<T>&);

FV_INSTANTIATE(float)
FV_INSTANTIATE(double)

#undef FV_INSTANTIATE

}  // namespace fv
