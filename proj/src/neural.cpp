#include "mgt/neural.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>

#include "mgt/error.hpp"
#include "mgt/kernels.hpp"

namespace mgt::neural {
namespace {

template <typename T>
inline T sigmoid(T x) {
  if (x >= T(0)) {
    const T e = std::exp(-x);
    return T(1) / (T(1) + e);
  }
  const T e = std::exp(x);
  return e / (T(1) + e);
}

// out[..., k] += bias[k] over the trailing axis
template <typename T>
void add_bias(TensorT<T>& out, const TensorT<T>& bias) {
  const auto k = static_cast<size_t>(bias.numel());
  T* p = out.ptr();
  const size_t rows = out.data.size() / k;
  for (size_t r = 0; r < rows; ++r, p += k) {
    for (size_t j = 0; j < k; ++j) p[j] += bias.data[j];
  }
}

// db[k] += sum over leading axes of dy[..., k]
template <typename T>
void accumulate_bias_grad(const TensorT<T>& dy, TensorT<T>& db) {
  const auto k = static_cast<size_t>(db.numel());
  const T* p = dy.ptr();
  const size_t rows = dy.data.size() / k;
  for (size_t r = 0; r < rows; ++r, p += k) {
    for (size_t j = 0; j < k; ++j) db.data[j] += p[j];
  }
}

template <typename T>
double uniform_init(Rng& rng, TensorT<T>& t, double bound) {
  for (auto& v : t.data) v = static_cast<T>(rng.uniform(-bound, bound));
  return bound;
}

}  // namespace

// ------------------------------------------------------------------ Conv1d

template <typename T>
Conv1d<T>::Conv1d(int in_ch_, int out_ch_, int width_)
    : in_ch(in_ch_), out_ch(out_ch_), width(width_) {
  if (width % 2 == 0 || width < 1) fail(ErrorKind::config, "conv1d: width must be odd");
  w = TensorT<T>({width, in_ch, out_ch});
  b = TensorT<T>({out_ch});
  dw = TensorT<T>(w.shape);
  db = TensorT<T>(b.shape);
}

template <typename T>
void Conv1d<T>::init(Rng& rng) {
  uniform_init(rng, w, std::sqrt(6.0 / (static_cast<double>(width) * in_ch)));
  b.zero();
}

template <typename T>
TensorT<T> Conv1d<T>::forward(const TensorT<T>& x, Mode) {
  if (x.rank() != 3 || x.dim(2) != in_ch) {
    fail(ErrorKind::data, "conv1d: expected [B,T," + std::to_string(in_ch) + "], got " +
                              x.shape_str());
  }
  batch_ = x.dim(0);
  time_ = x.dim(1);
  const int pad = width / 2;
  xpad_ = TensorT<T>({batch_, time_ + width - 1, in_ch});
  for (int64_t bi = 0; bi < batch_; ++bi) {
    std::memcpy(xpad_.row3(bi, pad), x.row3(bi, 0),
                sizeof(T) * static_cast<size_t>(time_ * in_ch));
  }

  TensorT<T> out({batch_, time_, out_ch});
  add_bias(out, b);
  for (int64_t bi = 0; bi < batch_; ++bi) {
    for (int i = 0; i < width; ++i) {
      kernels::gemm_nn<T>(xpad_.row3(bi, i), w.row3(i, 0), out.row3(bi, 0),
                          static_cast<int>(time_), in_ch, out_ch);
    }
  }
  require_finite(out, "conv1d forward");
  return out;
}

template <typename T>
TensorT<T> Conv1d<T>::backward(const TensorT<T>& dy) {
  accumulate_bias_grad(dy, db);
  TensorT<T> dxpad({batch_, time_ + width - 1, in_ch});
  for (int64_t bi = 0; bi < batch_; ++bi) {
    for (int i = 0; i < width; ++i) {
      // dw[i] += xpad_slice^T * dy ; dxpad_slice += dy * w[i]^T
      kernels::gemm_tn<T>(xpad_.row3(bi, i), dy.row3(bi, 0), dw.row3(i, 0), in_ch,
                          static_cast<int>(time_), out_ch);
      kernels::gemm_nt<T>(dy.row3(bi, 0), w.row3(i, 0), dxpad.row3(bi, i),
                          static_cast<int>(time_), out_ch, in_ch);
    }
  }
  const int pad = width / 2;
  TensorT<T> dx({batch_, time_, in_ch});
  for (int64_t bi = 0; bi < batch_; ++bi) {
    std::memcpy(dx.row3(bi, 0), dxpad.row3(bi, pad),
                sizeof(T) * static_cast<size_t>(time_ * in_ch));
  }
  return dx;
}

template <typename T>
std::vector<ParamRef<T>> Conv1d<T>::params(const std::string& prefix) {
  return {{prefix + ".w", &w, &dw, true}, {prefix + ".b", &b, &db, false}};
}

// -------------------------------------------------------------------- Relu

template <typename T>
TensorT<T> Relu<T>::forward(const TensorT<T>& x, Mode) {
  x_ = x;
  kink_ = std::numeric_limits<double>::infinity();
  for (const T v : x.data) kink_ = std::min(kink_, static_cast<double>(std::fabs(v)));
  TensorT<T> out(x.shape);
  if constexpr (std::is_same_v<T, float>) {
    kernels::ops().relu_f32(x.ptr(), out.ptr(), x.data.size());
  } else {
    for (size_t i = 0; i < x.data.size(); ++i) out.data[i] = x.data[i] > 0 ? x.data[i] : T(0);
  }
  return out;
}

template <typename T>
TensorT<T> Relu<T>::backward(const TensorT<T>& dy) {
  TensorT<T> dx(dy.shape);
  if constexpr (std::is_same_v<T, float>) {
    kernels::ops().relu_bwd_f32(x_.ptr(), dy.ptr(), dx.ptr(), dy.data.size());
  } else {
    for (size_t i = 0; i < dy.data.size(); ++i) dx.data[i] = x_.data[i] > 0 ? dy.data[i] : T(0);
  }
  return dx;
}

// ------------------------------------------------------------- BatchNorm1d

template <typename T>
BatchNorm1d<T>::BatchNorm1d(int channels_) : channels(channels_) {
  gamma = TensorT<T>({channels});
  beta = TensorT<T>({channels});
  dgamma = TensorT<T>({channels});
  dbeta = TensorT<T>({channels});
  running_mean = TensorT<T>({channels});
  running_var = TensorT<T>({channels});
  gamma.fill(T(1));
  running_var.fill(T(1));
}

template <typename T>
void BatchNorm1d<T>::init(Rng&) {
  gamma.fill(T(1));
  beta.zero();
  running_mean.zero();
  running_var.fill(T(1));
  initialized = false;
}

template <typename T>
TensorT<T> BatchNorm1d<T>::forward(const TensorT<T>& x, Mode mode) {
  if (x.rank() != 3 || x.dim(2) != channels) {
    fail(ErrorKind::data, "batchnorm1d: expected [B,T,C], got " + x.shape_str());
  }
  batch_ = x.dim(0);
  time_ = x.dim(1);
  const int64_t n = batch_ * time_;
  TensorT<T> out(x.shape);

  if (mode == Mode::training) {
    if (n < 2) fail(ErrorKind::data, "batchnorm1d: training mode needs batch*time >= 2");
    xhat_ = TensorT<T>(x.shape);
    inv_std_.assign(static_cast<size_t>(channels), 0.0);
    for (int c = 0; c < channels; ++c) {
      double mean = 0.0;
      for (int64_t r = 0; r < n; ++r) mean += x.data[static_cast<size_t>(r) * channels + c];
      mean /= static_cast<double>(n);
      double var = 0.0;
      for (int64_t r = 0; r < n; ++r) {
        const double d = x.data[static_cast<size_t>(r) * channels + c] - mean;
        var += d * d;
      }
      var /= static_cast<double>(n);  // biased, also stored in the running stats
      const double inv = 1.0 / std::sqrt(var + kEps);
      inv_std_[static_cast<size_t>(c)] = inv;
      const double g = gamma.data[static_cast<size_t>(c)];
      const double be = beta.data[static_cast<size_t>(c)];
      for (int64_t r = 0; r < n; ++r) {
        const size_t idx = static_cast<size_t>(r) * channels + c;
        const double xh = (x.data[idx] - mean) * inv;
        xhat_.data[idx] = static_cast<T>(xh);
        out.data[idx] = static_cast<T>(g * xh + be);
      }
      running_mean.data[static_cast<size_t>(c)] =
          static_cast<T>(kMomentum * running_mean.data[static_cast<size_t>(c)] +
                         (1.0 - kMomentum) * mean);
      running_var.data[static_cast<size_t>(c)] =
          static_cast<T>(kMomentum * running_var.data[static_cast<size_t>(c)] +
                         (1.0 - kMomentum) * var);
    }
    initialized = true;
  } else {
    if (!initialized) {
      fail(ErrorKind::data, "batchnorm1d: inference before any training step (no running stats)");
    }
    for (int c = 0; c < channels; ++c) {
      const double inv = 1.0 / std::sqrt(static_cast<double>(running_var.data[static_cast<size_t>(c)]) + kEps);
      const double mean = running_mean.data[static_cast<size_t>(c)];
      const double g = gamma.data[static_cast<size_t>(c)];
      const double be = beta.data[static_cast<size_t>(c)];
      for (int64_t r = 0; r < n; ++r) {
        const size_t idx = static_cast<size_t>(r) * channels + c;
        out.data[idx] = static_cast<T>(g * (x.data[idx] - mean) * inv + be);
      }
    }
  }
  require_finite(out, "batchnorm1d forward");
  return out;
}

template <typename T>
TensorT<T> BatchNorm1d<T>::backward(const TensorT<T>& dy) {
  const int64_t n = batch_ * time_;
  TensorT<T> dx(dy.shape);
  for (int c = 0; c < channels; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int64_t r = 0; r < n; ++r) {
      const size_t idx = static_cast<size_t>(r) * channels + c;
      sum_dy += dy.data[idx];
      sum_dy_xhat += static_cast<double>(dy.data[idx]) * xhat_.data[idx];
    }
    dbeta.data[static_cast<size_t>(c)] += static_cast<T>(sum_dy);
    dgamma.data[static_cast<size_t>(c)] += static_cast<T>(sum_dy_xhat);
    const double g = gamma.data[static_cast<size_t>(c)];
    const double inv = inv_std_[static_cast<size_t>(c)];
    const double mean_dy = sum_dy / static_cast<double>(n);
    const double mean_dy_xhat = sum_dy_xhat / static_cast<double>(n);
    for (int64_t r = 0; r < n; ++r) {
      const size_t idx = static_cast<size_t>(r) * channels + c;
      dx.data[idx] = static_cast<T>(
          g * inv * (dy.data[idx] - mean_dy - xhat_.data[idx] * mean_dy_xhat));
    }
  }
  return dx;
}

template <typename T>
std::vector<ParamRef<T>> BatchNorm1d<T>::params(const std::string& prefix) {
  return {{prefix + ".gamma", &gamma, &dgamma, false}, {prefix + ".beta", &beta, &dbeta, false}};
}

// --------------------------------------------------------------- MaxPool1d

template <typename T>
MaxPool1d<T>::MaxPool1d(int width_) : width(width_) {
  if (width < 1) fail(ErrorKind::config, "maxpool1d: width must be >= 1");
}

template <typename T>
TensorT<T> MaxPool1d<T>::forward(const TensorT<T>& x, Mode) {
  batch_ = x.dim(0);
  time_in_ = x.dim(1);
  channels_ = x.dim(2);
  time_out_ = time_in_ / width;
  TensorT<T> out({batch_, time_out_, channels_});
  argmax_.assign(out.data.size(), 0);
  kink_ = std::numeric_limits<double>::infinity();
  for (int64_t bi = 0; bi < batch_; ++bi) {
    for (int64_t u = 0; u < time_out_; ++u) {
      for (int64_t c = 0; c < channels_; ++c) {
        T best = x.at3(bi, u * width, c);
        T second = -std::numeric_limits<T>::infinity();
        int32_t best_j = 0;
        for (int j = 1; j < width; ++j) {
          const T v = x.at3(bi, u * width + j, c);
          if (v > best) {
            second = best;
            best = v;
            best_j = j;
          } else if (v > second) {
            second = v;
          }
        }
        if (width > 1) kink_ = std::min(kink_, static_cast<double>(best - second));
        out.at3(bi, u, c) = best;
        argmax_[static_cast<size_t>((bi * time_out_ + u) * channels_ + c)] = best_j;
      }
    }
  }
  return out;
}

template <typename T>
TensorT<T> MaxPool1d<T>::backward(const TensorT<T>& dy) {
  TensorT<T> dx({batch_, time_in_, channels_});
  for (int64_t bi = 0; bi < batch_; ++bi) {
    for (int64_t u = 0; u < time_out_; ++u) {
      for (int64_t c = 0; c < channels_; ++c) {
        const int32_t j = argmax_[static_cast<size_t>((bi * time_out_ + u) * channels_ + c)];
        dx.at3(bi, u * width + j, c) += dy.at3(bi, u, c);
      }
    }
  }
  return dx;
}

// -------------------------------------------------------------------- LSTM

template <typename T>
Lstm<T>::Lstm(int in_dim_, int hidden_) : in_dim(in_dim_), hidden(hidden_) {
  wx = TensorT<T>({in_dim, 4 * hidden});
  wh = TensorT<T>({hidden, 4 * hidden});
  b = TensorT<T>({4 * hidden});
  dwx = TensorT<T>(wx.shape);
  dwh = TensorT<T>(wh.shape);
  db = TensorT<T>(b.shape);
}

template <typename T>
void Lstm<T>::init(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  uniform_init(rng, wx, bound);
  uniform_init(rng, wh, bound);
  b.zero();
  // forget-gate bias starts at 1 so early training does not wash the cell out
  for (int j = 0; j < hidden; ++j) b.data[static_cast<size_t>(hidden + j)] = T(1);
}

template <typename T>
TensorT<T> Lstm<T>::forward(const TensorT<T>& x, Mode) {
  if (x.rank() != 3 || x.dim(2) != in_dim) {
    fail(ErrorKind::data, "lstm: expected [B,T," + std::to_string(in_dim) + "], got " +
                              x.shape_str());
  }
  batch_ = x.dim(0);
  time_ = x.dim(1);
  const int64_t bh = batch_ * hidden;
  const int64_t g4 = batch_ * 4 * hidden;
  x_ = x;
  gates_.assign(static_cast<size_t>(time_ * g4), T(0));
  cell_.assign(static_cast<size_t>(time_ * bh), T(0));
  tanh_cell_.assign(static_cast<size_t>(time_ * bh), T(0));
  hidden_seq_.assign(static_cast<size_t>((time_ + 1) * bh), T(0));

  std::vector<T> preact(static_cast<size_t>(g4));
  const int h = hidden;
  for (int64_t t = 0; t < time_; ++t) {
    T* gates = gates_.data() + static_cast<size_t>(t * g4);
    const T* h_prev = hidden_seq_.data() + static_cast<size_t>(t * bh);
    const T* c_prev = (t == 0) ? nullptr : cell_.data() + static_cast<size_t>((t - 1) * bh);

    // x rows at a fixed t are strided by T*C across the batch, so the input
    // projection runs one row at a time; the recurrent projection is batched.
    for (int64_t bi = 0; bi < batch_; ++bi) {
      T* pre_row = preact.data() + static_cast<size_t>(bi * 4 * h);
      std::memcpy(pre_row, b.ptr(), sizeof(T) * static_cast<size_t>(4 * h));
      kernels::gemm_nn<T>(x.row3(bi, t), wx.ptr(), pre_row, 1, in_dim, 4 * h);
    }
    kernels::gemm_nn<T>(h_prev, wh.ptr(), preact.data(), static_cast<int>(batch_), h, 4 * h);

    T* h_cur = hidden_seq_.data() + static_cast<size_t>((t + 1) * bh);
    T* c_cur = cell_.data() + static_cast<size_t>(t * bh);
    T* tc_cur = tanh_cell_.data() + static_cast<size_t>(t * bh);
    for (int64_t bi = 0; bi < batch_; ++bi) {
      const T* p = preact.data() + static_cast<size_t>(bi * 4 * h);
      T* g = gates + static_cast<size_t>(bi * 4 * h);
      for (int j = 0; j < h; ++j) {
        const T gi = sigmoid(p[j]);
        const T gf = sigmoid(p[h + j]);
        const T gg = std::tanh(p[2 * h + j]);
        const T go = sigmoid(p[3 * h + j]);
        g[j] = gi;
        g[h + j] = gf;
        g[2 * h + j] = gg;
        g[3 * h + j] = go;
        const T cp = c_prev ? c_prev[bi * h + j] : T(0);
        const T c = gf * cp + gi * gg;
        const T tc = std::tanh(c);
        c_cur[bi * h + j] = c;
        tc_cur[bi * h + j] = tc;
        h_cur[bi * h + j] = go * tc;
      }
    }
  }
  TensorT<T> out({batch_, hidden});
  std::memcpy(out.ptr(), hidden_seq_.data() + static_cast<size_t>(time_ * bh),
              sizeof(T) * static_cast<size_t>(bh));
  require_finite(out, "lstm forward");
  return out;
}

template <typename T>
TensorT<T> Lstm<T>::backward(const TensorT<T>& dy) {
  const int h = hidden;
  const int64_t bh = batch_ * h;
  const int64_t g4 = batch_ * 4 * h;
  TensorT<T> dx({batch_, time_, in_dim});
  std::vector<T> dh(dy.ptr(), dy.ptr() + bh);
  std::vector<T> dc(static_cast<size_t>(bh), T(0));
  std::vector<T> dgates(static_cast<size_t>(g4));
  std::vector<T> dxt(static_cast<size_t>(batch_ * in_dim));

  for (int64_t t = time_ - 1; t >= 0; --t) {
    const T* g = gates_.data() + static_cast<size_t>(t * g4);
    const T* tc = tanh_cell_.data() + static_cast<size_t>(t * bh);
    const T* c_prev = (t == 0) ? nullptr : cell_.data() + static_cast<size_t>((t - 1) * bh);
    const T* h_prev = hidden_seq_.data() + static_cast<size_t>(t * bh);

    for (int64_t bi = 0; bi < batch_; ++bi) {
      const T* gr = g + static_cast<size_t>(bi * 4 * h);
      T* dgr = dgates.data() + static_cast<size_t>(bi * 4 * h);
      for (int j = 0; j < h; ++j) {
        const T gi = gr[j], gf = gr[h + j], gg = gr[2 * h + j], go = gr[3 * h + j];
        const T tcv = tc[bi * h + j];
        const T dhv = dh[static_cast<size_t>(bi * h + j)];
        T dcv = dc[static_cast<size_t>(bi * h + j)] + dhv * go * (T(1) - tcv * tcv);
        const T cp = c_prev ? c_prev[bi * h + j] : T(0);
        dgr[j] = dcv * gg * gi * (T(1) - gi);               // input gate preact
        dgr[h + j] = dcv * cp * gf * (T(1) - gf);           // forget gate preact
        dgr[2 * h + j] = dcv * gi * (T(1) - gg * gg);       // candidate preact
        dgr[3 * h + j] = dhv * tcv * go * (T(1) - go);      // output gate preact
        dc[static_cast<size_t>(bi * h + j)] = dcv * gf;     // flows to c_{t-1}
      }
    }

    accumulate_bias_grad(TensorT<T>({batch_, 4 * h}, dgates), db);
    // dwh += h_prev^T * dgates ; dh = dgates * wh^T
    kernels::gemm_tn<T>(h_prev, dgates.data(), dwh.ptr(), h, static_cast<int>(batch_), 4 * h);
    std::fill(dh.begin(), dh.end(), T(0));
    kernels::gemm_nt<T>(dgates.data(), wh.ptr(), dh.data(), static_cast<int>(batch_), 4 * h, h);
    // dwx += x_t^T * dgates ; dx_t = dgates * wx^T
    std::fill(dxt.begin(), dxt.end(), T(0));
    for (int64_t bi = 0; bi < batch_; ++bi) {
      kernels::gemm_tn<T>(x_.row3(bi, t), dgates.data() + static_cast<size_t>(bi * 4 * h),
                          dwx.ptr(), in_dim, 1, 4 * h);
      kernels::gemm_nt<T>(dgates.data() + static_cast<size_t>(bi * 4 * h), wx.ptr(),
                          dxt.data() + static_cast<size_t>(bi * in_dim), 1, 4 * h, in_dim);
    }
    for (int64_t bi = 0; bi < batch_; ++bi) {
      std::memcpy(dx.row3(bi, t), dxt.data() + static_cast<size_t>(bi * in_dim),
                  sizeof(T) * static_cast<size_t>(in_dim));
    }
  }
  return dx;
}

template <typename T>
std::vector<ParamRef<T>> Lstm<T>::params(const std::string& prefix) {
  return {{prefix + ".wx", &wx, &dwx, true},
          {prefix + ".wh", &wh, &dwh, true},
          {prefix + ".b", &b, &db, false}};
}

// ------------------------------------------------------------------- Dense

template <typename T>
Dense<T>::Dense(int in_dim_, int out_dim_) : in_dim(in_dim_), out_dim(out_dim_) {
  w = TensorT<T>({in_dim, out_dim});
  b = TensorT<T>({out_dim});
  dw = TensorT<T>(w.shape);
  db = TensorT<T>(b.shape);
}

template <typename T>
void Dense<T>::init(Rng& rng) {
  uniform_init(rng, w, std::sqrt(6.0 / static_cast<double>(in_dim)));
  b.zero();
}

template <typename T>
TensorT<T> Dense<T>::forward(const TensorT<T>& x, Mode) {
  if (x.rank() != 2 || x.dim(1) != in_dim) {
    fail(ErrorKind::data, "dense: expected [B," + std::to_string(in_dim) + "], got " +
                              x.shape_str());
  }
  x_ = x;
  TensorT<T> out({x.dim(0), out_dim});
  add_bias(out, b);
  kernels::gemm_nn<T>(x.ptr(), w.ptr(), out.ptr(), static_cast<int>(x.dim(0)), in_dim, out_dim);
  require_finite(out, "dense forward");
  return out;
}

template <typename T>
TensorT<T> Dense<T>::backward(const TensorT<T>& dy) {
  const int batch = static_cast<int>(x_.dim(0));
  accumulate_bias_grad(dy, db);
  kernels::gemm_tn<T>(x_.ptr(), dy.ptr(), dw.ptr(), in_dim, batch, out_dim);
  TensorT<T> dx({x_.dim(0), in_dim});
  kernels::gemm_nt<T>(dy.ptr(), w.ptr(), dx.ptr(), batch, out_dim, in_dim);
  return dx;
}

template <typename T>
std::vector<ParamRef<T>> Dense<T>::params(const std::string& prefix) {
  return {{prefix + ".w", &w, &dw, true}, {prefix + ".b", &b, &db, false}};
}

// ----------------------------------------------------------------- Dropout

template <typename T>
Dropout<T>::Dropout(double rate_, uint64_t seed_) : rate(rate_), seed(seed_) {
  if (!(rate >= 0.0 && rate < 1.0)) fail(ErrorKind::config, "dropout: rate must be in [0,1)");
}

template <typename T>
TensorT<T> Dropout<T>::forward(const TensorT<T>& x, Mode mode) {
  if (mode == Mode::inference || rate == 0.0) {
    inference_pass_ = true;
    return x;
  }
  inference_pass_ = false;
  Rng rng(mix_seed(seed, counter_++));
  mask_ = TensorT<T>(x.shape);
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  for (auto& m : mask_.data) m = (rng.u01() >= rate) ? keep_scale : T(0);
  TensorT<T> out(x.shape);
  if constexpr (std::is_same_v<T, float>) {
    kernels::ops().mul_f32(x.ptr(), mask_.ptr(), out.ptr(), x.data.size());
  } else {
    for (size_t i = 0; i < x.data.size(); ++i) out.data[i] = x.data[i] * mask_.data[i];
  }
  return out;
}

template <typename T>
TensorT<T> Dropout<T>::backward(const TensorT<T>& dy) {
  if (inference_pass_) return dy;
  TensorT<T> dx(dy.shape);
  for (size_t i = 0; i < dy.data.size(); ++i) dx.data[i] = dy.data[i] * mask_.data[i];
  return dx;
}

// ---------------------------------------------------------------- softmax

template <typename T>
SoftmaxResult<T> softmax_cross_entropy(const TensorT<T>& logits, const TensorT<T>& labels) {
  if (logits.shape != labels.shape || logits.rank() != 2) {
    fail(ErrorKind::data, "softmax_cross_entropy: logits/labels shape mismatch");
  }
  const int64_t batch = logits.dim(0);
  const int64_t k = logits.dim(1);
  SoftmaxResult<T> res;
  res.probs = TensorT<T>(logits.shape);
  double loss = 0.0;
  for (int64_t r = 0; r < batch; ++r) {
    const T* row = logits.ptr() + r * k;
    const T* lab = labels.ptr() + r * k;
    int true_idx = -1;
    T lab_sum = 0;
    for (int64_t j = 0; j < k; ++j) {
      if (lab[j] != T(0) && lab[j] != T(1)) {
        fail(ErrorKind::data, "softmax_cross_entropy: labels must be one-hot");
      }
      if (lab[j] == T(1)) true_idx = static_cast<int>(j);
      lab_sum += lab[j];
    }
    if (lab_sum != T(1)) fail(ErrorKind::data, "softmax_cross_entropy: labels must be one-hot");

    T mx = row[0];
    for (int64_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (int64_t j = 0; j < k; ++j) denom += std::exp(static_cast<double>(row[j] - mx));
    T* prow = res.probs.ptr() + r * k;
    for (int64_t j = 0; j < k; ++j) {
      prow[j] = static_cast<T>(std::exp(static_cast<double>(row[j] - mx)) / denom);
    }
    loss -= std::log(std::exp(static_cast<double>(row[true_idx] - mx)) / denom);
  }
  res.loss = loss / static_cast<double>(batch);
  if (!std::isfinite(res.loss)) fail(ErrorKind::numeric, "softmax_cross_entropy: non-finite loss");
  return res;
}

template <typename T>
TensorT<T> softmax_cross_entropy_backward(const SoftmaxResult<T>& fwd, const TensorT<T>& labels) {
  TensorT<T> grad(fwd.probs.shape);
  const T inv_b = static_cast<T>(1.0 / static_cast<double>(fwd.probs.dim(0)));
  for (size_t i = 0; i < grad.data.size(); ++i) {
    grad.data[i] = (fwd.probs.data[i] - labels.data[i]) * inv_b;
  }
  return grad;
}

// ------------------------------------------------------------------- Adam

void AdamOptimizer::attach(std::vector<ParamRef<float>> refs) {
  refs_ = std::move(refs);
  m_.clear();
  v_.clear();
  for (const auto& r : refs_) {
    m_.emplace_back(r.value->shape);
    v_.emplace_back(r.value->shape);
  }
}

void AdamOptimizer::step() {
  ++step_count_;
  const auto t = static_cast<double>(step_count_);
  kernels::AdamScalars s;
  s.lr = cfg_.lr;
  s.beta1 = cfg_.beta1;
  s.beta2 = cfg_.beta2;
  s.eps = cfg_.eps;
  s.bc1 = static_cast<float>(1.0 / (1.0 - std::pow(static_cast<double>(cfg_.beta1), t)));
  s.bc2 = static_cast<float>(1.0 / (1.0 - std::pow(static_cast<double>(cfg_.beta2), t)));
  for (size_t i = 0; i < refs_.size(); ++i) {
    s.l2 = refs_[i].weight_decay ? l2_ : 0.0f;
    kernels::ops().adam_f32(refs_[i].value->ptr(), refs_[i].grad->ptr(), m_[i].ptr(), v_[i].ptr(),
                            refs_[i].value->data.size(), s);
  }
}

// -------------------------------------------------------- gradient checks

void DiffBlock::zero_grads() {
  for (auto& p : params()) p.grad->zero();
}

double gradient_check(DiffBlock& block, const std::vector<int64_t>& input_shape, uint64_t seed) {
  constexpr double kStep = 1e-5;
  constexpr double kKinkGuard = 1e-4;
  Rng rng(seed);
  TensorT<double> x(input_shape);
  for (int attempt = 0; attempt < 100; ++attempt) {
    for (auto& v : x.data) v = rng.uniform(-1.0, 1.0);
    block.forward(x);
    if (block.last_kink_distance() >= kKinkGuard) break;
  }

  block.zero_grads();
  TensorT<double> out = block.forward(x);
  TensorT<double> projection(out.shape);
  for (auto& v : projection.data) v = rng.uniform(-1.0, 1.0);
  const TensorT<double> dx = block.backward(projection);

  auto loss = [&]() {
    const TensorT<double> y = block.forward(x);
    double acc = 0.0;
    for (size_t i = 0; i < y.data.size(); ++i) acc += y.data[i] * projection.data[i];
    return acc;
  };

  double worst = 0.0;
  auto probe = [&](double* slot, double analytic) {
    const double orig = *slot;
    *slot = orig + kStep;
    const double lp = loss();
    *slot = orig - kStep;
    const double lm = loss();
    *slot = orig;
    const double numeric = (lp - lm) / (2.0 * kStep);
    if (!std::isfinite(numeric)) fail(ErrorKind::numeric, "gradient_check: non-finite loss");
    const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
    worst = std::max(worst, std::fabs(analytic - numeric) / denom);
  };

  for (auto& p : block.params()) {
    for (size_t i = 0; i < p.value->data.size(); ++i) {
      probe(&p.value->data[i], p.grad->data[i]);
    }
  }
  for (size_t i = 0; i < x.data.size(); ++i) probe(&x.data[i], dx.data[i]);
  return worst;
}

double fd_check_scalar(const std::function<double(const TensorT<double>&)>& f,
                       const TensorT<double>& x0, const TensorT<double>& analytic_dx) {
  constexpr double kStep = 1e-5;
  TensorT<double> x = x0;
  double worst = 0.0;
  for (size_t i = 0; i < x.data.size(); ++i) {
    const double orig = x.data[i];
    x.data[i] = orig + kStep;
    const double lp = f(x);
    x.data[i] = orig - kStep;
    const double lm = f(x);
    x.data[i] = orig;
    const double numeric = (lp - lm) / (2.0 * kStep);
    const double analytic = analytic_dx.data[i];
    const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
    worst = std::max(worst, std::fabs(analytic - numeric) / denom);
  }
  return worst;
}

// ---------------------------------------------------------- instantiation

template class Conv1d<float>;
template class Conv1d<double>;
template class Relu<float>;
template class Relu<double>;
template class BatchNorm1d<float>;
template class BatchNorm1d<double>;
template class MaxPool1d<float>;
template class MaxPool1d<double>;
template class Lstm<float>;
template class Lstm<double>;
template class Dense<float>;
template class Dense<double>;
template class Dropout<float>;
template class Dropout<double>;
template SoftmaxResult<float> softmax_cross_entropy(const TensorT<float>&, const TensorT<float>&);
template SoftmaxResult<double> softmax_cross_entropy(const TensorT<double>&,
                                                     const TensorT<double>&);
template TensorT<float> softmax_cross_entropy_backward(const SoftmaxResult<float>&,
                                                       const TensorT<float>&);
template TensorT<double> softmax_cross_entropy_backward(const SoftmaxResult<double>&,
                                                        const TensorT<double>&);

}  // namespace mgt::neural
