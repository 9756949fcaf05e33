#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "mgt/rng.hpp"
#include "mgt/tensor.hpp"

// Minimal deterministic layer zoo. Training instantiates everything on
// float; the finite-difference verification path instantiates the same
// code on double.
namespace mgt::neural {

enum class Mode { training, inference };

template <typename T>
struct ParamRef {
  std::string name;
  TensorT<T>* value = nullptr;
  TensorT<T>* grad = nullptr;
  bool weight_decay = false;  // L2 applies to weight matrices only
};

// --------------------------------------------------------------- layers

// 1-d convolution along time, stride 1, same zero padding, odd width.
// x: [B,T,Cin] -> [B,T,K]. Weight layout [width, Cin, K] so each tap is a
// contiguous (Cin x K) gemm operand.
template <typename T>
class Conv1d {
 public:
  Conv1d(int in_ch, int out_ch, int width);
  void init(Rng& rng);
  TensorT<T> forward(const TensorT<T>& x, Mode mode);
  TensorT<T> backward(const TensorT<T>& dy);
  std::vector<ParamRef<T>> params(const std::string& prefix);

  int in_ch, out_ch, width;
  TensorT<T> w, b, dw, db;

 private:
  TensorT<T> xpad_;  // [B, T+width-1, Cin]
  int64_t batch_ = 0, time_ = 0;
};

template <typename T>
class Relu {
 public:
  TensorT<T> forward(const TensorT<T>& x, Mode mode);
  TensorT<T> backward(const TensorT<T>& dy);
  // distance from the nearest activation kink in the last forward
  double last_kink_distance() const { return kink_; }

 private:
  TensorT<T> x_;
  double kink_ = std::numeric_limits<double>::infinity();
};

// Per-channel normalization over batch x time with eps 1e-5 and running
// stats at momentum 0.9 (biased batch variance everywhere).
template <typename T>
class BatchNorm1d {
 public:
  explicit BatchNorm1d(int channels);
  void init(Rng& rng);
  TensorT<T> forward(const TensorT<T>& x, Mode mode);
  TensorT<T> backward(const TensorT<T>& dy);
  std::vector<ParamRef<T>> params(const std::string& prefix);

  int channels;
  TensorT<T> gamma, beta, dgamma, dbeta;
  TensorT<T> running_mean, running_var;
  bool initialized = false;  // set after the first training batch or on load

  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.9;

 private:
  TensorT<T> xhat_;
  std::vector<double> inv_std_;
  int64_t batch_ = 0, time_ = 0;
};

// Windowed max along time; trailing remainder frames dropped; gradient goes
// to the first argmax of each window.
template <typename T>
class MaxPool1d {
 public:
  explicit MaxPool1d(int width);
  TensorT<T> forward(const TensorT<T>& x, Mode mode);
  TensorT<T> backward(const TensorT<T>& dy);
  double last_kink_distance() const { return kink_; }

  int width;

 private:
  std::vector<int32_t> argmax_;
  int64_t batch_ = 0, time_in_ = 0, time_out_ = 0, channels_ = 0;
  double kink_ = std::numeric_limits<double>::infinity();
};

// Single-layer LSTM, gate order (i, f, g, o) along the 4H axis, h0 = c0 = 0,
// returns the final hidden state. Backward is full BPTT.
template <typename T>
class Lstm {
 public:
  Lstm(int in_dim, int hidden);
  void init(Rng& rng);
  TensorT<T> forward(const TensorT<T>& x, Mode mode);  // [B,T,C] -> [B,H]
  TensorT<T> backward(const TensorT<T>& dy);           // dy: [B,H]
  std::vector<ParamRef<T>> params(const std::string& prefix);

  int in_dim, hidden;
  TensorT<T> wx, wh, b;  // [C,4H], [H,4H], [4H]
  TensorT<T> dwx, dwh, db;

 private:
  TensorT<T> x_;
  std::vector<T> gates_;  // T x B x 4H, post-activation
  std::vector<T> cell_, tanh_cell_, hidden_seq_;  // T x B x H (hidden_seq has T+1)
  int64_t batch_ = 0, time_ = 0;
};

template <typename T>
class Dense {
 public:
  Dense(int in_dim, int out_dim);
  void init(Rng& rng);
  TensorT<T> forward(const TensorT<T>& x, Mode mode);  // [B,Cin] -> [B,Cout]
  TensorT<T> backward(const TensorT<T>& dy);
  std::vector<ParamRef<T>> params(const std::string& prefix);

  int in_dim, out_dim;
  TensorT<T> w, b, dw, db;

 private:
  TensorT<T> x_;
};

// Inverted dropout; the mask is a pure function of (seed, call counter).
template <typename T>
class Dropout {
 public:
  Dropout(double rate, uint64_t seed);
  TensorT<T> forward(const TensorT<T>& x, Mode mode);
  TensorT<T> backward(const TensorT<T>& dy);
  uint64_t calls() const { return counter_; }

  double rate;
  uint64_t seed;

 private:
  TensorT<T> mask_;
  uint64_t counter_ = 0;
  bool inference_pass_ = false;
};

// ----------------------------------------------------------- loss & adam

template <typename T>
struct SoftmaxResult {
  double loss = 0.0;
  TensorT<T> probs;
};

// Row-stabilized softmax + mean categorical cross-entropy over the batch.
// labels must be one-hot rows.
template <typename T>
SoftmaxResult<T> softmax_cross_entropy(const TensorT<T>& logits, const TensorT<T>& labels);
// d loss / d logits = (probs - labels) / B
template <typename T>
TensorT<T> softmax_cross_entropy_backward(const SoftmaxResult<T>& fwd, const TensorT<T>& labels);

struct AdamConfig {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

// Adam over a fixed set of registered parameters; L2 of strength l2 enters
// as g += l2*theta on weight-decay parameters before the moment update.
class AdamOptimizer {
 public:
  AdamOptimizer(AdamConfig cfg, float l2) : cfg_(cfg), l2_(l2) {}
  void attach(std::vector<ParamRef<float>> refs);
  void step();
  int64_t step_count() const { return step_count_; }

 private:
  AdamConfig cfg_;
  float l2_;
  int64_t step_count_ = 0;
  std::vector<ParamRef<float>> refs_;
  std::vector<Tensor> m_, v_;
};

// ------------------------------------------------------ gradient checking

// Type-erased differentiable block on double, the verification precision.
class DiffBlock {
 public:
  virtual ~DiffBlock() = default;
  virtual TensorT<double> forward(const TensorT<double>& x) = 0;
  virtual TensorT<double> backward(const TensorT<double>& dy) = 0;
  virtual std::vector<ParamRef<double>> params() = 0;
  virtual void zero_grads();
  virtual double last_kink_distance() const {
    return std::numeric_limits<double>::infinity();
  }
};

// Central finite differences (step 1e-5) of a random projection of the
// block output against the analytic gradients; returns the max relative
// error over all parameter and input entries. Inputs landing within 1e-4 of
// an activation kink are resampled.
double gradient_check(DiffBlock& block, const std::vector<int64_t>& input_shape, uint64_t seed);

// Same idea for an arbitrary scalar-valued function (used by the
// cross-entropy and whole-model checks).
double fd_check_scalar(const std::function<double(const TensorT<double>&)>& f,
                       const TensorT<double>& x, const TensorT<double>& analytic_dx);

}  // namespace mgt::neural
