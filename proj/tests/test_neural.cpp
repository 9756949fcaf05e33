#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mgt/error.hpp"
#include "mgt/neural.hpp"
#include "mgt/rng.hpp"

using namespace mgt;
using namespace mgt::neural;

namespace {

// DiffBlock adapters for the double-precision verification path.
template <typename Layer>
class LayerBlock : public DiffBlock {
 public:
  template <typename... Args>
  explicit LayerBlock(uint64_t seed, Args&&... args) : layer_(std::forward<Args>(args)...) {
    Rng rng(seed);
    if constexpr (requires(Layer & l, Rng & r) { l.init(r); }) layer_.init(rng);
  }
  TensorT<double> forward(const TensorT<double>& x) override {
    return layer_.forward(x, Mode::training);
  }
  TensorT<double> backward(const TensorT<double>& dy) override { return layer_.backward(dy); }
  std::vector<ParamRef<double>> params() override {
    if constexpr (requires(Layer & l) { l.params(""); }) {
      return layer_.params("p");
    } else {
      return {};
    }
  }
  double last_kink_distance() const override {
    if constexpr (requires(const Layer& l) { l.last_kink_distance(); }) {
      return layer_.last_kink_distance();
    } else {
      return std::numeric_limits<double>::infinity();
    }
  }
  Layer& layer() { return layer_; }

 private:
  Layer layer_;
};

template <typename T>
TensorT<T> one_hot(const std::vector<int>& labels, int k) {
  TensorT<T> t({static_cast<int64_t>(labels.size()), k});
  for (size_t i = 0; i < labels.size(); ++i) t.data[i * k + static_cast<size_t>(labels[i])] = T(1);
  return t;
}

}  // namespace

// ------------------------------------------------------------------ conv1d

TEST_CASE("conv1d: width-1 identity kernel") {
  Conv1d<float> conv(1, 1, 1);
  conv.w.data = {1.0f};
  conv.b.data = {0.0f};
  Tensor x({1, 5, 1}, {1, 2, 3, 4, 5});
  Tensor y = conv.forward(x, Mode::training);
  CHECK(y.shape == x.shape);
  CHECK(y.data == x.data);
}

TEST_CASE("conv1d: hand convolution with same padding") {
  // x = [1,2,3,4], taps [1,0,-1], zero-padded ends -> [-2,-2,-2,3]
  Conv1d<float> conv(1, 1, 3);
  conv.w.data = {1.0f, 0.0f, -1.0f};  // [width=3][Cin=1][K=1]
  conv.b.data = {0.0f};
  Tensor x({1, 4, 1}, {1, 2, 3, 4});
  Tensor y = conv.forward(x, Mode::training);
  REQUIRE(y.numel() == 4);
  CHECK(y.data[0] == -2.0f);
  CHECK(y.data[1] == -2.0f);
  CHECK(y.data[2] == -2.0f);
  CHECK(y.data[3] == 3.0f);
}

TEST_CASE("conv1d: pipeline-scale shape arithmetic") {
  Conv1d<float> conv(128, 64, 5);
  Rng rng(9);
  conv.init(rng);
  Tensor x({32, 640, 128});
  for (auto& v : x.data) v = static_cast<float>(rng.uniform(-1, 1));
  Tensor y = conv.forward(x, Mode::training);
  CHECK(y.shape == std::vector<int64_t>{32, 640, 64});
}

TEST_CASE("conv1d: channel mismatch raises shape error") {
  Conv1d<float> conv(8, 4, 3);
  Tensor x({2, 10, 7});
  CHECK_THROWS_AS(conv.forward(x, Mode::training), Error);
  CHECK_THROWS_AS(Conv1d<float>(4, 4, 2), Error);  // even width
}

TEST_CASE("conv1d: gradient check") {
  LayerBlock<Conv1d<double>> block(42, 3, 5, 3);
  CHECK(gradient_check(block, {2, 7, 3}, 1001) < 1e-4);
}

// -------------------------------------------------------------------- relu

TEST_CASE("relu: forward/backward and off-kink gradients") {
  LayerBlock<Relu<double>> block(0);
  CHECK(gradient_check(block, {4, 9}, 7) < 1e-6);

  Relu<float> r;
  Tensor x({1, 4}, {-2.0f, -0.5f, 0.5f, 2.0f});
  Tensor y = r.forward(x, Mode::training);
  CHECK(y.data == std::vector<float>{0.0f, 0.0f, 0.5f, 2.0f});
  Tensor dy({1, 4}, {1, 1, 1, 1});
  Tensor dx = r.backward(dy);
  CHECK(dx.data == std::vector<float>{0.0f, 0.0f, 1.0f, 1.0f});
}

// -------------------------------------------------------------- batchnorm

TEST_CASE("batchnorm1d: zero-variance channel collapses to beta") {
  BatchNorm1d<float> bn(2);
  bn.beta.data = {0.25f, -0.75f};
  Tensor x({2, 3, 2});
  for (int64_t r = 0; r < 6; ++r) {
    x.data[static_cast<size_t>(r) * 2 + 0] = 5.0f;  // constant channel
    x.data[static_cast<size_t>(r) * 2 + 1] = 5.0f;
  }
  Tensor y = bn.forward(x, Mode::training);
  for (int64_t r = 0; r < 6; ++r) {
    CHECK(y.data[static_cast<size_t>(r) * 2 + 0] == doctest::Approx(0.25f));
    CHECK(y.data[static_cast<size_t>(r) * 2 + 1] == doctest::Approx(-0.75f));
  }
}

TEST_CASE("batchnorm1d: training output is standardized per channel") {
  BatchNorm1d<float> bn(3);
  Rng rng(17);
  Tensor x({4, 5, 3});
  for (auto& v : x.data) v = static_cast<float>(rng.uniform(-3.0, 7.0));
  Tensor y = bn.forward(x, Mode::training);  // gamma=1, beta=0
  for (int c = 0; c < 3; ++c) {
    double mean = 0.0, var = 0.0;
    for (int64_t r = 0; r < 20; ++r) mean += y.data[static_cast<size_t>(r) * 3 + c];
    mean /= 20.0;
    for (int64_t r = 0; r < 20; ++r) {
      const double d = y.data[static_cast<size_t>(r) * 3 + c] - mean;
      var += d * d;
    }
    var /= 20.0;
    CHECK(std::fabs(mean) < 1e-6);
    CHECK(std::fabs(var - 1.0) < 1e-4);  // eps shifts variance slightly below 1
  }
}

TEST_CASE("batchnorm1d: inference uses running stats (hand formula)") {
  BatchNorm1d<float> bn(1);
  bn.running_mean.data = {2.0f};
  bn.running_var.data = {4.0f};
  bn.initialized = true;
  Tensor x({1, 1, 1}, {4.0f});
  Tensor y = bn.forward(x, Mode::inference);
  CHECK(y.data[0] == doctest::Approx((4.0 - 2.0) / std::sqrt(4.0 + 1e-5)).epsilon(1e-7));
  CHECK(y.data[0] == doctest::Approx(0.99999).epsilon(1e-5));
}

TEST_CASE("batchnorm1d: inference before training is an error") {
  BatchNorm1d<float> bn(2);
  Tensor x({1, 2, 2});
  CHECK_THROWS_WITH_AS(bn.forward(x, Mode::inference), doctest::Contains("inference before"),
                       Error);
  CHECK_THROWS_AS(bn.forward(Tensor({1, 1, 2}), Mode::training), Error);  // B*T < 2
}

TEST_CASE("batchnorm1d: gradient check (training mode)") {
  LayerBlock<BatchNorm1d<double>> block(3, 4);
  auto& bn = block.layer();
  Rng rng(12);
  for (auto& g : bn.gamma.data) g = rng.uniform(0.5, 1.5);
  for (auto& b : bn.beta.data) b = rng.uniform(-0.5, 0.5);
  CHECK(gradient_check(block, {3, 5, 4}, 2024) < 1e-4);
}

// ----------------------------------------------------------------- maxpool

TEST_CASE("maxpool1d: windowed maximum") {
  MaxPool1d<float> pool(2);
  Tensor x({1, 4, 1}, {1, 3, 2, 5});
  Tensor y = pool.forward(x, Mode::training);
  CHECK(y.shape == std::vector<int64_t>{1, 2, 1});
  CHECK(y.data == std::vector<float>{3, 5});

  Tensor c({1, 7, 1});
  c.fill(0.4f);
  Tensor yc = pool.forward(c, Mode::training);
  CHECK(yc.shape == std::vector<int64_t>{1, 3, 1});  // trailing frame dropped
  for (float v : yc.data) CHECK(v == 0.4f);
}

TEST_CASE("maxpool1d: gradient routes to first argmax only") {
  MaxPool1d<float> pool(3);
  Tensor x({1, 6, 1}, {1.0f, 7.0f, 7.0f, 0.0f, -1.0f, -2.0f});
  pool.forward(x, Mode::training);
  Tensor dy({1, 2, 1}, {10.0f, 20.0f});
  Tensor dx = pool.backward(dy);
  CHECK(dx.data == std::vector<float>{0, 10, 0, 20, 0, 0});  // tie -> first index
}

TEST_CASE("maxpool1d: finite-difference check off kinks") {
  LayerBlock<MaxPool1d<double>> block(0, 2);
  CHECK(gradient_check(block, {2, 8, 3}, 77) < 1e-6);
}

// -------------------------------------------------------------------- lstm

TEST_CASE("lstm: zero parameters give exactly zero final hidden state") {
  Lstm<float> lstm(3, 4);
  Tensor x({2, 5, 3});
  Rng rng(5);
  for (auto& v : x.data) v = static_cast<float>(rng.uniform(-1, 1));
  Tensor h = lstm.forward(x, Mode::training);
  CHECK(h.shape == std::vector<int64_t>{2, 4});
  for (float v : h.data) CHECK(v == 0.0f);
}

TEST_CASE("lstm: scalar gate equations against a hand computation") {
  // All weights zero; b_i = b_o = 20 (gates ~1), b_g leaves g = tanh(1).
  Lstm<double> lstm(1, 1);
  lstm.b.data = {20.0, 0.0, 1.0, 20.0};  // order (i, f, g, o)
  TensorT<double> x({1, 1, 1}, {0.123});  // weights are zero, input is ignored
  TensorT<double> h = lstm.forward(x, Mode::training);

  // oracle: scalar evaluation of the gate equations
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  const double gi = sig(20.0), gg = std::tanh(1.0), go = sig(20.0);
  const double c = gi * gg;
  const double expect = go * std::tanh(c);
  CHECK(h.data[0] == doctest::Approx(expect).epsilon(1e-9));
  CHECK(h.data[0] == doctest::Approx(std::tanh(std::tanh(1.0))).epsilon(1e-6));
  CHECK(h.data[0] == doctest::Approx(0.6434).epsilon(1e-3));
}

TEST_CASE("lstm: hidden-size contract 128 -> 96") {
  Lstm<float> lstm(128, 96);
  Rng rng(31);
  lstm.init(rng);
  Tensor x({3, 4, 128});
  for (auto& v : x.data) v = static_cast<float>(rng.uniform(-1, 1));
  Tensor h = lstm.forward(x, Mode::training);
  CHECK(h.shape == std::vector<int64_t>{3, 96});
}

TEST_CASE("lstm: BPTT gradient check over T=7") {
  LayerBlock<Lstm<double>> block(99, 3, 4);
  CHECK(gradient_check(block, {2, 7, 3}, 3001) < 1e-4);
}

// ------------------------------------------------------------------- dense

TEST_CASE("dense: identity and hand-computed affine map") {
  Dense<float> id(2, 2);
  id.w.data = {1, 0, 0, 1};
  Tensor x({1, 2}, {3.5f, -1.25f});
  CHECK(id.forward(x, Mode::training).data == x.data);

  Dense<float> d(2, 2);
  d.w.data = {1, 0, 0, -1};  // [Cin,Cout], column j: output j
  d.b.data = {0.5f, 0.5f};
  Tensor x2({1, 2}, {1.0f, 2.0f});
  Tensor y = d.forward(x2, Mode::training);
  CHECK(y.data[0] == 1.5f);
  CHECK(y.data[1] == -1.5f);
}

TEST_CASE("dense: 96 -> 64 shape contract and gradient check") {
  Dense<float> d(96, 64);
  Rng rng(8);
  d.init(rng);
  Tensor x({5, 96});
  for (auto& v : x.data) v = static_cast<float>(rng.uniform(-1, 1));
  CHECK(d.forward(x, Mode::training).shape == std::vector<int64_t>{5, 64});

  LayerBlock<Dense<double>> block(123, 6, 4);
  CHECK(gradient_check(block, {3, 6}, 55) < 1e-6);
}

// ----------------------------------------------------------------- softmax

TEST_CASE("softmax_cross_entropy: uniform, saturated, and row-sum invariant") {
  Tensor logits({2, 8});
  Tensor labels = one_hot<float>({3, 5}, 8);
  auto res = softmax_cross_entropy(logits, labels);
  CHECK(res.loss == doctest::Approx(std::log(8.0)).epsilon(1e-12));
  for (float p : res.probs.data) CHECK(p == doctest::Approx(0.125).epsilon(1e-12));

  Tensor hot({1, 4}, {50.0f, 0.0f, 0.0f, 0.0f});
  auto sat = softmax_cross_entropy(hot, one_hot<float>({0}, 4));
  CHECK(sat.loss < 1e-9);

  // Row sums: 1e-12 on the 64-bit verification path; float rounding alone
  // costs ~1e-8, so the 32-bit training path gets a float-width bound.
  Rng rng(2);
  Tensor rnd({5, 6});
  TensorT<double> rnd64({5, 6});
  for (size_t i = 0; i < rnd.data.size(); ++i) {
    rnd64.data[i] = rng.uniform(-4, 4);
    rnd.data[i] = static_cast<float>(rnd64.data[i]);
  }
  auto rres = softmax_cross_entropy(rnd, one_hot<float>({0, 1, 2, 3, 4}, 6));
  auto rres64 = softmax_cross_entropy(rnd64, one_hot<double>({0, 1, 2, 3, 4}, 6));
  for (int64_t r = 0; r < 5; ++r) {
    double row32 = 0.0, row64 = 0.0;
    for (int64_t j = 0; j < 6; ++j) {
      const float p = rres.probs.at2(r, j);
      CHECK(p > 0.0f);
      CHECK(p < 1.0f);
      row32 += p;
      row64 += rres64.probs.at2(r, j);
    }
    CHECK(std::fabs(row32 - 1.0) < 1e-6);
    CHECK(std::fabs(row64 - 1.0) < 1e-12);
  }
}

TEST_CASE("softmax_cross_entropy: non-one-hot labels rejected") {
  Tensor logits({1, 3});
  Tensor bad({1, 3}, {0.5f, 0.5f, 0.0f});
  CHECK_THROWS_AS(softmax_cross_entropy(logits, bad), Error);
  Tensor two({1, 3}, {1.0f, 1.0f, 0.0f});
  CHECK_THROWS_AS(softmax_cross_entropy(logits, two), Error);
}

TEST_CASE("softmax_cross_entropy: gradient matches finite differences") {
  Rng rng(62);
  TensorT<double> logits({2, 4});
  for (auto& v : logits.data) v = rng.uniform(-2, 2);
  TensorT<double> labels = one_hot<double>({1, 3}, 4);

  auto fwd = softmax_cross_entropy(logits, labels);
  TensorT<double> analytic = softmax_cross_entropy_backward(fwd, labels);
  const double err = fd_check_scalar(
      [&](const TensorT<double>& l) { return softmax_cross_entropy(l, labels).loss; }, logits,
      analytic);
  CHECK(err < 1e-6);
}

// ----------------------------------------------------------------- dropout

TEST_CASE("dropout: identity cases") {
  Dropout<float> zero_rate(0.0, 1);
  Tensor x({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(zero_rate.forward(x, Mode::training).data == x.data);

  Dropout<float> d(0.9, 1);
  CHECK(d.forward(x, Mode::inference).data == x.data);
  CHECK_THROWS_AS(Dropout<float>(1.0, 1), Error);
}

TEST_CASE("dropout: survivor scaling keeps the mean (law of large numbers)") {
  Dropout<float> d(0.3, 99);
  Tensor x({100000});
  x.fill(1.0f);
  Tensor y = d.forward(x, Mode::training);
  double mean = 0.0;
  for (float v : y.data) mean += v;
  mean /= static_cast<double>(y.numel());
  CHECK(mean > 0.98);
  CHECK(mean < 1.02);
}

TEST_CASE("dropout: mask is a pure function of seed and call counter") {
  Tensor x({512});
  x.fill(2.0f);
  Dropout<float> a(0.4, 7);
  Dropout<float> b(0.4, 7);
  Tensor ya1 = a.forward(x, Mode::training);
  Tensor ya2 = a.forward(x, Mode::training);
  Tensor yb1 = b.forward(x, Mode::training);
  Tensor yb2 = b.forward(x, Mode::training);
  CHECK(ya1.data == yb1.data);          // same seed, same counter
  CHECK(ya2.data == yb2.data);
  CHECK(ya1.data != ya2.data);          // counter advanced
  Dropout<float> c(0.4, 8);
  CHECK(c.forward(x, Mode::training).data != ya1.data);  // different seed
}

// -------------------------------------------------------------------- adam

TEST_CASE("adam: zero gradient leaves fresh parameters unchanged") {
  Tensor p({8});
  for (size_t i = 0; i < 8; ++i) p.data[i] = static_cast<float>(i) - 3.5f;
  Tensor g({8});
  const Tensor before = p;
  AdamOptimizer opt({}, /*l2=*/0.0f);
  opt.attach({{"p", &p, &g, true}});
  opt.step();
  CHECK(p.data == before.data);
}

TEST_CASE("adam: first-step magnitude is ~lr (hand evaluation at t=1)") {
  Tensor p({4});
  Tensor g({4});
  g.fill(0.73f);
  AdamConfig cfg;
  AdamOptimizer opt(cfg, 0.0f);
  opt.attach({{"p", &p, &g, false}});
  opt.step();
  // m_hat = g, v_hat = g^2 at t=1, so the update is lr*g/(|g|+eps)
  for (float v : p.data) {
    CHECK(v == doctest::Approx(-1e-3 * 0.73 / (0.73 + 1e-8)).epsilon(1e-6));
    CHECK(std::fabs(v) == doctest::Approx(1e-3).epsilon(1e-4));
  }
}

TEST_CASE("adam: deterministic across runs") {
  auto run = [] {
    Rng rng(4);
    Tensor p({16});
    for (auto& v : p.data) v = static_cast<float>(rng.uniform(-1, 1));
    Tensor g({16});
    AdamOptimizer opt({}, 1e-4f);
    opt.attach({{"p", &p, &g, true}});
    for (int it = 0; it < 50; ++it) {
      for (size_t i = 0; i < 16; ++i) {
        g.data[i] = 0.1f * p.data[i] + static_cast<float>(rng.uniform(-0.01, 0.01));
      }
      opt.step();
    }
    return p.data;
  };
  CHECK(run() == run());
}

// -------------------------------------------------- composed-model checks

namespace {

// Tiny CRNN on double for the end-to-end gradient check:
// conv -> relu -> bn -> pool -> lstm -> dense -> softmax.
struct TinyCrnn {
  Conv1d<double> conv{8, 6, 3};
  Relu<double> relu;
  BatchNorm1d<double> bn{6};
  MaxPool1d<double> pool{2};
  Lstm<double> lstm{6, 4};
  Dense<double> dense{4, 3};

  explicit TinyCrnn(uint64_t seed) {
    Rng rng(seed);
    conv.init(rng);
    bn.init(rng);
    lstm.init(rng);
    dense.init(rng);
  }

  TensorT<double> forward(const TensorT<double>& x) {
    auto h = conv.forward(x, Mode::training);
    h = relu.forward(h, Mode::training);
    h = bn.forward(h, Mode::training);
    h = pool.forward(h, Mode::training);
    auto v = lstm.forward(h, Mode::training);
    return dense.forward(v, Mode::training);
  }

  TensorT<double> backward(const TensorT<double>& dlogits) {
    auto d = dense.backward(dlogits);
    d = lstm.backward(d);
    d = pool.backward(d);
    d = bn.backward(d);
    d = relu.backward(d);
    return conv.backward(d);
  }

  std::vector<ParamRef<double>> params() {
    std::vector<ParamRef<double>> out;
    for (auto& p : conv.params("conv")) out.push_back(p);
    for (auto& p : bn.params("bn")) out.push_back(p);
    for (auto& p : lstm.params("lstm")) out.push_back(p);
    for (auto& p : dense.params("dense")) out.push_back(p);
    return out;
  }
};

}  // namespace

TEST_CASE("composition: tiny CRNN forward stays finite over 1000 seeded trials") {
  TinyCrnn net(11);
  for (uint64_t trial = 0; trial < 1000; ++trial) {
    Rng rng(trial + 1);
    TensorT<double> x({1, 8, 8});
    for (auto& v : x.data) v = rng.uniform(-5.0, 5.0);
    TensorT<double> logits = net.forward(x);
    for (double v : logits.data) CHECK(std::isfinite(v));
  }
}

TEST_CASE("composition: end-to-end gradient check on a tiny CRNN (T=32, M=8, H=4, K=3)") {
  TinyCrnn net(21);
  Rng rng(22);
  TensorT<double> x({2, 32, 8});
  for (auto& v : x.data) v = rng.uniform(-1.0, 1.0);
  TensorT<double> labels = one_hot<double>({0, 2}, 3);

  auto loss_of = [&](const TensorT<double>& input) {
    return softmax_cross_entropy(net.forward(input), labels).loss;
  };

  for (auto& p : net.params()) p.grad->zero();
  auto fwd = softmax_cross_entropy(net.forward(x), labels);
  TensorT<double> dx = net.backward(softmax_cross_entropy_backward(fwd, labels));

  // input gradients through the whole stack
  CHECK(fd_check_scalar(loss_of, x, dx) < 1e-4);

  // parameter gradients, probed through the same scalar loss
  constexpr double kStep = 1e-5;
  double worst = 0.0;
  for (auto& p : net.params()) {
    for (size_t i = 0; i < p.value->data.size(); ++i) {
      const double orig = p.value->data[i];
      p.value->data[i] = orig + kStep;
      const double lp = loss_of(x);
      p.value->data[i] = orig - kStep;
      const double lm = loss_of(x);
      p.value->data[i] = orig;
      const double numeric = (lp - lm) / (2.0 * kStep);
      const double analytic = p.grad->data[i];
      const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
      worst = std::max(worst, std::fabs(analytic - numeric) / denom);
    }
  }
  CHECK(worst < 1e-4);
}
