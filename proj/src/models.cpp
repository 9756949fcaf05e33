#include "mgt/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "mgt/dataio.hpp"
#include "mgt/error.hpp"
#include "mgt/kernels.hpp"

namespace mgt::models {

using neural::Mode;
using nlohmann::json;

std::string to_string(ArchKind kind) {
  switch (kind) {
    case ArchKind::cnn: return "cnn";
    case ArchKind::rnn: return "rnn";
    case ArchKind::parallel: return "parallel";
    case ArchKind::crnn: return "crnn";
    case ArchKind::logreg: return "logreg";
    case ArchKind::knn: return "knn";
  }
  return "?";
}

ArchKind arch_from_string(const std::string& name) {
  for (ArchKind k : {ArchKind::cnn, ArchKind::rnn, ArchKind::parallel, ArchKind::crnn,
                     ArchKind::logreg, ArchKind::knn}) {
    if (to_string(k) == name) return k;
  }
  fail(ErrorKind::config, "unknown architecture '" + name +
                              "' (expected cnn|rnn|parallel|crnn|logreg|knn)");
}

void ArchitectureConfig::validate() const {
  if (n_classes < 2) fail(ErrorKind::config, "architecture: n_classes must be >= 2");
  if (!is_deep(kind)) return;
  if (input_time < 1 || input_bands < 1) fail(ErrorKind::config, "architecture: bad input shape");
  if (kernel_width < 1 || kernel_width % 2 == 0) {
    fail(ErrorKind::config, "architecture: kernel_width must be odd");
  }
  if (pool_width < 1) fail(ErrorKind::config, "architecture: pool_width must be >= 1");
  if (dense_hidden < 1) fail(ErrorKind::config, "architecture: dense_hidden must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    fail(ErrorKind::config, "architecture: dropout must be in [0,1)");
  }
  const bool has_conv = kind != ArchKind::rnn;
  const bool has_lstm = kind != ArchKind::cnn;
  if (has_conv) {
    if (conv_channels.empty()) fail(ErrorKind::config, "architecture: conv_channels empty");
    int t = input_time;
    for (size_t i = 0; i < conv_channels.size(); ++i) {
      if (conv_channels[i] < 1) fail(ErrorKind::config, "architecture: bad conv channel count");
      t /= pool_width;
    }
    if (t < 1) fail(ErrorKind::config, "architecture: pooling collapses the time axis to zero");
  }
  if (has_lstm && lstm_hidden < 1) fail(ErrorKind::config, "architecture: lstm_hidden must be >= 1");
}

// ------------------------------------------------------------ EarlyStopper

EarlyStopper::EarlyStopper(int patience, double min_improvement)
    : patience_(patience), min_improvement_(min_improvement),
      min_loss_(std::numeric_limits<double>::infinity()),
      progress_ref_(std::numeric_limits<double>::infinity()) {
  if (patience_ < 1) fail(ErrorKind::config, "early stopping: patience must be >= 1");
}

bool EarlyStopper::observe(double val_loss) {
  ++seen_;
  if (seen_ == 1 || val_loss <= progress_ref_ - min_improvement_) {
    progress_ref_ = val_loss;
    since_progress_ = 0;
  } else {
    ++since_progress_;
  }
  if (val_loss < min_loss_) {
    min_loss_ = val_loss;
    min_index_ = seen_;
    return true;
  }
  return false;
}

// --------------------------------------------------------------- DeepModel

DeepModel::DeepModel(const ArchitectureConfig& cfg, uint64_t seed) : cfg_(cfg), seed_(seed) {
  cfg_.validate();
  if (!is_deep(cfg_.kind)) fail(ErrorKind::config, "DeepModel: classical kind");
  Rng rng(seed);

  const bool has_conv = cfg_.kind != ArchKind::rnn;
  const bool has_lstm = cfg_.kind != ArchKind::cnn;

  int last_ch = cfg_.input_bands;
  if (has_conv) {
    for (int ch : cfg_.conv_channels) {
      blocks_.emplace_back(last_ch, ch, cfg_.kernel_width, cfg_.pool_width);
      last_ch = ch;
    }
  }
  if (has_lstm) {
    const int lstm_in = (cfg_.kind == ArchKind::crnn) ? last_ch : cfg_.input_bands;
    lstm_.emplace(lstm_in, cfg_.lstm_hidden);
  }

  int head_in = 0;
  switch (cfg_.kind) {
    case ArchKind::crnn: head_in = cfg_.lstm_hidden; break;
    case ArchKind::rnn: head_in = cfg_.lstm_hidden; break;
    case ArchKind::cnn: head_in = lstm_time_steps() * last_ch; break;
    case ArchKind::parallel: head_in = lstm_time_steps() * last_ch + cfg_.lstm_hidden; break;
    default: break;
  }
  d1_.emplace(head_in, cfg_.dense_hidden);
  d2_.emplace(cfg_.dense_hidden, cfg_.n_classes);
  drop1_.emplace(cfg_.dropout, mix_seed(seed, 101));
  drop2_.emplace(cfg_.dropout, mix_seed(seed, 102));

  for (auto& blk : blocks_) {
    blk.conv.init(rng);
    blk.bn.init(rng);
  }
  if (lstm_) lstm_->init(rng);
  d1_->init(rng);
  d2_->init(rng);
}

int DeepModel::lstm_time_steps() const {
  int t = cfg_.input_time;
  for (size_t i = 0; i < cfg_.conv_channels.size() && cfg_.kind != ArchKind::rnn; ++i) {
    t /= cfg_.pool_width;
  }
  return t;
}

Tensor DeepModel::flatten(const Tensor& x) const {
  Tensor out({x.dim(0), x.dim(1) * x.dim(2)}, x.data);
  return out;
}

Tensor DeepModel::forward(const Tensor& x, Mode mode) {
  if (x.rank() != 3 || x.dim(1) != cfg_.input_time || x.dim(2) != cfg_.input_bands) {
    fail(ErrorKind::data, "model: expected [B," + std::to_string(cfg_.input_time) + "," +
                              std::to_string(cfg_.input_bands) + "], got " + x.shape_str());
  }
  Tensor v;
  switch (cfg_.kind) {
    case ArchKind::crnn: {
      Tensor h = x;
      for (auto& blk : blocks_) h = blk.forward(h, mode);
      v = lstm_->forward(h, mode);
      break;
    }
    case ArchKind::cnn: {
      Tensor h = x;
      for (auto& blk : blocks_) h = blk.forward(h, mode);
      flat_time_ = h.dim(1);
      flat_ch_ = h.dim(2);
      v = flatten(h);
      break;
    }
    case ArchKind::rnn: {
      v = lstm_->forward(x, mode);
      break;
    }
    case ArchKind::parallel: {
      Tensor h = x;
      for (auto& blk : blocks_) h = blk.forward(h, mode);
      flat_time_ = h.dim(1);
      flat_ch_ = h.dim(2);
      const Tensor hc = flatten(h);
      const Tensor hr = lstm_->forward(x, mode);
      lstm_batch_ = x.dim(0);
      v = Tensor({x.dim(0), hc.dim(1) + hr.dim(1)});
      for (int64_t b = 0; b < x.dim(0); ++b) {
        std::memcpy(v.ptr() + b * v.dim(1), hc.ptr() + b * hc.dim(1),
                    sizeof(float) * static_cast<size_t>(hc.dim(1)));
        std::memcpy(v.ptr() + b * v.dim(1) + hc.dim(1), hr.ptr() + b * hr.dim(1),
                    sizeof(float) * static_cast<size_t>(hr.dim(1)));
      }
      break;
    }
    default:
      fail(ErrorKind::config, "model: classical kind in deep forward");
  }
  v = drop1_->forward(v, mode);
  Tensor a = head_relu_.forward(d1_->forward(v, mode), mode);
  a = drop2_->forward(a, mode);
  return d2_->forward(a, mode);
}

Tensor DeepModel::backward(const Tensor& dlogits) {
  Tensor d = d2_->backward(dlogits);
  d = drop2_->backward(d);
  d = head_relu_.backward(d);
  d = d1_->backward(d);
  d = drop1_->backward(d);

  switch (cfg_.kind) {
    case ArchKind::crnn: {
      d = lstm_->backward(d);
      for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) d = it->backward(d);
      return d;
    }
    case ArchKind::cnn: {
      Tensor d3({d.dim(0), flat_time_, flat_ch_}, d.data);
      for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) d3 = it->backward(d3);
      return d3;
    }
    case ArchKind::rnn:
      return lstm_->backward(d);
    case ArchKind::parallel: {
      const int64_t flat = flat_time_ * flat_ch_;
      Tensor dc({lstm_batch_, flat_time_, flat_ch_});
      Tensor dr({lstm_batch_, static_cast<int64_t>(cfg_.lstm_hidden)});
      for (int64_t b = 0; b < lstm_batch_; ++b) {
        std::memcpy(dc.ptr() + b * flat, d.ptr() + b * d.dim(1),
                    sizeof(float) * static_cast<size_t>(flat));
        std::memcpy(dr.ptr() + b * cfg_.lstm_hidden, d.ptr() + b * d.dim(1) + flat,
                    sizeof(float) * static_cast<size_t>(cfg_.lstm_hidden));
      }
      Tensor d_cnn = dc;
      for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) d_cnn = it->backward(d_cnn);
      const Tensor d_rnn = lstm_->backward(dr);
      for (size_t i = 0; i < d_cnn.data.size(); ++i) d_cnn.data[i] += d_rnn.data[i];
      return d_cnn;
    }
    default:
      fail(ErrorKind::config, "model: classical kind in deep backward");
  }
}

std::vector<neural::ParamRef<float>> DeepModel::params() {
  std::vector<neural::ParamRef<float>> out;
  for (size_t i = 0; i < blocks_.size(); ++i) {
    const std::string prefix = "block" + std::to_string(i);
    for (auto& p : blocks_[i].conv.params(prefix + ".conv")) out.push_back(p);
    for (auto& p : blocks_[i].bn.params(prefix + ".bn")) out.push_back(p);
  }
  if (lstm_) {
    for (auto& p : lstm_->params("lstm")) out.push_back(p);
  }
  for (auto& p : d1_->params("head.d1")) out.push_back(p);
  for (auto& p : d2_->params("head.d2")) out.push_back(p);
  return out;
}

std::vector<DeepModel::BufferRef> DeepModel::buffers() {
  std::vector<BufferRef> out;
  for (size_t i = 0; i < blocks_.size(); ++i) {
    const std::string prefix = "block" + std::to_string(i) + ".bn";
    out.push_back({prefix + ".running_mean", &blocks_[i].bn.running_mean});
    out.push_back({prefix + ".running_var", &blocks_[i].bn.running_var});
  }
  return out;
}

void DeepModel::mark_batchnorm_initialized() {
  for (auto& blk : blocks_) blk.bn.initialized = true;
}

int64_t DeepModel::parameter_count() {
  int64_t n = 0;
  for (auto& p : params()) n += p.value->numel();
  return n;
}

// ------------------------------------------------------------------ train

namespace {

struct Snapshot {
  std::vector<std::vector<float>> params, buffers;
};

Snapshot take_snapshot(DeepModel& model) {
  Snapshot s;
  for (auto& p : model.params()) s.params.push_back(p.value->data);
  for (auto& b : model.buffers()) s.buffers.push_back(b.value->data);
  return s;
}

void restore_snapshot(DeepModel& model, const Snapshot& s) {
  auto params = model.params();
  for (size_t i = 0; i < params.size(); ++i) params[i].value->data = s.params[i];
  auto buffers = model.buffers();
  for (size_t i = 0; i < buffers.size(); ++i) buffers[i].value->data = s.buffers[i];
}

// Gather rows of x into a standardized minibatch plus one-hot labels.
void assemble_batch(const Tensor& x, const std::vector<int>& labels,
                    const std::vector<int>& idx, size_t begin, size_t end, float mean,
                    float inv_std, int n_classes, Tensor& bx, Tensor& by) {
  const int64_t rows = static_cast<int64_t>(end - begin);
  const int64_t stride = x.dim(1) * x.dim(2);
  bx = Tensor({rows, x.dim(1), x.dim(2)});
  by = Tensor({rows, n_classes});
  for (int64_t r = 0; r < rows; ++r) {
    const int src = idx[begin + static_cast<size_t>(r)];
    const float* from = x.ptr() + static_cast<int64_t>(src) * stride;
    float* to = bx.ptr() + r * stride;
    for (int64_t i = 0; i < stride; ++i) to[i] = (from[i] - mean) * inv_std;
    by.at2(r, labels[static_cast<size_t>(src)]) = 1.0f;
  }
}

struct EvalResult {
  double loss = 0.0;
  double acc = 0.0;
};

EvalResult evaluate(DeepModel& model, const Tensor& x, const std::vector<int>& labels,
                    const std::vector<int>& idx, int batch_size, int n_classes) {
  EvalResult res;
  if (idx.empty()) return res;
  Tensor bx, by;
  size_t correct = 0;
  for (size_t begin = 0; begin < idx.size(); begin += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(idx.size(), begin + static_cast<size_t>(batch_size));
    assemble_batch(x, labels, idx, begin, end, model.input_mean, 1.0f / model.input_std,
                   n_classes, bx, by);
    Tensor logits = model.forward(bx, Mode::inference);
    auto sm = neural::softmax_cross_entropy(logits, by);
    res.loss += sm.loss * static_cast<double>(end - begin);
    for (int64_t r = 0; r < logits.dim(0); ++r) {
      int arg = 0;
      for (int j = 1; j < n_classes; ++j) {
        if (sm.probs.at2(r, j) > sm.probs.at2(r, arg)) arg = j;
      }
      if (arg == labels[static_cast<size_t>(idx[begin + static_cast<size_t>(r)])]) ++correct;
    }
  }
  res.loss /= static_cast<double>(idx.size());
  res.acc = static_cast<double>(correct) / static_cast<double>(idx.size());
  return res;
}

}  // namespace

TrainResult train(DeepModel& model, const Tensor& x, const std::vector<int>& labels,
                  const TrainConfig& tc) {
  const ArchitectureConfig& cfg = model.cfg();
  if (x.rank() != 3) fail(ErrorKind::data, "train: expected [N,T,M] input");
  const auto n = static_cast<size_t>(x.dim(0));
  if (labels.size() != n) fail(ErrorKind::data, "train: labels/input size mismatch");
  if (static_cast<int>(n) < tc.batch_size) {
    fail(ErrorKind::data, "train: dataset smaller than one batch");
  }
  if (!(tc.val_fraction > 0.0 && tc.val_fraction < 1.0)) {
    fail(ErrorKind::config, "train: val_fraction must be in (0,1)");
  }
  for (int y : labels) {
    if (y < 0 || y >= cfg.n_classes) fail(ErrorKind::data, "train: label out of range");
  }

  // dataset standardization scalars (global over the training tensor)
  {
    double acc = 0.0;
    for (float v : x.data) acc += v;
    const double mean = acc / static_cast<double>(x.data.size());
    double var = 0.0;
    for (float v : x.data) {
      const double d = v - mean;
      var += d * d;
    }
    var /= static_cast<double>(x.data.size());
    model.input_mean = static_cast<float>(mean);
    model.input_std = static_cast<float>(std::max(std::sqrt(var), 1e-6));
  }

  // stratified validation split
  std::map<int, std::vector<int>> by_class;
  for (size_t i = 0; i < n; ++i) by_class[labels[i]].push_back(static_cast<int>(i));
  std::vector<int> val_idx, train_idx;
  {
    Rng rng(mix_seed(tc.seed, 0x5A11D));
    for (auto& [cls, idx] : by_class) {
      rng.shuffle(idx);
      size_t take = static_cast<size_t>(tc.val_fraction * static_cast<double>(idx.size()));
      if (take == 0 && idx.size() >= 2) take = 1;
      for (size_t i = 0; i < idx.size(); ++i) {
        (i < take ? val_idx : train_idx).push_back(idx[i]);
      }
    }
    std::sort(val_idx.begin(), val_idx.end());
    std::sort(train_idx.begin(), train_idx.end());
  }
  if (val_idx.empty() || train_idx.empty()) {
    fail(ErrorKind::data, "train: stratified split produced an empty side");
  }

  neural::AdamOptimizer opt(tc.adam, static_cast<float>(cfg.l2));
  opt.attach(model.params());
  EarlyStopper stopper(tc.patience, tc.min_improvement);

  TrainResult result;
  Snapshot best = take_snapshot(model);
  Tensor bx, by;
  for (int epoch = 1; epoch <= tc.max_epochs; ++epoch) {
    Rng erng(mix_seed(tc.seed, 1000 + static_cast<uint64_t>(epoch)));
    erng.shuffle(train_idx);

    double train_loss = 0.0;
    size_t train_correct = 0;
    int batch_index = 0;
    for (size_t begin = 0; begin < train_idx.size();
         begin += static_cast<size_t>(tc.batch_size), ++batch_index) {
      const size_t end = std::min(train_idx.size(), begin + static_cast<size_t>(tc.batch_size));
      assemble_batch(x, labels, train_idx, begin, end, model.input_mean,
                     1.0f / model.input_std, cfg.n_classes, bx, by);
      try {
        for (auto& p : model.params()) p.grad->zero();
        Tensor logits = model.forward(bx, Mode::training);
        auto sm = neural::softmax_cross_entropy(logits, by);
        train_loss += sm.loss * static_cast<double>(end - begin);
        for (int64_t r = 0; r < logits.dim(0); ++r) {
          int arg = 0;
          for (int j = 1; j < cfg.n_classes; ++j) {
            if (sm.probs.at2(r, j) > sm.probs.at2(r, arg)) arg = j;
          }
          if (arg == labels[static_cast<size_t>(train_idx[begin + static_cast<size_t>(r)])]) {
            ++train_correct;
          }
        }
        model.backward(neural::softmax_cross_entropy_backward(sm, by));
        opt.step();
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::numeric) {
          fail(ErrorKind::numeric, "numeric fault at epoch " + std::to_string(epoch) +
                                       ", batch " + std::to_string(batch_index) + ": " + e.what());
        }
        throw;
      }
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = train_loss / static_cast<double>(train_idx.size());
    stats.train_acc = static_cast<double>(train_correct) / static_cast<double>(train_idx.size());
    const EvalResult val = evaluate(model, x, labels, val_idx, tc.batch_size, cfg.n_classes);
    stats.val_loss = val.loss;
    stats.val_acc = val.acc;
    result.curves.push_back(stats);

    if (stopper.observe(val.loss)) {
      best = take_snapshot(model);
      result.best_epoch = epoch;
      result.best_val_loss = val.loss;
      result.best_val_acc = val.acc;
    }
    if (stopper.should_stop()) break;
  }
  restore_snapshot(model, best);
  return result;
}

DeepPrediction predict(DeepModel& model, const Tensor& x, int batch_size) {
  const auto n = static_cast<size_t>(x.dim(0));
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  DeepPrediction out;
  out.probs = Tensor({static_cast<int64_t>(n), model.cfg().n_classes});
  out.labels.resize(n);
  const int k = model.cfg().n_classes;
  Tensor bx, by;
  std::vector<int> dummy(n, 0);
  for (size_t begin = 0; begin < n; begin += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(n, begin + static_cast<size_t>(batch_size));
    assemble_batch(x, dummy, idx, begin, end, model.input_mean, 1.0f / model.input_std, k, bx,
                   by);
    Tensor logits = model.forward(bx, Mode::inference);
    // softmax only; the labels here are placeholders
    auto sm = neural::softmax_cross_entropy(logits, by);
    for (int64_t r = 0; r < logits.dim(0); ++r) {
      int arg = 0;
      for (int j = 0; j < k; ++j) {
        out.probs.at2(static_cast<int64_t>(begin) + r, j) = sm.probs.at2(r, j);
        if (j > 0 && sm.probs.at2(r, j) > sm.probs.at2(r, arg)) arg = j;
      }
      out.labels[begin + static_cast<size_t>(r)] = arg;
    }
  }
  return out;
}

// -------------------------------------------------------------- classical

void Scaler::fit(const FeatureMatrix& x) {
  if (x.empty()) fail(ErrorKind::data, "scaler: empty feature matrix");
  const size_t d = x[0].size();
  mean.assign(d, 0.0);
  stdev.assign(d, 0.0);
  for (const auto& row : x) {
    for (size_t j = 0; j < d; ++j) mean[j] += row[j];
  }
  for (size_t j = 0; j < d; ++j) mean[j] /= static_cast<double>(x.size());
  for (const auto& row : x) {
    for (size_t j = 0; j < d; ++j) {
      const double dd = row[j] - mean[j];
      stdev[j] += dd * dd;
    }
  }
  for (size_t j = 0; j < d; ++j) {
    stdev[j] = std::sqrt(stdev[j] / static_cast<double>(x.size()));
  }
}

std::vector<double> Scaler::apply(const FeatureVector51& row) const {
  std::vector<double> out(row.size());
  for (size_t j = 0; j < row.size(); ++j) {
    out[j] = (row[j] - mean[j]) / std::max(stdev[j], 1e-12);
  }
  return out;
}

namespace {

inline double sigmoid_d(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

void LogRegModel::fit(const FeatureMatrix& x, const std::vector<int>& y, int n_classes,
                      double lambda_in, uint64_t /*seed*/) {
  if (x.size() != y.size() || x.empty()) fail(ErrorKind::data, "logreg: bad training data");
  if (lambda_in < 0.0) fail(ErrorKind::config, "logreg: lambda must be >= 0");
  lambda = lambda_in;
  std::vector<int> seen(static_cast<size_t>(n_classes), 0);
  for (int cls : y) {
    if (cls < 0 || cls >= n_classes) fail(ErrorKind::data, "logreg: label out of range");
    seen[static_cast<size_t>(cls)] = 1;
  }
  for (int c = 0; c < n_classes; ++c) {
    if (!seen[static_cast<size_t>(c)]) {
      fail(ErrorKind::data, "logreg: class " + std::to_string(c) + " absent from training data");
    }
  }

  scaler.fit(x);
  const size_t n = x.size();
  const size_t d = x[0].size();
  std::vector<std::vector<double>> z(n);
  for (size_t i = 0; i < n; ++i) z[i] = scaler.apply(x[i]);

  weights_.assign(static_cast<size_t>(n_classes), std::vector<double>(d, 0.0));
  bias_.assign(static_cast<size_t>(n_classes), 0.0);

  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  std::vector<double> gw(d), mw(d), vw(d);
  for (int c = 0; c < n_classes; ++c) {
    auto& w = weights_[static_cast<size_t>(c)];
    double& b = bias_[static_cast<size_t>(c)];
    std::fill(mw.begin(), mw.end(), 0.0);
    std::fill(vw.begin(), vw.end(), 0.0);
    double mb = 0.0, vb = 0.0;
    for (int it = 1; it <= kMaxIters; ++it) {
      std::fill(gw.begin(), gw.end(), 0.0);
      double gb = 0.0;
      for (size_t i = 0; i < n; ++i) {
        const double target = (y[i] == c) ? 1.0 : 0.0;
        const double p = sigmoid_d(kernels::ops().dot_f64(w.data(), z[i].data(), d) + b);
        const double r = p - target;
        kernels::ops().axpy_f64(r, z[i].data(), gw.data(), d);
        gb += r;
      }
      double inf_norm = std::fabs(gb / static_cast<double>(n));
      for (size_t j = 0; j < d; ++j) {
        gw[j] = gw[j] / static_cast<double>(n) + lambda * w[j];
        inf_norm = std::max(inf_norm, std::fabs(gw[j]));
      }
      gb /= static_cast<double>(n);
      if (inf_norm < kGradTol) break;
      const double bc1 = 1.0 / (1.0 - std::pow(b1, it));
      const double bc2 = 1.0 / (1.0 - std::pow(b2, it));
      for (size_t j = 0; j < d; ++j) {
        mw[j] = b1 * mw[j] + (1.0 - b1) * gw[j];
        vw[j] = b2 * vw[j] + (1.0 - b2) * gw[j] * gw[j];
        w[j] -= kLearnRate * (mw[j] * bc1) / (std::sqrt(vw[j] * bc2) + eps);
      }
      mb = b1 * mb + (1.0 - b1) * gb;
      vb = b2 * vb + (1.0 - b2) * gb * gb;
      b -= kLearnRate * (mb * bc1) / (std::sqrt(vb * bc2) + eps);
    }
  }
}

ClassicalPrediction LogRegModel::predict_all(const FeatureMatrix& x) const {
  const int k = n_classes();
  ClassicalPrediction out;
  out.probs.reserve(x.size());
  out.labels.reserve(x.size());
  for (const auto& row : x) {
    const std::vector<double> z = scaler.apply(row);
    std::vector<double> p(static_cast<size_t>(k));
    double total = 0.0;
    for (int c = 0; c < k; ++c) {
      p[static_cast<size_t>(c)] = sigmoid_d(
          kernels::ops().dot_f64(weights_[static_cast<size_t>(c)].data(), z.data(), z.size()) +
          bias_[static_cast<size_t>(c)]);
      total += p[static_cast<size_t>(c)];
    }
    for (double& v : p) v /= total;  // sigmoids are strictly positive
    int arg = 0;
    for (int c = 1; c < k; ++c) {
      if (p[static_cast<size_t>(c)] > p[static_cast<size_t>(arg)]) arg = c;
    }
    out.probs.push_back(std::move(p));
    out.labels.push_back(arg);
  }
  return out;
}

double LogRegModel::weight_l2_norm() const {
  double acc = 0.0;
  for (const auto& w : weights_) {
    for (double v : w) acc += v * v;
  }
  return std::sqrt(acc);
}

void KnnModel::fit(const FeatureMatrix& x, const std::vector<int>& y, int n_classes, int k_in) {
  if (x.size() != y.size() || x.empty()) fail(ErrorKind::data, "knn: bad training data");
  if (k_in < 1) fail(ErrorKind::config, "knn: k must be >= 1");
  if (static_cast<size_t>(k_in) > x.size()) {
    fail(ErrorKind::config, "knn: k exceeds the number of training points");
  }
  k = k_in;
  n_classes_ = n_classes;
  scaler.fit(x);
  train_rows_.clear();
  train_rows_.reserve(x.size());
  for (const auto& row : x) train_rows_.push_back(scaler.apply(row));
  train_labels_ = y;
}

ClassicalPrediction KnnModel::predict_all(const FeatureMatrix& x) const {
  ClassicalPrediction out;
  const size_t n_train = train_rows_.size();
  std::vector<std::pair<double, size_t>> dist(n_train);
  for (const auto& row : x) {
    const std::vector<double> q = scaler.apply(row);
    for (size_t i = 0; i < n_train; ++i) {
      double acc = 0.0;
      const auto& t = train_rows_[i];
      for (size_t j = 0; j < q.size(); ++j) {
        const double d = q[j] - t[j];
        acc += d * d;
      }
      dist[i] = {acc, i};
    }
    std::sort(dist.begin(), dist.end());  // (distance, index): determinism on ties

    std::vector<int> votes(static_cast<size_t>(n_classes_), 0);
    for (int i = 0; i < k; ++i) ++votes[static_cast<size_t>(train_labels_[dist[static_cast<size_t>(i)].second])];
    int best_votes = 0;
    for (int v : votes) best_votes = std::max(best_votes, v);
    int label = -1;
    // ties: the label of the single nearest neighbor among the tied labels
    for (int i = 0; i < k && label < 0; ++i) {
      const int cand = train_labels_[dist[static_cast<size_t>(i)].second];
      if (votes[static_cast<size_t>(cand)] == best_votes) label = cand;
    }
    std::vector<double> p(static_cast<size_t>(n_classes_));
    for (int c = 0; c < n_classes_; ++c) {
      p[static_cast<size_t>(c)] = static_cast<double>(votes[static_cast<size_t>(c)]) / k;
    }
    out.probs.push_back(std::move(p));
    out.labels.push_back(label);
  }
  return out;
}

// ----------------------------------------------------------- persistence

namespace {

dataio::NamedTensor to_named(const std::string& name, const Tensor& t) {
  dataio::NamedTensor out;
  out.name = name;
  out.dims = t.shape;
  out.data = t.data;
  return out;
}

dataio::NamedTensor vec_to_named(const std::string& name, const std::vector<double>& v) {
  dataio::NamedTensor out;
  out.name = name;
  out.dims = {static_cast<int64_t>(v.size())};
  out.data.assign(v.begin(), v.end());
  return out;
}

std::vector<double> named_to_vec(const dataio::NamedTensor& t) {
  return {t.data.begin(), t.data.end()};
}

const dataio::NamedTensor& require_tensor(const std::vector<dataio::NamedTensor>& tensors,
                                          const std::string& name, const std::string& path) {
  const dataio::NamedTensor* t = dataio::find_tensor(tensors, name);
  if (t == nullptr) {
    fail(ErrorKind::format, "checkpoint missing tensor '" + name + "': " + path);
  }
  return *t;
}

}  // namespace

void save_checkpoint(const std::string& base_path, const Checkpoint& ckpt) {
  json meta;
  meta["kind"] = to_string(ckpt.kind);
  meta["class_order"] = ckpt.class_order;
  meta["config_hash"] = ckpt.config_hash;
  meta["data_hash"] = ckpt.data_hash;
  meta["best_epoch"] = ckpt.best_epoch;
  meta["best_val_loss"] = ckpt.best_val_loss;
  meta["best_val_acc"] = ckpt.best_val_acc;
  meta["seed"] = ckpt.seed;

  std::vector<dataio::NamedTensor> tensors;
  if (is_deep(ckpt.kind)) {
    if (!ckpt.deep) fail(ErrorKind::config, "save_checkpoint: missing deep model");
    const ArchitectureConfig& a = ckpt.arch;
    meta["arch"] = {{"conv_channels", a.conv_channels}, {"kernel_width", a.kernel_width},
                    {"pool_width", a.pool_width},       {"lstm_hidden", a.lstm_hidden},
                    {"dense_hidden", a.dense_hidden},   {"n_classes", a.n_classes},
                    {"input_time", a.input_time},       {"input_bands", a.input_bands},
                    {"dropout", a.dropout},             {"l2", a.l2}};
    meta["input_mean"] = ckpt.deep->input_mean;
    meta["input_std"] = ckpt.deep->input_std;
    for (auto& p : ckpt.deep->params()) tensors.push_back(to_named(p.name, *p.value));
    for (auto& b : ckpt.deep->buffers()) tensors.push_back(to_named(b.name, *b.value));
  } else if (ckpt.kind == ArchKind::logreg) {
    if (!ckpt.logreg) fail(ErrorKind::config, "save_checkpoint: missing logreg model");
    meta["lambda"] = ckpt.logreg->lambda;
    meta["n_classes"] = ckpt.logreg->n_classes();
    dataio::NamedTensor w;
    w.name = "logreg.w";
    w.dims = {static_cast<int64_t>(ckpt.logreg->weights_.size()),
              static_cast<int64_t>(ckpt.logreg->weights_[0].size())};
    for (const auto& row : ckpt.logreg->weights_) w.data.insert(w.data.end(), row.begin(), row.end());
    tensors.push_back(std::move(w));
    tensors.push_back(vec_to_named("logreg.b", ckpt.logreg->bias_));
    tensors.push_back(vec_to_named("scaler.mean", ckpt.logreg->scaler.mean));
    tensors.push_back(vec_to_named("scaler.std", ckpt.logreg->scaler.stdev));
  } else {
    if (!ckpt.knn) fail(ErrorKind::config, "save_checkpoint: missing knn model");
    meta["k"] = ckpt.knn->k;
    meta["n_classes"] = ckpt.knn->n_classes_;
    dataio::NamedTensor tx;
    tx.name = "knn.train_x";
    tx.dims = {static_cast<int64_t>(ckpt.knn->train_rows_.size()),
               static_cast<int64_t>(ckpt.knn->train_rows_[0].size())};
    for (const auto& row : ckpt.knn->train_rows_) tx.data.insert(tx.data.end(), row.begin(), row.end());
    tensors.push_back(std::move(tx));
    dataio::NamedTensor ty;
    ty.name = "knn.train_y";
    ty.dims = {static_cast<int64_t>(ckpt.knn->train_labels_.size())};
    ty.data.assign(ckpt.knn->train_labels_.begin(), ckpt.knn->train_labels_.end());
    tensors.push_back(std::move(ty));
    tensors.push_back(vec_to_named("scaler.mean", ckpt.knn->scaler.mean));
    tensors.push_back(vec_to_named("scaler.std", ckpt.knn->scaler.stdev));
  }

  dataio::write_container(base_path + ".mgt", tensors);
  std::ofstream f(base_path + ".json", std::ios::trunc);
  if (!f) fail(ErrorKind::io, "cannot write checkpoint meta: " + base_path + ".json");
  f << meta.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::string& base_path) {
  std::ifstream f(base_path + ".json");
  if (!f) fail(ErrorKind::io, "cannot open checkpoint meta: " + base_path + ".json");
  json meta;
  try {
    f >> meta;
  } catch (const std::exception& e) {
    fail(ErrorKind::format, "malformed checkpoint meta: " + std::string(e.what()));
  }

  Checkpoint ckpt;
  ckpt.kind = arch_from_string(meta.at("kind").get<std::string>());
  ckpt.class_order = meta.at("class_order").get<std::vector<std::string>>();
  ckpt.config_hash = meta.value("config_hash", "");
  ckpt.data_hash = meta.value("data_hash", "");
  ckpt.best_epoch = meta.value("best_epoch", -1);
  ckpt.best_val_loss = meta.value("best_val_loss", 0.0);
  ckpt.best_val_acc = meta.value("best_val_acc", 0.0);
  ckpt.seed = meta.value("seed", 0ull);

  const std::string tensor_path = base_path + ".mgt";
  auto tensors = dataio::read_container(tensor_path);

  if (is_deep(ckpt.kind)) {
    const json& a = meta.at("arch");
    ArchitectureConfig cfg;
    cfg.kind = ckpt.kind;
    cfg.conv_channels = a.at("conv_channels").get<std::vector<int>>();
    cfg.kernel_width = a.at("kernel_width").get<int>();
    cfg.pool_width = a.at("pool_width").get<int>();
    cfg.lstm_hidden = a.at("lstm_hidden").get<int>();
    cfg.dense_hidden = a.at("dense_hidden").get<int>();
    cfg.n_classes = a.at("n_classes").get<int>();
    cfg.input_time = a.at("input_time").get<int>();
    cfg.input_bands = a.at("input_bands").get<int>();
    cfg.dropout = a.at("dropout").get<double>();
    cfg.l2 = a.at("l2").get<double>();
    ckpt.arch = cfg;
    ckpt.deep = std::make_shared<DeepModel>(cfg, ckpt.seed);
    ckpt.deep->input_mean = meta.at("input_mean").get<float>();
    ckpt.deep->input_std = meta.at("input_std").get<float>();
    for (auto& p : ckpt.deep->params()) {
      const auto& t = require_tensor(tensors, p.name, tensor_path);
      if (t.dims != p.value->shape) {
        fail(ErrorKind::format, "checkpoint tensor '" + p.name + "' has wrong shape");
      }
      p.value->data = t.data;
    }
    for (auto& b : ckpt.deep->buffers()) {
      const auto& t = require_tensor(tensors, b.name, tensor_path);
      if (t.dims != b.value->shape) {
        fail(ErrorKind::format, "checkpoint tensor '" + b.name + "' has wrong shape");
      }
      b.value->data = t.data;
    }
    ckpt.deep->mark_batchnorm_initialized();
  } else if (ckpt.kind == ArchKind::logreg) {
    ckpt.logreg = std::make_shared<LogRegModel>();
    ckpt.logreg->lambda = meta.value("lambda", 1e-4);
    const auto& w = require_tensor(tensors, "logreg.w", tensor_path);
    const auto k = static_cast<size_t>(w.dims.at(0));
    const auto d = static_cast<size_t>(w.dims.at(1));
    ckpt.logreg->weights_.assign(k, std::vector<double>(d));
    for (size_t c = 0; c < k; ++c) {
      for (size_t j = 0; j < d; ++j) {
        ckpt.logreg->weights_[c][j] = w.data[c * d + j];
      }
    }
    ckpt.logreg->bias_ = named_to_vec(require_tensor(tensors, "logreg.b", tensor_path));
    ckpt.logreg->scaler.mean = named_to_vec(require_tensor(tensors, "scaler.mean", tensor_path));
    ckpt.logreg->scaler.stdev = named_to_vec(require_tensor(tensors, "scaler.std", tensor_path));
  } else {
    ckpt.knn = std::make_shared<KnnModel>();
    ckpt.knn->k = meta.at("k").get<int>();
    ckpt.knn->n_classes_ = meta.at("n_classes").get<int>();
    const auto& tx = require_tensor(tensors, "knn.train_x", tensor_path);
    const auto rows = static_cast<size_t>(tx.dims.at(0));
    const auto d = static_cast<size_t>(tx.dims.at(1));
    ckpt.knn->train_rows_.assign(rows, std::vector<double>(d));
    for (size_t i = 0; i < rows; ++i) {
      for (size_t j = 0; j < d; ++j) ckpt.knn->train_rows_[i][j] = tx.data[i * d + j];
    }
    const auto& ty = require_tensor(tensors, "knn.train_y", tensor_path);
    ckpt.knn->train_labels_.assign(ty.data.begin(), ty.data.end());
    ckpt.knn->scaler.mean = named_to_vec(require_tensor(tensors, "scaler.mean", tensor_path));
    ckpt.knn->scaler.stdev = named_to_vec(require_tensor(tensors, "scaler.std", tensor_path));
  }
  return ckpt;
}

void write_curves_csv(const std::string& path, const std::vector<EpochStats>& curves) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) fail(ErrorKind::io, "cannot write curves: " + path);
  f << "epoch,train_loss,train_acc,val_loss,val_acc\n";
  char buf[256];
  for (const auto& s : curves) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g\n", s.epoch, s.train_loss,
                  s.train_acc, s.val_loss, s.val_acc);
    f << buf;
  }
}

std::vector<EpochStats> read_curves_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail(ErrorKind::io, "cannot open curves: " + path);
  std::string line;
  if (!std::getline(f, line) || line != "epoch,train_loss,train_acc,val_loss,val_acc") {
    fail(ErrorKind::format, "curves file missing header: " + path);
  }
  std::vector<EpochStats> out;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    EpochStats s;
    if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%lf", &s.epoch, &s.train_loss, &s.train_acc,
                    &s.val_loss, &s.val_acc) != 5) {
      fail(ErrorKind::format, "malformed curves row: " + line);
    }
    out.push_back(s);
  }
  return out;
}

}  // namespace mgt::models
