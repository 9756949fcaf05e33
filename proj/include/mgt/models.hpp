#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mgt/features.hpp"
#include "mgt/neural.hpp"
#include "mgt/tensor.hpp"

namespace mgt::models {

enum class ArchKind { cnn, rnn, parallel, crnn, logreg, knn };

std::string to_string(ArchKind kind);
ArchKind arch_from_string(const std::string& name);
inline bool is_deep(ArchKind kind) {
  return kind == ArchKind::cnn || kind == ArchKind::rnn || kind == ArchKind::parallel ||
         kind == ArchKind::crnn;
}

struct ArchitectureConfig {
  ArchKind kind = ArchKind::crnn;
  std::vector<int> conv_channels = {64, 128, 128};
  int kernel_width = 5;
  int pool_width = 2;
  int lstm_hidden = 96;
  int dense_hidden = 64;
  int n_classes = 8;
  int input_time = 640;
  int input_bands = 128;
  double dropout = 0.3;
  double l2 = 1e-4;

  void validate() const;
};

struct TrainConfig {
  int batch_size = 32;
  int max_epochs = 100;
  int patience = 10;
  double val_fraction = 0.1;
  double min_improvement = 1e-4;  // val-loss delta that counts as progress
  uint64_t seed = 42;
  neural::AdamConfig adam{};
};

struct EpochStats {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
};

// Early-stopping rule, factored out so the policy is testable on a
// constructed loss sequence. Two trackers: the strict minimum decides which
// epoch's parameters are restored, while the stop counter only resets on
// improvements of at least min_improvement.
class EarlyStopper {
 public:
  EarlyStopper(int patience, double min_improvement);
  // feed one epoch's validation loss; true when it sets a new strict minimum
  bool observe(double val_loss);
  bool should_stop() const { return since_progress_ >= patience_; }
  int best_index() const { return min_index_; }  // 1-based epoch of the minimum
  double best_loss() const { return min_loss_; }

 private:
  int patience_;
  double min_improvement_;
  double min_loss_;
  double progress_ref_;
  int min_index_ = -1;
  int since_progress_ = 0;
  int seen_ = 0;
};

// One of the four deep architectures over mel spectrogram input [B,T,M].
class DeepModel {
 public:
  DeepModel(const ArchitectureConfig& cfg, uint64_t seed);

  Tensor forward(const Tensor& x, neural::Mode mode);  // -> logits [B,K]
  Tensor backward(const Tensor& dlogits);              // -> dx
  std::vector<neural::ParamRef<float>> params();
  int64_t parameter_count();
  // sequence length the LSTM consumes (crnn: input_time / pool^blocks)
  int lstm_time_steps() const;

  const ArchitectureConfig& cfg() const { return cfg_; }
  uint64_t seed() const { return seed_; }

  // dataset standardization scalars, fixed at training time
  float input_mean = 0.0f;
  float input_std = 1.0f;

  // non-trained state (batchnorm running stats), saved with checkpoints
  struct BufferRef {
    std::string name;
    Tensor* value;
  };
  std::vector<BufferRef> buffers();
  void mark_batchnorm_initialized();

 private:
  struct ConvBlock {
    neural::Conv1d<float> conv;
    neural::Relu<float> relu;
    neural::BatchNorm1d<float> bn;
    neural::MaxPool1d<float> pool;
    ConvBlock(int in_ch, int out_ch, int width, int pool_w)
        : conv(in_ch, out_ch, width), bn(out_ch), pool(pool_w) {}
    Tensor forward(const Tensor& x, neural::Mode m) {
      return pool.forward(bn.forward(relu.forward(conv.forward(x, m), m), m), m);
    }
    Tensor backward(const Tensor& dy) {
      return conv.backward(relu.backward(bn.backward(pool.backward(dy))));
    }
  };

  Tensor flatten(const Tensor& x) const;

  ArchitectureConfig cfg_;
  uint64_t seed_;
  std::vector<ConvBlock> blocks_;
  std::optional<neural::Lstm<float>> lstm_;
  std::optional<neural::Dropout<float>> drop1_, drop2_;
  std::optional<neural::Dense<float>> d1_, d2_;
  neural::Relu<float> head_relu_;
  // forward bookkeeping
  int64_t flat_time_ = 0, flat_ch_ = 0;
  int64_t lstm_batch_ = 0;
};

struct TrainResult {
  std::vector<EpochStats> curves;
  int best_epoch = -1;
  double best_val_loss = 0.0;
  double best_val_acc = 0.0;
};

// Standardizes inputs from the given training set, runs seeded minibatch
// Adam with a stratified validation split and early stopping, and restores
// the parameters of the best-validation-loss epoch.
TrainResult train(DeepModel& model, const Tensor& x, const std::vector<int>& labels,
                  const TrainConfig& tc);

struct DeepPrediction {
  Tensor probs;             // [N, K]
  std::vector<int> labels;  // argmax, ties to the lowest class index
};
DeepPrediction predict(DeepModel& model, const Tensor& x, int batch_size = 32);

// ------------------------------------------------------------- classical

using features::FeatureVector51;
using FeatureMatrix = std::vector<FeatureVector51>;

struct ClassicalPrediction {
  std::vector<std::vector<double>> probs;  // [N][K]
  std::vector<int> labels;
};

struct Scaler {
  std::vector<double> mean, stdev;
  void fit(const FeatureMatrix& x);
  std::vector<double> apply(const FeatureVector51& row) const;
};

// One-vs-rest L2-regularized logistic regression trained by full-batch Adam
// (stops at gradient inf-norm < 1e-5 or 5000 iterations).
class LogRegModel {
 public:
  void fit(const FeatureMatrix& x, const std::vector<int>& y, int n_classes, double lambda,
           uint64_t seed);
  ClassicalPrediction predict_all(const FeatureMatrix& x) const;

  int n_classes() const { return static_cast<int>(weights_.size()); }
  double weight_l2_norm() const;

  Scaler scaler;
  double lambda = 1e-4;
  // per class: 51 weights + intercept
  std::vector<std::vector<double>> weights_;
  std::vector<double> bias_;

  static constexpr double kGradTol = 1e-5;
  static constexpr int kMaxIters = 5000;
  static constexpr double kLearnRate = 0.05;
};

// Exact-search k-nearest-neighbors in standardized feature space; majority
// vote, ties broken by the nearest neighbor among the tied labels.
class KnnModel {
 public:
  void fit(const FeatureMatrix& x, const std::vector<int>& y, int n_classes, int k);
  ClassicalPrediction predict_all(const FeatureMatrix& x) const;

  Scaler scaler;
  int k = 5;
  int n_classes_ = 0;
  std::vector<std::vector<double>> train_rows_;  // standardized
  std::vector<int> train_labels_;
};

// ------------------------------------------------------------ persistence

struct Checkpoint {
  ArchKind kind = ArchKind::crnn;
  ArchitectureConfig arch;  // meaningful for deep kinds
  std::vector<std::string> class_order;
  std::string config_hash;  // resolved run-config hash for audit
  std::string data_hash;    // extraction-config hash the data was built with
  int best_epoch = -1;
  double best_val_loss = 0.0;
  double best_val_acc = 0.0;
  uint64_t seed = 0;

  std::shared_ptr<DeepModel> deep;
  std::shared_ptr<LogRegModel> logreg;
  std::shared_ptr<KnnModel> knn;
};

// Writes <base>.mgt (tensors) and <base>.json (manifest entry).
void save_checkpoint(const std::string& base_path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& base_path);

void write_curves_csv(const std::string& path, const std::vector<EpochStats>& curves);
std::vector<EpochStats> read_curves_csv(const std::string& path);

}  // namespace mgt::models
