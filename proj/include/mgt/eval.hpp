#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mgt/models.hpp"

namespace mgt::eval {

struct ConfusionMatrix {
  std::vector<std::string> class_order;
  std::vector<int64_t> counts;  // k x k row-major, rows = true class

  int k() const { return static_cast<int>(class_order.size()); }
  int64_t at(int i, int j) const { return counts[static_cast<size_t>(i) * k() + j]; }
  int64_t& at(int i, int j) { return counts[static_cast<size_t>(i) * k() + j]; }
  int64_t total() const;
  int64_t trace() const;
  double accuracy() const;
  std::vector<int64_t> row_sums() const;  // per-class support
  std::vector<int64_t> col_sums() const;
};

ConfusionMatrix confusion(const std::vector<int>& y_true, const std::vector<int>& y_pred,
                          const std::vector<std::string>& class_order);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  int64_t support = 0;
};

struct ClassReport {
  std::vector<std::string> class_order;
  std::vector<ClassMetrics> per_class;
  ClassMetrics macro;     // unweighted mean; support = total
  ClassMetrics weighted;  // support-weighted mean; weighted recall == accuracy
  double accuracy = 0.0;
};

// Zero-division convention: a metric with a vanishing denominator is 0.
ClassReport classification_report(const ConfusionMatrix& cm);

struct RocCurve {
  std::string class_name;
  // pointwise curve from (0,0) to (1,1); thresholds[i] produced point i+1
  std::vector<double> thresholds;
  std::vector<double> fpr;
  std::vector<double> tpr;
  double auc = 0.0;
  bool defined = true;  // false when the class has no positives or negatives
};

// One-vs-rest sweep over distinct scores (tied scores collapse to a single
// sweep point); AUC by trapezoidal integration.
std::vector<RocCurve> roc_auc(const std::vector<int>& y_true,
                              const std::vector<std::vector<double>>& probs,
                              const std::vector<std::string>& class_order);

// ------------------------------------------------------------- rendering

std::string render_report_text(const ClassReport& report);
void write_report_text(const std::string& path, const ClassReport& report);
void write_report_csv(const std::string& path, const ClassReport& report);
ClassReport parse_report_csv(const std::string& path);

void write_confusion_csv(const std::string& path, const ConfusionMatrix& cm);
ConfusionMatrix parse_confusion_csv(const std::string& path);
void write_roc_csv(const std::string& path, const std::vector<RocCurve>& curves);
void write_auc_csv(const std::string& path, const std::vector<RocCurve>& curves);

void write_confusion_svg(const std::string& path, const ConfusionMatrix& cm);
void write_roc_svg(const std::string& path, const std::vector<RocCurve>& curves);
void write_training_curves_svg(const std::string& path,
                               const std::vector<models::EpochStats>& curves);

}  // namespace mgt::eval
