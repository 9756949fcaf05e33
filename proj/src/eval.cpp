#include "mgt/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "mgt/error.hpp"

namespace mgt::eval {

int64_t ConfusionMatrix::total() const {
  int64_t n = 0;
  for (int64_t c : counts) n += c;
  return n;
}

int64_t ConfusionMatrix::trace() const {
  int64_t n = 0;
  for (int i = 0; i < k(); ++i) n += at(i, i);
  return n;
}

double ConfusionMatrix::accuracy() const {
  const int64_t n = total();
  return n == 0 ? 0.0 : static_cast<double>(trace()) / static_cast<double>(n);
}

std::vector<int64_t> ConfusionMatrix::row_sums() const {
  std::vector<int64_t> out(static_cast<size_t>(k()), 0);
  for (int i = 0; i < k(); ++i) {
    for (int j = 0; j < k(); ++j) out[static_cast<size_t>(i)] += at(i, j);
  }
  return out;
}

std::vector<int64_t> ConfusionMatrix::col_sums() const {
  std::vector<int64_t> out(static_cast<size_t>(k()), 0);
  for (int i = 0; i < k(); ++i) {
    for (int j = 0; j < k(); ++j) out[static_cast<size_t>(j)] += at(i, j);
  }
  return out;
}

ConfusionMatrix confusion(const std::vector<int>& y_true, const std::vector<int>& y_pred,
                          const std::vector<std::string>& class_order) {
  if (y_true.size() != y_pred.size()) fail(ErrorKind::data, "confusion: label size mismatch");
  if (class_order.empty()) fail(ErrorKind::data, "confusion: empty class order");
  ConfusionMatrix cm;
  cm.class_order = class_order;
  const int k = cm.k();
  cm.counts.assign(static_cast<size_t>(k) * k, 0);
  for (size_t i = 0; i < y_true.size(); ++i) {
    if (y_true[i] < 0 || y_true[i] >= k || y_pred[i] < 0 || y_pred[i] >= k) {
      fail(ErrorKind::data, "confusion: label outside class order at row " + std::to_string(i));
    }
    ++cm.at(y_true[i], y_pred[i]);
  }
  return cm;
}

ClassReport classification_report(const ConfusionMatrix& cm) {
  const int k = cm.k();
  if (k == 0 || cm.total() == 0) fail(ErrorKind::data, "classification_report: empty matrix");
  ClassReport rep;
  rep.class_order = cm.class_order;
  const std::vector<int64_t> rows = cm.row_sums();
  const std::vector<int64_t> cols = cm.col_sums();
  const auto total = static_cast<double>(cm.total());

  double macro_p = 0.0, macro_r = 0.0, macro_f = 0.0;
  double weighted_p = 0.0, weighted_f = 0.0;
  for (int i = 0; i < k; ++i) {
    ClassMetrics m;
    m.support = rows[static_cast<size_t>(i)];
    const auto diag = static_cast<double>(cm.at(i, i));
    m.precision = cols[static_cast<size_t>(i)] > 0
                      ? diag / static_cast<double>(cols[static_cast<size_t>(i)])
                      : 0.0;
    m.recall = m.support > 0 ? diag / static_cast<double>(m.support) : 0.0;
    m.f1 = (m.precision + m.recall) > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
                                          : 0.0;
    macro_p += m.precision;
    macro_r += m.recall;
    macro_f += m.f1;
    weighted_p += m.precision * static_cast<double>(m.support);
    weighted_f += m.f1 * static_cast<double>(m.support);
    rep.per_class.push_back(m);
  }
  rep.accuracy = cm.accuracy();
  rep.macro = {macro_p / k, macro_r / k, macro_f / k, cm.total()};
  // support-weighted recall is sum(diag)/total, i.e. the accuracy, exactly
  rep.weighted = {weighted_p / total, rep.accuracy, weighted_f / total, cm.total()};
  return rep;
}

// --------------------------------------------------------------- ROC / AUC

std::vector<RocCurve> roc_auc(const std::vector<int>& y_true,
                              const std::vector<std::vector<double>>& probs,
                              const std::vector<std::string>& class_order) {
  const int k = static_cast<int>(class_order.size());
  if (probs.size() != y_true.size()) fail(ErrorKind::data, "roc_auc: probs/labels size mismatch");
  for (const auto& row : probs) {
    if (static_cast<int>(row.size()) != k) fail(ErrorKind::data, "roc_auc: bad probs width");
  }

  std::vector<RocCurve> out;
  for (int c = 0; c < k; ++c) {
    RocCurve curve;
    curve.class_name = class_order[static_cast<size_t>(c)];
    int64_t pos = 0, neg = 0;
    std::vector<std::pair<double, int>> scored;  // (score, is_positive)
    scored.reserve(y_true.size());
    for (size_t i = 0; i < y_true.size(); ++i) {
      const bool is_pos = y_true[i] == c;
      pos += is_pos;
      neg += !is_pos;
      scored.emplace_back(probs[i][static_cast<size_t>(c)], is_pos ? 1 : 0);
    }
    if (pos == 0 || neg == 0) {
      curve.defined = false;
      curve.auc = 0.0;
      out.push_back(std::move(curve));
      continue;
    }
    std::sort(scored.begin(), scored.end(),
              [](const auto& a, const auto& b) { return a.first > b.first; });

    curve.fpr.push_back(0.0);
    curve.tpr.push_back(0.0);
    int64_t tp = 0, fp = 0;
    size_t i = 0;
    while (i < scored.size()) {
      const double s = scored[i].first;
      // one sweep point per distinct score: take the whole tie group
      while (i < scored.size() && scored[i].first == s) {
        tp += scored[i].second;
        fp += 1 - scored[i].second;
        ++i;
      }
      curve.thresholds.push_back(s);
      curve.fpr.push_back(static_cast<double>(fp) / static_cast<double>(neg));
      curve.tpr.push_back(static_cast<double>(tp) / static_cast<double>(pos));
    }
    double auc = 0.0;
    for (size_t p = 1; p < curve.fpr.size(); ++p) {
      auc += (curve.fpr[p] - curve.fpr[p - 1]) * (curve.tpr[p] + curve.tpr[p - 1]) / 2.0;
    }
    curve.auc = auc;
    out.push_back(std::move(curve));
  }
  return out;
}

// -------------------------------------------------------------- rendering

namespace {

int name_column_width(const std::vector<std::string>& names) {
  size_t w = std::string("Overall Accuracy").size();
  for (const auto& n : names) w = std::max(w, n.size());
  return static_cast<int>(w) + 4;
}

std::string g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void open_or_fail(std::ofstream& f, const std::string& path, const char* what) {
  f.open(path, std::ios::trunc);
  if (!f) fail(ErrorKind::io, std::string("cannot write ") + what + ": " + path);
}

}  // namespace

std::string render_report_text(const ClassReport& report) {
  const int w = name_column_width(report.class_order);
  char buf[256];
  std::string out;
  std::snprintf(buf, sizeof(buf), "%-*s%-7s%-7s%-7s%7s\n", w, "Genre", "Prec.", "Rec.", "F1",
                "Supp.");
  out += buf;
  auto row = [&](const std::string& name, const ClassMetrics& m) {
    std::snprintf(buf, sizeof(buf), "%-*s%-7.2f%-7.2f%-7.2f%7lld\n", w, name.c_str(), m.precision,
                  m.recall, m.f1, static_cast<long long>(m.support));
    out += buf;
  };
  for (size_t i = 0; i < report.per_class.size(); ++i) {
    row(report.class_order[i], report.per_class[i]);
  }
  row("Macro Avg", report.macro);
  row("Weighted Avg", report.weighted);
  std::snprintf(buf, sizeof(buf), "%-*s%.0f%%\n", w, "Overall Accuracy", report.accuracy * 100.0);
  out += buf;
  return out;
}

void write_report_text(const std::string& path, const ClassReport& report) {
  std::ofstream f;
  open_or_fail(f, path, "report");
  f << render_report_text(report);
}

void write_report_csv(const std::string& path, const ClassReport& report) {
  std::ofstream f;
  open_or_fail(f, path, "report csv");
  f << "class,precision,recall,f1,support\n";
  for (size_t i = 0; i < report.per_class.size(); ++i) {
    const auto& m = report.per_class[i];
    f << report.class_order[i] << "," << g17(m.precision) << "," << g17(m.recall) << ","
      << g17(m.f1) << "," << m.support << "\n";
  }
  f << "macro avg," << g17(report.macro.precision) << "," << g17(report.macro.recall) << ","
    << g17(report.macro.f1) << "," << report.macro.support << "\n";
  f << "weighted avg," << g17(report.weighted.precision) << "," << g17(report.weighted.recall)
    << "," << g17(report.weighted.f1) << "," << report.weighted.support << "\n";
  f << "accuracy," << g17(report.accuracy) << ",,," << report.macro.support << "\n";
}

ClassReport parse_report_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail(ErrorKind::io, "cannot open report csv: " + path);
  std::string line;
  if (!std::getline(f, line) || line != "class,precision,recall,f1,support") {
    fail(ErrorKind::format, "report csv missing header: " + path);
  }
  ClassReport rep;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string name, p, r, f1, s;
    std::getline(ss, name, ',');
    std::getline(ss, p, ',');
    std::getline(ss, r, ',');
    std::getline(ss, f1, ',');
    std::getline(ss, s);
    if (name == "accuracy") {
      rep.accuracy = std::stod(p);
    } else if (name == "macro avg") {
      rep.macro = {std::stod(p), std::stod(r), std::stod(f1), std::stoll(s)};
    } else if (name == "weighted avg") {
      rep.weighted = {std::stod(p), std::stod(r), std::stod(f1), std::stoll(s)};
    } else {
      rep.class_order.push_back(name);
      rep.per_class.push_back({std::stod(p), std::stod(r), std::stod(f1), std::stoll(s)});
    }
  }
  return rep;
}

void write_confusion_csv(const std::string& path, const ConfusionMatrix& cm) {
  std::ofstream f;
  open_or_fail(f, path, "confusion csv");
  f << "true\\pred";
  for (const auto& name : cm.class_order) f << "," << name;
  f << "\n";
  for (int i = 0; i < cm.k(); ++i) {
    f << cm.class_order[static_cast<size_t>(i)];
    for (int j = 0; j < cm.k(); ++j) f << "," << cm.at(i, j);
    f << "\n";
  }
}

ConfusionMatrix parse_confusion_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail(ErrorKind::io, "cannot open confusion csv: " + path);
  std::string line;
  if (!std::getline(f, line)) fail(ErrorKind::format, "confusion csv empty: " + path);
  std::stringstream hs(line);
  std::string cell;
  std::getline(hs, cell, ',');
  if (cell != "true\\pred") fail(ErrorKind::format, "confusion csv missing header: " + path);
  ConfusionMatrix cm;
  while (std::getline(hs, cell, ',')) cm.class_order.push_back(cell);
  const int k = cm.k();
  cm.counts.assign(static_cast<size_t>(k) * k, 0);
  for (int i = 0; i < k; ++i) {
    if (!std::getline(f, line)) fail(ErrorKind::format, "confusion csv truncated: " + path);
    std::stringstream ss(line);
    std::getline(ss, cell, ',');
    if (cell != cm.class_order[static_cast<size_t>(i)]) {
      fail(ErrorKind::format, "confusion csv row label mismatch: " + path);
    }
    for (int j = 0; j < k; ++j) {
      std::getline(ss, cell, ',');
      cm.at(i, j) = std::stoll(cell);
    }
  }
  return cm;
}

void write_roc_csv(const std::string& path, const std::vector<RocCurve>& curves) {
  std::ofstream f;
  open_or_fail(f, path, "roc csv");
  f << "class,threshold,fpr,tpr\n";
  for (const auto& c : curves) {
    if (!c.defined) continue;
    // the implicit (0,0) start point has no threshold; emit sweep points
    for (size_t i = 0; i < c.thresholds.size(); ++i) {
      f << c.class_name << "," << g17(c.thresholds[i]) << "," << g17(c.fpr[i + 1]) << ","
        << g17(c.tpr[i + 1]) << "\n";
    }
  }
}

void write_auc_csv(const std::string& path, const std::vector<RocCurve>& curves) {
  std::ofstream f;
  open_or_fail(f, path, "auc csv");
  f << "class,auc,defined\n";
  for (const auto& c : curves) {
    f << c.class_name << "," << (c.defined ? g17(c.auc) : "") << ","
      << (c.defined ? "1" : "0") << "\n";
  }
}

// ------------------------------------------------------------------- SVG

namespace {

const char* kPalette[8] = {"#1b6ca8", "#d95f02", "#1b9e77", "#d01c8b",
                           "#7570b3", "#66a61e", "#e6ab02", "#a6761d"};

class Svg {
 public:
  Svg(int w, int h) : w_(w), h_(h) {
    buf_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
         << "\" viewBox=\"0 0 " << w << " " << h << "\">\n";
    buf_ << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
  }
  void rect(double x, double y, double w, double h, const std::string& fill) {
    buf_ << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << w << "\" height=\"" << h
         << "\" fill=\"" << fill << "\"/>\n";
  }
  void line(double x1, double y1, double x2, double y2, const std::string& stroke,
            bool dashed = false) {
    buf_ << "<line x1=\"" << x1 << "\" y1=\"" << y1 << "\" x2=\"" << x2 << "\" y2=\"" << y2
         << "\" stroke=\"" << stroke << "\" stroke-width=\"1\""
         << (dashed ? " stroke-dasharray=\"4 3\"" : "") << "/>\n";
  }
  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke) {
    buf_ << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& [x, y] : pts) buf_ << x << "," << y << " ";
    buf_ << "\"/>\n";
  }
  void text(double x, double y, const std::string& s, int size = 11,
            const std::string& anchor = "start") {
    buf_ << "<text x=\"" << x << "\" y=\"" << y << "\" font-family=\"sans-serif\" font-size=\""
         << size << "\" text-anchor=\"" << anchor << "\">" << escape(s) << "</text>\n";
  }
  void save(const std::string& path) {
    buf_ << "</svg>\n";
    std::ofstream f(path, std::ios::trunc);
    if (!f) fail(ErrorKind::io, "cannot write svg: " + path);
    f << buf_.str();
  }

 private:
  static std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
      if (c == '&') out += "&amp;";
      else if (c == '<') out += "&lt;";
      else if (c == '>') out += "&gt;";
      else out += c;
    }
    return out;
  }
  int w_, h_;
  std::ostringstream buf_;
};

std::string heat_color(double frac) {
  // white -> deep blue
  const int r = static_cast<int>(255 - 200 * frac);
  const int g = static_cast<int>(255 - 160 * frac);
  const int b = 255;
  char buf[16];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
  return buf;
}

}  // namespace

void write_confusion_svg(const std::string& path, const ConfusionMatrix& cm) {
  const int k = cm.k();
  const double cell = 44.0;
  const double left = 130.0, top = 60.0;
  const int w = static_cast<int>(left + cell * k + 40);
  Svg svg(w, static_cast<int>(top + cell * k + 80));
  svg.text(left, 24, "Confusion matrix (rows: true, columns: predicted)", 13);
  int64_t mx = 1;
  for (int64_t v : cm.counts) mx = std::max(mx, v);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      const double frac = static_cast<double>(cm.at(i, j)) / static_cast<double>(mx);
      svg.rect(left + j * cell, top + i * cell, cell - 2, cell - 2, heat_color(frac));
      svg.text(left + j * cell + cell / 2 - 1, top + i * cell + cell / 2 + 4,
               std::to_string(cm.at(i, j)), 11, "middle");
    }
    svg.text(left - 8, top + i * cell + cell / 2 + 4, cm.class_order[static_cast<size_t>(i)], 10,
             "end");
    svg.text(left + i * cell + cell / 2, top + k * cell + 16,
             cm.class_order[static_cast<size_t>(i)].substr(0, 6), 9, "middle");
  }
  svg.save(path);
}

void write_roc_svg(const std::string& path, const std::vector<RocCurve>& curves) {
  const double left = 60, top = 40, size = 360;
  Svg svg(static_cast<int>(left + size + 220), static_cast<int>(top + size + 60));
  svg.text(left, 22, "Per-class ROC curves (one-vs-rest)", 13);
  svg.rect(left, top, size, size, "none");
  svg.line(left, top, left, top + size, "#333");
  svg.line(left, top + size, left + size, top + size, "#333");
  svg.line(left, top + size, left + size, top, "#999", /*dashed=*/true);
  svg.text(left + size / 2, top + size + 34, "false positive rate", 11, "middle");
  svg.text(18, top + size / 2, "TPR", 11);
  int color = 0;
  double legend_y = top + 12;
  for (const auto& c : curves) {
    if (!c.defined) {
      svg.text(left + size + 16, legend_y, c.class_name + "  (AUC undefined)", 10);
      legend_y += 16;
      continue;
    }
    std::vector<std::pair<double, double>> pts;
    for (size_t i = 0; i < c.fpr.size(); ++i) {
      pts.emplace_back(left + c.fpr[i] * size, top + size - c.tpr[i] * size);
    }
    const std::string col = kPalette[color % 8];
    svg.polyline(pts, col);
    char label[128];
    std::snprintf(label, sizeof(label), "%s  (AUC %.2f)", c.class_name.c_str(), c.auc);
    svg.rect(left + size + 16, legend_y - 8, 10, 10, col);
    svg.text(left + size + 32, legend_y, label, 10);
    legend_y += 16;
    ++color;
  }
  svg.save(path);
}

void write_training_curves_svg(const std::string& path,
                               const std::vector<models::EpochStats>& curves) {
  const double left = 60, top = 40, pw = 300, ph = 220, gap = 80;
  Svg svg(static_cast<int>(left + 2 * pw + gap + 60), static_cast<int>(top + ph + 70));
  svg.text(left, 22, "Training dynamics", 13);
  if (curves.empty()) {
    svg.text(left, top + 40, "(no curves recorded)", 11);
    svg.save(path);
    return;
  }

  auto panel = [&](double x0, const std::string& title, bool losses) {
    double mx = 1e-9;
    for (const auto& s : curves) {
      mx = std::max(mx, losses ? std::max(s.train_loss, s.val_loss) : 1.0);
    }
    svg.line(x0, top, x0, top + ph, "#333");
    svg.line(x0, top + ph, x0 + pw, top + ph, "#333");
    svg.text(x0 + pw / 2, top + ph + 30, "epoch", 10, "middle");
    svg.text(x0, top - 8, title, 11);
    auto series = [&](bool val) {
      std::vector<std::pair<double, double>> pts;
      for (size_t i = 0; i < curves.size(); ++i) {
        const auto& s = curves[i];
        const double v = losses ? (val ? s.val_loss : s.train_loss)
                                : (val ? s.val_acc : s.train_acc);
        const double x = x0 + (curves.size() == 1
                                   ? pw / 2
                                   : pw * static_cast<double>(i) /
                                         static_cast<double>(curves.size() - 1));
        pts.emplace_back(x, top + ph - ph * (v / mx));
      }
      return pts;
    };
    svg.polyline(series(false), kPalette[0]);
    svg.polyline(series(true), kPalette[1]);
  };
  panel(left, "accuracy (blue: train, orange: val)", false);
  panel(left + pw + gap, "loss (blue: train, orange: val)", true);
  svg.save(path);
}

}  // namespace mgt::eval
