#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace scavit {

/// Binary confusion counts with class 1 as the positive class.
struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t tn = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + tn + fp + fn; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

ConfusionCounts confusion(std::span<const int> predictions, std::span<const int> labels);

/// A metric value; `degenerate` is set when the denominator was zero, in
/// which case `value` is 0.
struct Metric {
  double value = 0.0;
  bool degenerate = false;
};

/// Throws ValueError on an empty confusion.
double accuracy(const ConfusionCounts& c);
Metric recall(const ConfusionCounts& c);
Metric precision(const ConfusionCounts& c);
Metric f1(const ConfusionCounts& c);
/// Harmonic mean of a precision/recall pair; degenerate when both are 0.
Metric f1_from(double precision, double recall);

struct RocCurve {
  /// Decreasing; the first entry is +inf (nothing predicted positive).
  std::vector<double> thresholds;
  std::vector<double> fpr;
  std::vector<double> tpr;
};

/// One point per threshold: +inf, then every distinct score in decreasing
/// order. A sample is predicted positive when score >= threshold.
RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels);

/// Trapezoidal area under the curve.
double auc(const RocCurve& curve);

struct MetricsReport {
  ConfusionCounts counts;
  double accuracy = 0.0;
  Metric recall;
  Metric precision;
  Metric f1;
  double auc = std::numeric_limits<double>::quiet_NaN();
  bool auc_degenerate = false;
};

/// Full report; AUC is flagged degenerate (and reported as 0) when only one
/// class is present.
MetricsReport make_report(std::span<const int> predictions, std::span<const int> labels,
                          std::span<const double> scores);

std::string report_json(const MetricsReport& report);
std::string roc_csv(const RocCurve& curve);

/// Fraction as a percentage rounded half-up to two decimals ("99.23"). The
/// rounding works on the shortest decimal form of the value, so 0.99125
/// gives "99.13" even though 99.125 is not exactly representable.
std::string percent_2dp(double fraction);

}  // namespace scavit
