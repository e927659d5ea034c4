#include "scavit/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <json.hpp>
#include <numeric>
#include <sstream>

#include "scavit/errors.hpp"

namespace scavit {

namespace {

void require_binary(std::span<const int> values, const char* what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] != 0 && values[i] != 1) {
      throw ValueError(std::string(what) + "[" + std::to_string(i) +
                       "] = " + std::to_string(values[i]) + " is not a binary class");
    }
  }
}

Metric ratio(std::size_t num, std::size_t den) {
  if (den == 0) return {0.0, true};
  return {static_cast<double>(num) / static_cast<double>(den), false};
}

}  // namespace

ConfusionCounts confusion(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) {
    throw ShapeError("confusion: " + std::to_string(predictions.size()) + " predictions for " +
                     std::to_string(labels.size()) + " labels");
  }
  require_binary(predictions, "predictions");
  require_binary(labels, "labels");
  ConfusionCounts c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 1) {
      ++(predictions[i] == 1 ? c.tp : c.fn);
    } else {
      ++(predictions[i] == 1 ? c.fp : c.tn);
    }
  }
  return c;
}

double accuracy(const ConfusionCounts& c) {
  if (c.total() == 0) throw ValueError("accuracy of an empty confusion");
  return static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
}

Metric recall(const ConfusionCounts& c) { return ratio(c.tp, c.tp + c.fn); }

Metric precision(const ConfusionCounts& c) { return ratio(c.tp, c.tp + c.fp); }

Metric f1_from(double p, double r) {
  if (p + r == 0.0) return {0.0, true};
  return {2.0 * p * r / (p + r), false};
}

Metric f1(const ConfusionCounts& c) {
  const Metric p = precision(c), r = recall(c);
  Metric out = f1_from(p.value, r.value);
  out.degenerate = out.degenerate || p.degenerate || r.degenerate;
  return out;
}

RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw ShapeError("roc_curve: " + std::to_string(scores.size()) + " scores for " +
                     std::to_string(labels.size()) + " labels");
  }
  require_binary(labels, "labels");
  for (double s : scores) {
    if (!(s >= 0.0 && s <= 1.0)) throw ValueError("roc_curve: scores must lie in [0, 1]");
  }
  const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  const std::size_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw ValueError("roc_curve needs both classes present");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve curve;
  curve.thresholds.push_back(std::numeric_limits<double>::infinity());
  curve.fpr.push_back(0.0);
  curve.tpr.push_back(0.0);
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double threshold = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == threshold; ++i) {
      ++(labels[order[i]] == 1 ? tp : fp);
    }
    curve.thresholds.push_back(threshold);
    curve.fpr.push_back(static_cast<double>(fp) / static_cast<double>(negatives));
    curve.tpr.push_back(static_cast<double>(tp) / static_cast<double>(positives));
  }
  return curve;
}

double auc(const RocCurve& curve) {
  if (curve.fpr.size() != curve.tpr.size() || curve.fpr.size() < 2) {
    throw ValueError("auc: curve needs at least two matching points");
  }
  double area = 0.0;
  for (std::size_t i = 1; i < curve.fpr.size(); ++i) {
    const double dx = curve.fpr[i] - curve.fpr[i - 1];
    if (dx < 0.0) throw ValueError("auc: fpr must be non-decreasing");
    area += dx * (curve.tpr[i] + curve.tpr[i - 1]) / 2.0;
  }
  return area;
}

MetricsReport make_report(std::span<const int> predictions, std::span<const int> labels,
                          std::span<const double> scores) {
  MetricsReport r;
  r.counts = confusion(predictions, labels);
  r.accuracy = accuracy(r.counts);
  r.recall = recall(r.counts);
  r.precision = precision(r.counts);
  r.f1 = f1(r.counts);
  const bool both_classes = (r.counts.tp + r.counts.fn) > 0 && (r.counts.tn + r.counts.fp) > 0;
  if (both_classes) {
    r.auc = auc(roc_curve(scores, labels));
  } else {
    r.auc = 0.0;
    r.auc_degenerate = true;
  }
  return r;
}

std::string report_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["accuracy"] = r.accuracy;
  j["recall"] = r.recall.value;
  j["precision"] = r.precision.value;
  j["f1"] = r.f1.value;
  j["auc"] = r.auc;
  j["confusion"] = {
      {"tp", r.counts.tp}, {"tn", r.counts.tn}, {"fp", r.counts.fp}, {"fn", r.counts.fn}};
  j["degenerate_flags"] = {{"recall", r.recall.degenerate},
                           {"precision", r.precision.degenerate},
                           {"f1", r.f1.degenerate},
                           {"auc", r.auc_degenerate}};
  return j.dump(2) + "\n";
}

std::string roc_csv(const RocCurve& curve) {
  std::ostringstream os;
  os << "threshold,fpr,tpr\n";
  auto num = [](double v) -> std::string {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
  };
  for (std::size_t i = 0; i < curve.thresholds.size(); ++i) {
    os << num(curve.thresholds[i]) << ',' << num(curve.fpr[i]) << ',' << num(curve.tpr[i]) << '\n';
  }
  return os.str();
}

std::string percent_2dp(double fraction) {
  if (!std::isfinite(fraction)) throw ValueError("percent_2dp of a non-finite value");
  char buf[512];
  auto res = std::to_chars(buf, buf + sizeof(buf), std::fabs(fraction), std::chars_format::fixed);
  std::string text(buf, res.ptr);
  const auto dot = text.find('.');
  std::string int_part = dot == std::string::npos ? text : text.substr(0, dot);
  std::string frac_part = dot == std::string::npos ? "" : text.substr(dot + 1);
  frac_part.resize(std::max<std::size_t>(frac_part.size(), 5), '0');
  // Hundredths of a percent, truncated; frac_part[4] decides the rounding.
  std::string digits = int_part + frac_part.substr(0, 4);
  if (frac_part[4] >= '5') {
    std::size_t i = digits.size();
    while (i > 0 && digits[i - 1] == '9') digits[--i] = '0';
    if (i == 0) {
      digits.insert(digits.begin(), '1');
    } else {
      ++digits[i - 1];
    }
  }
  digits.erase(0, std::min(digits.find_first_not_of('0'), digits.size() - 3));
  std::string out = digits.substr(0, digits.size() - 2) + "." + digits.substr(digits.size() - 2);
  if (fraction < 0.0 && out.find_first_not_of("0.") != std::string::npos) out = "-" + out;
  return out;
}

}  // namespace scavit
