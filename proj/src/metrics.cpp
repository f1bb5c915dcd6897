#include "gkg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "gkg/errors.hpp"

namespace gkg {
namespace {

double ratio(double num, double den) { return den > 0 ? num / den : 0.0; }
double f1(double p, double r) { return p + r > 0 ? 2.0 * p * r / (p + r) : 0.0; }

}  // namespace

std::optional<double> average_precision(std::span<const double> scores, std::span<const std::uint8_t> targets) {
  if (scores.size() != targets.size()) throw DimensionError("average_precision: scores and targets differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  // Extended precision keeps the result correctly rounded for small
  // hand-checkable cases such as (1 + 2/3) / 2 == 5/6.
  long double hits = 0, sum = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (!targets[order[rank]]) continue;
    hits += 1;
    sum += hits / static_cast<long double>(rank + 1);
  }
  if (hits == 0) return std::nullopt;
  return static_cast<double>(sum / hits);
}

ThresholdMetrics confusion_metrics(std::span<const std::uint8_t> predictions, std::span<const std::uint8_t> targets,
                                   std::size_t num_classes) {
  if (predictions.size() != targets.size() || num_classes == 0 || targets.size() % num_classes != 0) {
    throw DimensionError("confusion_metrics: inconsistent prediction/target sizes");
  }
  std::vector<double> tp(num_classes), fp(num_classes), fn(num_classes);
  for (std::size_t e = 0; e < targets.size(); ++e) {
    const std::size_t c = e % num_classes;
    if (predictions[e] && targets[e]) tp[c] += 1;
    else if (predictions[e]) fp[c] += 1;
    else if (targets[e]) fn[c] += 1;
  }
  ThresholdMetrics m;
  double tp_all = 0, fp_all = 0, fn_all = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    m.cp += ratio(tp[c], tp[c] + fp[c]);
    m.cr += ratio(tp[c], tp[c] + fn[c]);
    tp_all += tp[c];
    fp_all += fp[c];
    fn_all += fn[c];
  }
  m.cp /= static_cast<double>(num_classes);
  m.cr /= static_cast<double>(num_classes);
  m.cf1 = f1(m.cp, m.cr);
  m.op = ratio(tp_all, tp_all + fp_all);
  m.or_ = ratio(tp_all, tp_all + fn_all);
  m.of1 = f1(m.op, m.or_);
  return m;
}

MetricsReport evaluate(const Tensor& scores, std::span<const std::uint8_t> targets, double threshold) {
  if (scores.rank() != 2 || scores.size() != targets.size()) {
    throw DimensionError("evaluate: scores " + shape_string(scores.shape()) + " vs " + std::to_string(targets.size()) +
                         " targets");
  }
  const std::size_t n = scores.dim(0), classes = scores.dim(1);
  MetricsReport report;

  std::vector<std::uint8_t> predicted(scores.size());
  for (std::size_t e = 0; e < scores.size(); ++e) predicted[e] = scores[e] >= threshold ? 1 : 0;
  const ThresholdMetrics at = confusion_metrics(predicted, targets, classes);
  report.cp = at.cp, report.cr = at.cr, report.cf1 = at.cf1;
  report.op = at.op, report.or_ = at.or_, report.of1 = at.of1;

  std::vector<std::uint8_t> top3(scores.size(), 0);
  const std::size_t keep = std::min<std::size_t>(3, classes);
  std::vector<std::size_t> order(classes);
  for (std::size_t i = 0; i < n; ++i) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores(i, a) > scores(i, b); });
    for (std::size_t r = 0; r < keep; ++r) top3[i * classes + order[r]] = 1;
  }
  const ThresholdMetrics t3 = confusion_metrics(top3, targets, classes);
  report.top3_cp = t3.cp, report.top3_cr = t3.cr, report.top3_cf1 = t3.cf1;
  report.top3_op = t3.op, report.top3_or = t3.or_, report.top3_of1 = t3.of1;

  std::vector<double> col_scores(n);
  std::vector<std::uint8_t> col_targets(n);
  double ap_sum = 0;
  std::size_t ap_count = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      col_scores[i] = scores(i, c);
      col_targets[i] = targets[i * classes + c];
    }
    const auto ap = average_precision(col_scores, col_targets);
    if (ap) {
      report.per_class_ap.push_back(*ap);
      ap_sum += *ap;
      ++ap_count;
    } else {
      report.per_class_ap.push_back(std::numeric_limits<double>::quiet_NaN());
      report.excluded_classes.push_back(c);
    }
  }
  report.map = ap_count ? ap_sum / static_cast<double>(ap_count) : 0.0;
  return report;
}

}  // namespace gkg
