#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "gkg/tensor.hpp"

namespace gkg {

struct ThresholdMetrics {
  double cp = 0, cr = 0, cf1 = 0;
  double op = 0, or_ = 0, of1 = 0;
};

struct MetricsReport {
  double map = 0;
  double cp = 0, cr = 0, cf1 = 0;
  double op = 0, or_ = 0, of1 = 0;
  double top3_cp = 0, top3_cr = 0, top3_cf1 = 0;
  double top3_op = 0, top3_or = 0, top3_of1 = 0;
  // NaN for classes without positives; those classes are listed in
  // excluded_classes and left out of mAP.
  std::vector<double> per_class_ap;
  std::vector<std::size_t> excluded_classes;
};

// Precision averaged over the ranks of the positives, ranking by descending
// score with ties broken by ascending sample index. nullopt when no target
// is positive.
std::optional<double> average_precision(std::span<const double> scores, std::span<const std::uint8_t> targets);

// Precision/recall/F1 from 0/1 predictions, both [n x L] row-major.
ThresholdMetrics confusion_metrics(std::span<const std::uint8_t> predictions, std::span<const std::uint8_t> targets,
                                   std::size_t num_classes);

// scores: [n x L]; targets: n*L flags, row-major.
MetricsReport evaluate(const Tensor& scores, std::span<const std::uint8_t> targets, double threshold = 0.5);

}  // namespace gkg
