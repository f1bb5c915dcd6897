#pragma once

#include <cstdint>
#include <span>

#include "gkg/tape.hpp"

namespace gkg {

using Targets = std::span<const std::uint8_t>;

struct LossConfig {
  double smooth_eps = 0.1;
  double gamma_pos = 0.0;
  double gamma_neg = 4.0;
  double margin = 0.05;
  double floor = 1e-8;

  void validate() const;
};

// Mean over classes of BCE against y' = y (1 - eps) + eps / 2, with
// probabilities clamped to [floor, 1 - floor].
Var label_smooth_bce(Tape& tape, Var logits, Targets targets, double eps, double floor = 1e-8);

// Mean over classes of
//   y = 1: (1 - p)^gamma_pos * -log p
//   y = 0: p_m^gamma_neg * -log(1 - p_m),  p_m = max(p - margin, 0)
Var asymmetric_loss(Tape& tape, Var logits, Targets targets, double gamma_pos, double gamma_neg, double margin,
                    double floor = 1e-8);

Var total_loss(Tape& tape, Var logits, Targets targets, const LossConfig& config);

// Value-only forms.
double label_smooth_bce(std::span<const double> logits, Targets targets, double eps, double floor = 1e-8);
double asymmetric_loss(std::span<const double> logits, Targets targets, double gamma_pos, double gamma_neg,
                       double margin, double floor = 1e-8);
double total_loss(std::span<const double> logits, Targets targets, const LossConfig& config);

}  // namespace gkg
