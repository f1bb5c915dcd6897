#include "gkg/losses.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "gkg/errors.hpp"
#include "gkg/ops.hpp"

namespace gkg {
namespace {

struct ValueGrad {
  double value;
  double grad;  // d value / d logit
};

// -log(max(x, floor)); derivative w.r.t. x is zero inside the clamp.
struct NegLog {
  double value;
  double dx;
};
NegLog neg_log_clamped(double x, double floor) {
  if (x < floor) return {-std::log(floor), 0.0};
  return {-std::log(x), -1.0 / x};
}

ValueGrad smooth_bce_term(double z, bool positive, double eps, double floor) {
  const double y = (positive ? 1.0 : 0.0) * (1.0 - eps) + eps / 2.0;
  const double s = ops::sigmoid(z);
  const double p = std::clamp(s, floor, 1.0 - floor);
  const double value = -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
  const bool clamped = s < floor || s > 1.0 - floor;
  // d/dp = -y/p + (1-y)/(1-p); dp/dz = p(1-p)
  const double grad = clamped ? 0.0 : (p - y);
  return {value, grad};
}

ValueGrad asymmetric_term(double z, bool positive, double gamma_pos, double gamma_neg, double margin, double floor) {
  const double p = ops::sigmoid(z);
  const double dp = p * (1.0 - p);
  if (positive) {
    const double q = 1.0 - p;
    const NegLog nl = neg_log_clamped(p, floor);
    const double focus = gamma_pos == 0.0 ? 1.0 : std::pow(q, gamma_pos);
    const double dfocus = gamma_pos == 0.0 ? 0.0 : -gamma_pos * std::pow(q, gamma_pos - 1.0);
    return {focus * nl.value, (dfocus * nl.value + focus * nl.dx) * dp};
  }
  const double shifted = p - margin;
  if (shifted <= 0.0) return {0.0, 0.0};
  const NegLog nl = neg_log_clamped(1.0 - shifted, floor);
  const double focus = gamma_neg == 0.0 ? 1.0 : std::pow(shifted, gamma_neg);
  const double dfocus = gamma_neg == 0.0 ? 0.0 : gamma_neg * std::pow(shifted, gamma_neg - 1.0);
  // d/dshifted of -log(1 - shifted) is -nl.dx
  return {focus * nl.value, (dfocus * nl.value - focus * nl.dx) * dp};
}

template <typename Term>
std::pair<double, std::vector<double>> reduce(std::span<const double> logits, Targets targets, Term term) {
  if (logits.size() != targets.size()) {
    throw DimensionError("loss: " + std::to_string(logits.size()) + " logits vs " + std::to_string(targets.size()) +
                         " targets");
  }
  const double inv = 1.0 / static_cast<double>(logits.size());
  double total = 0.0;
  std::vector<double> grads(logits.size());
  for (std::size_t c = 0; c < logits.size(); ++c) {
    const ValueGrad vg = term(logits[c], targets[c] != 0);
    total += vg.value;
    grads[c] = vg.grad * inv;
  }
  return {total * inv, std::move(grads)};
}

Var push_loss(Tape& tape, Var logits, std::pair<double, std::vector<double>> result) {
  return tape.push(Tensor::scalar(result.first), {logits},
                   [logits, grads = std::move(result.second)](Tape& t, const Tensor& g) {
                     Tensor& gl = t.grad_slot(logits);
                     for (std::size_t c = 0; c < grads.size(); ++c) gl[c] += g[0] * grads[c];
                   });
}

}  // namespace

void LossConfig::validate() const {
  if (!(smooth_eps >= 0.0 && smooth_eps < 1.0)) throw ConfigError("loss.smooth_eps: must lie in [0, 1)");
  if (!(gamma_pos >= 0.0)) throw ConfigError("loss.gamma_pos: must be >= 0");
  if (!(gamma_neg >= 0.0)) throw ConfigError("loss.gamma_neg: must be >= 0");
  if (!(margin >= 0.0 && margin < 1.0)) throw ConfigError("loss.margin: must lie in [0, 1)");
  if (!(floor > 0.0 && floor < 0.5)) throw ConfigError("loss.floor: must lie in (0, 0.5)");
}

double label_smooth_bce(std::span<const double> logits, Targets targets, double eps, double floor) {
  return reduce(logits, targets, [&](double z, bool y) { return smooth_bce_term(z, y, eps, floor); }).first;
}

double asymmetric_loss(std::span<const double> logits, Targets targets, double gamma_pos, double gamma_neg,
                       double margin, double floor) {
  return reduce(logits, targets, [&](double z, bool y) {
           return asymmetric_term(z, y, gamma_pos, gamma_neg, margin, floor);
         }).first;
}

double total_loss(std::span<const double> logits, Targets targets, const LossConfig& config) {
  return label_smooth_bce(logits, targets, config.smooth_eps, config.floor) +
         asymmetric_loss(logits, targets, config.gamma_pos, config.gamma_neg, config.margin, config.floor);
}

Var label_smooth_bce(Tape& tape, Var logits, Targets targets, double eps, double floor) {
  return push_loss(tape, logits, reduce(tape.value(logits).data(), targets, [&](double z, bool y) {
                     return smooth_bce_term(z, y, eps, floor);
                   }));
}

Var asymmetric_loss(Tape& tape, Var logits, Targets targets, double gamma_pos, double gamma_neg, double margin,
                    double floor) {
  return push_loss(tape, logits, reduce(tape.value(logits).data(), targets, [&](double z, bool y) {
                     return asymmetric_term(z, y, gamma_pos, gamma_neg, margin, floor);
                   }));
}

Var total_loss(Tape& tape, Var logits, Targets targets, const LossConfig& config) {
  Var smooth = label_smooth_bce(tape, logits, targets, config.smooth_eps, config.floor);
  Var asym = asymmetric_loss(tape, logits, targets, config.gamma_pos, config.gamma_neg, config.margin, config.floor);
  return ops::add(tape, smooth, asym);
}

}  // namespace gkg
