#include "gkg/optim.hpp"

#include <cmath>

#include "gkg/errors.hpp"

namespace gkg {

void AdamW::step(ParamStore& store, double lr, std::int64_t t) {
  if (!(lr > 0)) throw ConfigError("AdamW learning rate must be positive, got " + std::to_string(lr));
  if (t < 1) throw ConfigError("AdamW step index must be >= 1");
  if (first_moment_.size() != store.size()) {
    first_moment_.clear();
    second_moment_.clear();
    for (const auto& p : store) {
      first_moment_.emplace_back(p.value.shape());
      second_moment_.emplace_back(p.value.shape());
    }
  }
  const auto& c = config_;
  const double bias1 = 1.0 - std::pow(c.beta1, static_cast<double>(t));
  const double bias2 = 1.0 - std::pow(c.beta2, static_cast<double>(t));
  std::size_t k = 0;
  for (auto& p : store) {
    auto value = p.value.data();
    auto grad = p.grad.data();
    auto m = first_moment_[k].data();
    auto v = second_moment_[k].data();
    for (std::size_t i = 0; i < value.size(); ++i) {
      value[i] -= lr * c.weight_decay * value[i];
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * grad[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * grad[i] * grad[i];
      const double m_hat = m[i] / bias1;
      const double v_hat = v[i] / bias2;
      value[i] -= lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
    ++k;
  }
}

double scheduled_lr(double base_lr, std::int64_t step, std::int64_t warmup_steps, int epoch,
                    const std::vector<int>& decay_epochs) {
  double lr = base_lr;
  if (warmup_steps > 0 && step < warmup_steps) {
    lr *= static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  }
  for (int e : decay_epochs) {
    if (epoch >= e) lr *= 0.1;
  }
  return lr;
}

}  // namespace gkg
