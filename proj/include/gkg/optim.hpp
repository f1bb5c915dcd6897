#pragma once

#include <cstdint>
#include <vector>

#include "gkg/params.hpp"

namespace gkg {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

// AdamW with decoupled weight decay and bias-corrected moments. Moment
// buffers are allocated on the first step.
class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {}) : config_(config) {}

  // t is the 1-based step index used for bias correction.
  void step(ParamStore& store, double lr, std::int64_t t);

  const AdamWConfig& config() const { return config_; }

 private:
  AdamWConfig config_;
  std::vector<Tensor> first_moment_;
  std::vector<Tensor> second_moment_;
};

// Linear warmup to base_lr over warmup_steps, then x0.1 at each decay epoch.
double scheduled_lr(double base_lr, std::int64_t step, std::int64_t warmup_steps, int epoch,
                    const std::vector<int>& decay_epochs);

}  // namespace gkg
