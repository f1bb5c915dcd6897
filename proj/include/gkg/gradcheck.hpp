#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "gkg/params.hpp"

namespace gkg {

struct GradcheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
};

struct GradcheckOptions {
  double step = 1e-5;
  // Fraction of scalar entries to probe; 1 checks every entry.
  double fraction = 1.0;
  std::uint64_t seed = 0;
  // Magnitude below which errors are measured in absolute terms. Central
  // differences at h = 1e-5 carry roughly 1e-11 of roundoff for O(1)
  // losses, so smaller gradients cannot be resolved relatively.
  double floor = 1e-6;
};

// Compares store[*].grad (already filled by the caller) against central
// differences (f(x+h) - f(x-h)) / 2h for every probed scalar. The relative
// error of one entry is |a - n| / max(|a|, |n|, floor). Values are restored
// after each probe.
GradcheckResult finite_difference_gradcheck(const std::function<double(const ParamStore&)>& loss,
                                            ParamStore& store, const GradcheckOptions& options = {});

}  // namespace gkg
