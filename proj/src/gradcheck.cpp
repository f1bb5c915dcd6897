#include "gkg/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "gkg/errors.hpp"

namespace gkg {

GradcheckResult finite_difference_gradcheck(const std::function<double(const ParamStore&)>& loss,
                                            ParamStore& store, const GradcheckOptions& options) {
  if (!(options.step > 0)) throw ArgumentError("gradcheck step must be positive");
  if (!(options.fraction > 0 && options.fraction <= 1)) throw ArgumentError("gradcheck fraction must be in (0, 1]");
  std::mt19937_64 rng(options.seed);
  const double h = options.step;
  GradcheckResult result;
  for (auto& p : store) {
    auto values = p.value.data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (options.fraction < 1.0) {
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        if (u >= options.fraction) continue;
      }
      const double saved = values[i];
      values[i] = saved + h;
      const double up = loss(store);
      values[i] = saved - h;
      const double down = loss(store);
      values[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericError("non-finite loss while probing " + p.name + "[" + std::to_string(i) + "]");
      }
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = p.grad[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), options.floor});
      const double rel = std::abs(analytic - numeric) / denom;
      ++result.checked;
      if (rel > result.max_rel_error || result.worst_param.empty()) {
        result.max_rel_error = rel;
        result.worst_param = p.name;
        result.worst_index = i;
        result.worst_analytic = analytic;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace gkg
