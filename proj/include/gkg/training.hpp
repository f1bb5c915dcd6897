#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "gkg/config.hpp"
#include "gkg/dataset.hpp"
#include "gkg/metrics.hpp"
#include "gkg/model.hpp"

namespace gkg {

// Anything with parameters that maps an image to L logits.
struct Classifier {
  std::function<Var(Tape&, const ParamStore&, const Tensor&)> logits;
  ParamStore* params = nullptr;
};

Classifier as_classifier(GkgModel& model);
Classifier as_classifier(LinearBaseline& model);

// Worker threads for batch fan-out: GKG_THREADS if set, else hardware
// concurrency (at least 1).
std::size_t worker_count();

// Calls fn(i) for i in [0, n) across worker_count() threads. Each index is
// handled exactly once; callers write results into per-index slots.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

struct EpochRecord {
  int epoch = 0;
  std::int64_t step = 0;
  double lr = 0;
  double train_loss = 0;
  MetricsReport val;
};

struct TrainOptions {
  // JSON-lines log, one line per epoch (epoch 0 = before any update).
  std::ostream* log = nullptr;
  std::function<void(const EpochRecord&, const ParamStore&)> on_epoch;
};

struct TrainResult {
  std::vector<EpochRecord> epochs;
  std::int64_t steps = 0;
  std::string rng_state;
};

TrainResult train(const RunConfig& config, const Classifier& model, const std::vector<MultiLabelSample>& train_set,
                  const std::vector<MultiLabelSample>& val_set, const TrainOptions& options = {});

// Mean total loss over samples without recording gradients.
double mean_loss(const Classifier& model, const std::vector<MultiLabelSample>& samples, const LossConfig& loss);
// Sigmoid scores [n x L].
Tensor predict_scores(const Classifier& model, const std::vector<MultiLabelSample>& samples);
std::vector<std::uint8_t> flat_targets(const std::vector<MultiLabelSample>& samples);

std::string epoch_log_line(const EpochRecord& record);

}  // namespace gkg
