#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gkg/config.hpp"
#include "gkg/gradcheck.hpp"
#include "gkg/metrics.hpp"
#include "gkg/model.hpp"
#include "gkg/training.hpp"

namespace gkg {

// Process exit codes shared by every subcommand.
enum ExitCode : int { kExitOk = 0, kExitCheckFailed = 1, kExitConfig = 2, kExitNumeric = 3 };

// Trains the graph network; writes metrics.jsonl, final.ckpt.json and
// best.ckpt.json (highest validation mAP) into out_dir.
TrainResult run_train(const RunConfig& config, const std::filesystem::path& out_dir);

// Loads a checkpoint, or builds a fresh model from the config seed when no
// checkpoint is given. Dataset defaults to the config's validation split.
MetricsReport run_eval(const RunConfig& config, const std::optional<std::filesystem::path>& checkpoint,
                       const std::optional<std::filesystem::path>& dataset_dir);
nlohmann::json metrics_to_json(const MetricsReport& report);

struct GradcheckRun {
  GradcheckResult result;
  bool passed = false;
};
// Float64 finite-difference check of the total loss over one batch with the
// KNN graphs frozen at their unperturbed values. `tamper` runs after the
// analytic gradients are computed (test hook for negative controls).
GradcheckRun run_gradcheck(const RunConfig& config, std::optional<double> fraction = std::nullopt,
                           const std::function<void(ParamStore&)>& tamper = {});

enum class SweepAxis { groups, k };
std::optional<SweepAxis> parse_sweep_axis(const std::string& text);
// Validates every value before any training; throws ConfigError.
std::vector<RunConfig> sweep_configs(const RunConfig& base, SweepAxis axis, const std::vector<std::size_t>& values);
// CSV with header value,map,cf1,of1,wall_s; clamped-K notes follow as '#'
// comment lines. Per-value training logs go to out_dir/<axis>_<value>/.
void run_sweep(const RunConfig& base, SweepAxis axis, const std::vector<std::size_t>& values,
               const std::filesystem::path& out_dir, std::ostream& csv);

// Connection record for one forward pass (schemas/connections.schema.json).
nlohmann::json connection_record(const GkgModel& model, const Tensor& image);
// Loads the image as float32 raw (config dims) or P6 PPM by extension.
Tensor load_image(const std::filesystem::path& file, const ModelConfig& config);

// Builds a model from a checkpoint file.
GkgModel load_model(const std::filesystem::path& checkpoint, RunConfig* config_out = nullptr);

}  // namespace gkg
