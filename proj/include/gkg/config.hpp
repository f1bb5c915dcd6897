#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "gkg/dataset.hpp"
#include "gkg/losses.hpp"
#include "gkg/model.hpp"
#include "gkg/optim.hpp"

namespace gkg {

enum class Precision { f32, f64 };

struct OptimizerConfig {
  double lr = 1e-3;
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t warmup_steps = 200;
  std::vector<int> decay_epochs{15, 25};
  int epochs = 30;
  std::size_t batch_size = 32;
};

struct DataConfig {
  std::uint64_t seed = 0;
  std::size_t train_samples = 2000;
  std::size_t val_samples = 500;
  std::size_t max_objects = 4;
  double noise = 0.08;
};

struct GradcheckConfig {
  double step = 1e-5;
  double fraction = 1.0;
  double tolerance = 1e-4;
  std::size_t batch = 2;
};

struct RunConfig {
  ModelConfig model = ModelConfig::micro();
  LossConfig loss;
  OptimizerConfig optimizer;
  DataConfig data;
  GradcheckConfig gradcheck;
  std::uint64_t seed = 0;
  bool capture_graphs = false;
  Precision precision = Precision::f32;

  ShapesConfig train_set() const;
  ShapesConfig val_set() const;
  // Checks every field against the preconditions of the modules it feeds.
  // Throws ConfigError with the dotted field path.
  void validate() const;
};

// Missing keys keep their defaults; unknown keys are rejected.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& file);
nlohmann::json to_json(const RunConfig& config);
nlohmann::json to_json(const ModelConfig& config);

}  // namespace gkg
