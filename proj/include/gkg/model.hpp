#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gkg/gcn.hpp"
#include "gkg/graph.hpp"
#include "gkg/params.hpp"
#include "gkg/tape.hpp"

namespace gkg {

struct ModelConfig {
  std::vector<std::size_t> dims{16, 32, 64, 64};
  std::vector<std::size_t> patch_modules{1, 1, 2, 1};
  std::vector<std::size_t> cross_modules{1, 1, 1, 1};
  std::size_t image_size = 32;
  std::size_t channels = 3;
  std::size_t patch_size = 2;
  std::size_t num_labels = 8;
  std::size_t k = 9;
  std::size_t groups = 2;
  std::size_t ffn_expansion = 4;

  // Desk-scale training preset: 16x16 -> 8x8 -> 4x4 -> 2x2 patch grids.
  static ModelConfig micro();
  // Smallest preset used by gradient checks: 8x8 -> 1x1 grids, L = 4.
  static ModelConfig tiny();

  std::size_t num_stages() const { return dims.size(); }
  std::vector<Grid> stage_grids() const;
  // Throws ConfigError naming the offending field.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct StagePlan {
  std::size_t num_patch_modules = 0;
  std::size_t num_cross_modules = 0;
  std::size_t dim = 0;
  Grid grid;
};

enum class ModuleKind { patch_level, cross_level };
const char* to_string(ModuleKind kind);

// One Group KGCN invocation as seen during a forward pass.
struct ModuleSnapshot {
  ModuleKind kind = ModuleKind::patch_level;
  std::size_t stage = 0;
  std::size_t index = 0;
  GroupedKnnGraph graph;
  Grid source_grid;
  // Destination features before and after the module (only when requested).
  Tensor dest_in;
  Tensor dest_out;
};

struct ForwardOptions {
  bool capture_graphs = false;
  bool capture_features = false;
  // Replays these graphs (in invocation order) instead of rebuilding them.
  const std::vector<GroupedKnnGraph>* frozen_graphs = nullptr;
};

struct ForwardVars {
  Var logits_patch;
  Var logits_label;
  Var logits;
  Var scores;
  std::vector<ModuleSnapshot> modules;
};

struct ForwardTrace {
  Tensor logits_patch;
  Tensor logits_label;
  Tensor scores;
  std::vector<ModuleSnapshot> modules;
};

struct DownsampleParams {
  ParamId w, b;
};

// Patch/label dual-graph network: patch embedding, a pyramid of stages each
// running patch-level modules then cross-level modules, and two logit heads
// summed before the sigmoid.
class GkgModel {
 public:
  GkgModel(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  std::vector<StagePlan> stage_plans() const;

  // Builds the full forward graph on `tape`, reading parameter values from
  // `store` (which must have this model's layout).
  ForwardVars forward(Tape& tape, const ParamStore& store, const Tensor& image,
                      const ForwardOptions& options = {}) const;
  ForwardVars forward(Tape& tape, const Tensor& image, const ForwardOptions& options = {}) const {
    return forward(tape, params_, image, options);
  }
  Var logits(Tape& tape, const ParamStore& store, const Tensor& image) const {
    return forward(tape, store, image).logits;
  }

  NodeSet patchify_embed(Tape& tape, const ParamStore& store, const Tensor& image) const;
  NodeSet downsample(Tape& tape, const ParamStore& store, std::size_t boundary, const NodeSet& patches) const;
  NodeSet project_labels(Tape& tape, const ParamStore& store, std::size_t boundary, const NodeSet& labels) const;
  NodeSet label_nodes(Tape& tape, const ParamStore& store) const;
  // Returns {Y_xp, Y_xl}.
  std::pair<Var, Var> heads(Tape& tape, const ParamStore& store, const NodeSet& patches,
                            const NodeSet& labels) const;

  const std::vector<GroupKgcnParams>& patch_modules(std::size_t stage) const { return patch_params_.at(stage); }
  const std::vector<GroupKgcnParams>& cross_modules(std::size_t stage) const { return cross_params_.at(stage); }

  struct HeadIds {
    ParamId patch_w, patch_b, label_w, label_b;
  };
  const HeadIds& head_ids() const { return heads_; }
  ParamId patch_embed_w() const { return embed_w_; }
  ParamId patch_embed_b() const { return embed_b_; }
  ParamId positional() const { return positional_; }
  ParamId label_embed() const { return label_embed_; }

 private:
  ModelConfig config_;
  ParamStore params_;
  ParamId embed_w_, embed_b_, positional_, label_embed_;
  std::vector<std::vector<GroupKgcnParams>> patch_params_;
  std::vector<std::vector<GroupKgcnParams>> cross_params_;
  std::vector<DownsampleParams> downsamplers_;
  std::vector<DownsampleParams> label_projectors_;
  HeadIds heads_;
};

// Runs a forward pass without recording gradients.
ForwardTrace evaluate_forward(const GkgModel& model, const Tensor& image, const ForwardOptions& options = {});

// [H x W x ch] image -> [(H/P)(W/P) x P*P*ch] rows, patches in row-major
// grid order, each flattened as (dy, dx, channel).
Tensor extract_patches(const Tensor& image, std::size_t patch_size);

// 2x2 non-overlapping mean over a row-major grid of node features.
Var window_mean_pool(Tape& tape, Var x, Grid grid);

// Single affine map from flattened pixels to L logits; the reference point
// for what the graph network adds.
class LinearBaseline {
 public:
  LinearBaseline(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  Var logits(Tape& tape, const ParamStore& store, const Tensor& image) const;

 private:
  ModelConfig config_;
  ParamStore params_;
  ParamId w_, b_;
};

}  // namespace gkg
