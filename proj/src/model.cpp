#include "gkg/model.hpp"

#include <cmath>

#include "gkg/errors.hpp"
#include "gkg/ops.hpp"

namespace gkg {

ModelConfig ModelConfig::micro() { return ModelConfig{}; }

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.dims = {8, 16, 16, 16};
  c.patch_modules = {1, 1, 1, 1};
  c.cross_modules = {1, 1, 1, 1};
  c.image_size = 32;
  c.patch_size = 4;
  c.num_labels = 4;
  c.k = 3;
  c.groups = 2;
  return c;
}

std::vector<Grid> ModelConfig::stage_grids() const {
  std::vector<Grid> grids;
  std::size_t side = patch_size ? image_size / patch_size : 0;
  for (std::size_t s = 0; s < dims.size(); ++s) {
    grids.push_back(Grid{side, side});
    side /= 2;
  }
  return grids;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) { throw ConfigError(field + ": " + why); };
  if (dims.empty()) fail("model.dims", "at least one stage required");
  if (patch_modules.size() != dims.size()) fail("model.patch_modules", "needs one entry per stage");
  if (cross_modules.size() != dims.size()) fail("model.cross_modules", "needs one entry per stage");
  if (channels == 0) fail("model.channels", "must be positive");
  if (num_labels == 0) fail("model.num_labels", "must be positive");
  if (k == 0) fail("model.k", "must be positive");
  if (groups == 0) fail("model.groups", "must be positive");
  if (ffn_expansion == 0) fail("model.ffn_expansion", "must be positive");
  if (patch_size == 0) fail("model.patch_size", "must be positive");
  if (image_size == 0 || image_size % patch_size != 0) {
    fail("model.image_size", std::to_string(image_size) + " not divisible by patch size " + std::to_string(patch_size));
  }
  for (std::size_t s = 0; s < dims.size(); ++s) {
    const std::string field = "model.dims[" + std::to_string(s) + "]";
    if (dims[s] == 0) fail(field, "must be positive");
    if (dims[s] % groups != 0) {
      fail(field, std::to_string(dims[s]) + " not divisible by G=" + std::to_string(groups));
    }
    if (s > 0 && dims[s] < dims[s - 1]) fail(field, "stage widths must be nondecreasing");
  }
  std::size_t side = image_size / patch_size;
  for (std::size_t s = 0; s + 1 < dims.size(); ++s) {
    if (side % 2 != 0) {
      fail("model.image_size", "stage " + std::to_string(s + 1) + " grid " + std::to_string(side) +
                                   " is odd and cannot be downsampled");
    }
    side /= 2;
  }
}

const char* to_string(ModuleKind kind) { return kind == ModuleKind::patch_level ? "patch" : "cross"; }

Tensor extract_patches(const Tensor& image, std::size_t patch_size) {
  if (image.rank() != 3) throw DimensionError("image must be [H x W x ch], got " + shape_string(image.shape()));
  const std::size_t h = image.dim(0), w = image.dim(1), ch = image.dim(2), p = patch_size;
  if (p == 0 || h % p != 0 || w % p != 0) {
    throw ArgumentError("image " + shape_string(image.shape()) + " not divisible into " + std::to_string(p) + "x" +
                        std::to_string(p) + " patches");
  }
  const std::size_t gh = h / p, gw = w / p, width = p * p * ch;
  Tensor out({gh * gw, width});
  for (std::size_t py = 0; py < gh; ++py) {
    for (std::size_t px = 0; px < gw; ++px) {
      double* row = out.ptr() + (py * gw + px) * width;
      for (std::size_t dy = 0; dy < p; ++dy) {
        const double* src = image.ptr() + ((py * p + dy) * w + px * p) * ch;
        std::copy_n(src, p * ch, row + dy * p * ch);
      }
    }
  }
  return out;
}

Var window_mean_pool(Tape& tape, Var x, Grid grid) {
  const Tensor& xv = tape.value(x);
  if (xv.rank() != 2 || xv.dim(0) != grid.size()) {
    throw DimensionError("window_mean_pool: features " + shape_string(xv.shape()) + " do not match grid " +
                         std::to_string(grid.height) + "x" + std::to_string(grid.width));
  }
  if (grid.height % 2 != 0 || grid.width % 2 != 0) {
    throw ArgumentError("downsample: grid " + std::to_string(grid.height) + "x" + std::to_string(grid.width) +
                        " has an odd side");
  }
  const std::size_t c = xv.dim(1), oh = grid.height / 2, ow = grid.width / 2;
  Tensor out({oh * ow, c});
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t xw = 0; xw < ow; ++xw) {
      double* o = out.ptr() + (y * ow + xw) * c;
      for (std::size_t dy = 0; dy < 2; ++dy) {
        for (std::size_t dx = 0; dx < 2; ++dx) {
          const double* in = xv.ptr() + ((2 * y + dy) * grid.width + 2 * xw + dx) * c;
          for (std::size_t j = 0; j < c; ++j) o[j] += in[j];
        }
      }
      for (std::size_t j = 0; j < c; ++j) o[j] *= 0.25;
    }
  }
  return tape.push(std::move(out), {x}, [x, grid, c, oh, ow](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_slot(x);
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xw = 0; xw < ow; ++xw) {
        const double* go = g.ptr() + (y * ow + xw) * c;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            double* gi = gx.ptr() + ((2 * y + dy) * grid.width + 2 * xw + dx) * c;
            for (std::size_t j = 0; j < c; ++j) gi[j] += 0.25 * go[j];
          }
        }
      }
    }
  });
}

GkgModel::GkgModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)), params_(seed) {
  config_.validate();
  Rng rng(seed);
  const auto& c = config_;
  const auto grids = c.stage_grids();
  const std::size_t patch_width = c.patch_size * c.patch_size * c.channels;
  const std::size_t c1 = c.dims.front();

  embed_w_ = params_.add("embed.w", glorot_uniform(patch_width, c1, rng));
  embed_b_ = params_.add("embed.b", Tensor({c1}));
  positional_ = params_.add("embed.pos", glorot_uniform(grids.front().size(), c1, rng));
  label_embed_ = params_.add("labels.embed", glorot_uniform(c.num_labels, c1, rng));

  for (std::size_t s = 0; s < c.num_stages(); ++s) {
    const std::string stage = "stage" + std::to_string(s + 1);
    std::vector<GroupKgcnParams> patch, cross;
    for (std::size_t m = 0; m < c.patch_modules[s]; ++m) {
      patch.push_back(make_group_kgcn(params_, stage + ".patch." + std::to_string(m), c.dims[s], c.groups, c.k,
                                      c.ffn_expansion, rng));
    }
    for (std::size_t m = 0; m < c.cross_modules[s]; ++m) {
      cross.push_back(make_group_kgcn(params_, stage + ".cross." + std::to_string(m), c.dims[s], c.groups, c.k,
                                      c.ffn_expansion, rng));
    }
    patch_params_.push_back(std::move(patch));
    cross_params_.push_back(std::move(cross));
    if (s + 1 < c.num_stages()) {
      const std::string b = "down" + std::to_string(s + 1);
      downsamplers_.push_back({params_.add(b + ".patch.w", glorot_uniform(c.dims[s], c.dims[s + 1], rng)),
                               params_.add(b + ".patch.b", Tensor({c.dims[s + 1]}))});
      label_projectors_.push_back({params_.add(b + ".label.w", glorot_uniform(c.dims[s], c.dims[s + 1], rng)),
                                   params_.add(b + ".label.b", Tensor({c.dims[s + 1]}))});
    }
  }
  const std::size_t cl = c.dims.back();
  heads_.patch_w = params_.add("head.patch.w", glorot_uniform(cl, c.num_labels, rng));
  heads_.patch_b = params_.add("head.patch.b", Tensor({c.num_labels}));
  // Row c is the weight vector of class c's own C -> 1 map.
  Tensor label_rows({c.num_labels, cl});
  const double bound = std::sqrt(6.0 / static_cast<double>(cl + 1));
  for (double& v : label_rows.data()) v = uniform(rng, -bound, bound);
  heads_.label_w = params_.add("head.label.w", std::move(label_rows));
  heads_.label_b = params_.add("head.label.b", Tensor({c.num_labels}));
}

std::vector<StagePlan> GkgModel::stage_plans() const {
  std::vector<StagePlan> plans;
  const auto grids = config_.stage_grids();
  for (std::size_t s = 0; s < config_.num_stages(); ++s) {
    plans.push_back({config_.patch_modules[s], config_.cross_modules[s], config_.dims[s], grids[s]});
  }
  return plans;
}

NodeSet GkgModel::patchify_embed(Tape& tape, const ParamStore& store, const Tensor& image) const {
  const auto& c = config_;
  if (image.rank() != 3 || image.dim(0) != c.image_size || image.dim(1) != c.image_size ||
      image.dim(2) != c.channels) {
    throw DimensionError("image " + shape_string(image.shape()) + " does not match configured " +
                         std::to_string(c.image_size) + "x" + std::to_string(c.image_size) + "x" +
                         std::to_string(c.channels));
  }
  Var pixels = tape.constant(extract_patches(image, c.patch_size));
  Var embedded = ops::affine(tape, pixels, tape.param(store, embed_w_), tape.param(store, embed_b_));
  Var with_pos = ops::add(tape, embedded, tape.param(store, positional_));
  return NodeSet{with_pos, NodeKind::patch, c.stage_grids().front()};
}

NodeSet GkgModel::downsample(Tape& tape, const ParamStore& store, std::size_t boundary, const NodeSet& patches) const {
  if (!patches.grid) throw ArgumentError("downsample: patch nodes carry no grid");
  const auto& p = downsamplers_.at(boundary);
  Var pooled = window_mean_pool(tape, patches.features, *patches.grid);
  Var projected = ops::affine(tape, pooled, tape.param(store, p.w), tape.param(store, p.b));
  return NodeSet{projected, NodeKind::patch, Grid{patches.grid->height / 2, patches.grid->width / 2}};
}

NodeSet GkgModel::project_labels(Tape& tape, const ParamStore& store, std::size_t boundary,
                                 const NodeSet& labels) const {
  const auto& p = label_projectors_.at(boundary);
  return NodeSet{ops::affine(tape, labels.features, tape.param(store, p.w), tape.param(store, p.b)),
                 NodeKind::label, std::nullopt};
}

NodeSet GkgModel::label_nodes(Tape& tape, const ParamStore& store) const {
  return NodeSet{tape.param(store, label_embed_), NodeKind::label, std::nullopt};
}

std::pair<Var, Var> GkgModel::heads(Tape& tape, const ParamStore& store, const NodeSet& patches,
                                    const NodeSet& labels) const {
  const std::size_t cl = config_.dims.back();
  Var pooled = ops::reshape(tape, ops::mean_pool_rows(tape, patches.features), {1, cl});
  Var patch_logits = ops::reshape(
      tape, ops::affine(tape, pooled, tape.param(store, heads_.patch_w), tape.param(store, heads_.patch_b)),
      {config_.num_labels});
  Var label_logits = ops::rowwise_affine(tape, labels.features, tape.param(store, heads_.label_w),
                                         tape.param(store, heads_.label_b));
  return {patch_logits, label_logits};
}

ForwardVars GkgModel::forward(Tape& tape, const ParamStore& store, const Tensor& image,
                              const ForwardOptions& options) const {
  if (store.size() != params_.size()) throw ArgumentError("forward: parameter store does not match model layout");
  ForwardVars out;
  NodeSet patches = patchify_embed(tape, store, image);
  NodeSet labels = label_nodes(tape, store);
  std::size_t invocation = 0;

  auto run = [&](ModuleKind kind, std::size_t stage, std::size_t index, const GroupKgcnParams& p,
                 const NodeSet& dest, const NodeSet& src) {
    const GroupedKnnGraph* frozen = nullptr;
    if (options.frozen_graphs) {
      if (invocation >= options.frozen_graphs->size()) {
        throw ArgumentError("forward: frozen graph list shorter than module count");
      }
      frozen = &(*options.frozen_graphs)[invocation];
    }
    ++invocation;
    KgcnOutput result = group_kgcn_forward(tape, store, p, dest, src, frozen);
    if (options.capture_graphs || options.capture_features) {
      ModuleSnapshot snap;
      snap.kind = kind;
      snap.stage = stage;
      snap.index = index;
      snap.source_grid = src.grid.value_or(Grid{});
      if (options.capture_graphs) snap.graph = result.graph;
      if (options.capture_features) {
        snap.dest_in = tape.value(dest.features);
        snap.dest_out = tape.value(result.nodes.features);
      }
      out.modules.push_back(std::move(snap));
    }
    return result.nodes;
  };

  for (std::size_t s = 0; s < config_.num_stages(); ++s) {
    for (std::size_t m = 0; m < patch_params_[s].size(); ++m) {
      patches = run(ModuleKind::patch_level, s, m, patch_params_[s][m], patches, patches);
    }
    for (std::size_t m = 0; m < cross_params_[s].size(); ++m) {
      labels = run(ModuleKind::cross_level, s, m, cross_params_[s][m], labels, patches);
    }
    if (s + 1 < config_.num_stages()) {
      patches = downsample(tape, store, s, patches);
      labels = project_labels(tape, store, s, labels);
    }
  }
  auto [patch_logits, label_logits] = heads(tape, store, patches, labels);
  out.logits_patch = patch_logits;
  out.logits_label = label_logits;
  out.logits = ops::add(tape, patch_logits, label_logits);
  out.scores = ops::sigmoid(tape, out.logits);
  return out;
}

ForwardTrace evaluate_forward(const GkgModel& model, const Tensor& image, const ForwardOptions& options) {
  Tape tape(false);
  ForwardVars vars = model.forward(tape, image, options);
  return ForwardTrace{tape.value(vars.logits_patch), tape.value(vars.logits_label), tape.value(vars.scores),
                      std::move(vars.modules)};
}

LinearBaseline::LinearBaseline(const ModelConfig& config, std::uint64_t seed) : config_(config), params_(seed) {
  Rng rng(seed);
  const std::size_t in = config_.image_size * config_.image_size * config_.channels;
  w_ = params_.add("linear.w", glorot_uniform(in, config_.num_labels, rng));
  b_ = params_.add("linear.b", Tensor({config_.num_labels}));
}

Var LinearBaseline::logits(Tape& tape, const ParamStore& store, const Tensor& image) const {
  Var pixels = tape.constant(image.reshaped({1, image.size()}));
  Var out = ops::affine(tape, pixels, tape.param(store, w_), tape.param(store, b_));
  return ops::reshape(tape, out, {config_.num_labels});
}

}  // namespace gkg
