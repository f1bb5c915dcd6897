#include "gkg/config.hpp"

#include <fstream>
#include <set>

#include "gkg/errors.hpp"

namespace gkg {
namespace {

using nlohmann::json;

// Reads the keys of one JSON object, rejecting any key not consumed.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(label() + ": expected an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(field(key) + ": " + e.what());
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.contains(it.key())) throw ConfigError(field(it.key()) + ": unknown key");
    }
  }

 private:
  std::string label() const { return path_.empty() ? "config" : path_; }
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void parse_model(const json& j, ModelConfig& m) {
  Section s(j, "model");
  s.read("dims", m.dims);
  s.read("patch_modules", m.patch_modules);
  s.read("cross_modules", m.cross_modules);
  s.read("image_size", m.image_size);
  s.read("channels", m.channels);
  s.read("patch_size", m.patch_size);
  s.read("num_labels", m.num_labels);
  s.read("k", m.k);
  s.read("groups", m.groups);
  s.read("ffn_expansion", m.ffn_expansion);
  s.finish();
}

}  // namespace

ShapesConfig RunConfig::train_set() const {
  return ShapesConfig{data.seed, data.train_samples, model.num_labels, model.image_size, data.max_objects, data.noise};
}

ShapesConfig RunConfig::val_set() const {
  ShapesConfig c = train_set();
  c.seed = data.seed + 1000003;
  c.num_samples = data.val_samples;
  return c;
}

void RunConfig::validate() const {
  model.validate();
  loss.validate();
  if (model.channels != 3) throw ConfigError("model.channels: the shapes dataset renders 3 channels");
  train_set().validate();
  val_set().validate();
  const auto& o = optimizer;
  if (!(o.lr >= 0.0)) throw ConfigError("optimizer.lr: must be >= 0");
  if (!(o.weight_decay >= 0.0)) throw ConfigError("optimizer.weight_decay: must be >= 0");
  if (!(o.beta1 >= 0.0 && o.beta1 < 1.0)) throw ConfigError("optimizer.beta1: must lie in [0, 1)");
  if (!(o.beta2 >= 0.0 && o.beta2 < 1.0)) throw ConfigError("optimizer.beta2: must lie in [0, 1)");
  if (!(o.eps > 0.0)) throw ConfigError("optimizer.eps: must be positive");
  if (o.warmup_steps < 0) throw ConfigError("optimizer.warmup_steps: must be >= 0");
  if (o.epochs < 0) throw ConfigError("optimizer.epochs: must be >= 0");
  if (o.batch_size == 0) throw ConfigError("optimizer.batch_size: must be positive");
  for (int e : o.decay_epochs) {
    if (e < 0) throw ConfigError("optimizer.decay_epochs: entries must be >= 0");
  }
  const auto& g = gradcheck;
  if (!(g.step > 0.0)) throw ConfigError("gradcheck.step: must be positive");
  if (!(g.fraction > 0.0 && g.fraction <= 1.0)) throw ConfigError("gradcheck.fraction: must lie in (0, 1]");
  if (!(g.tolerance > 0.0)) throw ConfigError("gradcheck.tolerance: must be positive");
  if (g.batch == 0) throw ConfigError("gradcheck.batch: must be positive");
}

RunConfig parse_run_config(const json& j) {
  RunConfig c;
  Section root(j, "");
  if (const json* m = root.child("model")) parse_model(*m, c.model);
  if (const json* l = root.child("loss")) {
    Section s(*l, "loss");
    s.read("smooth_eps", c.loss.smooth_eps);
    s.read("gamma_pos", c.loss.gamma_pos);
    s.read("gamma_neg", c.loss.gamma_neg);
    s.read("margin", c.loss.margin);
    s.read("floor", c.loss.floor);
    s.finish();
  }
  if (const json* o = root.child("optimizer")) {
    Section s(*o, "optimizer");
    s.read("lr", c.optimizer.lr);
    s.read("weight_decay", c.optimizer.weight_decay);
    s.read("beta1", c.optimizer.beta1);
    s.read("beta2", c.optimizer.beta2);
    s.read("eps", c.optimizer.eps);
    s.read("warmup_steps", c.optimizer.warmup_steps);
    s.read("decay_epochs", c.optimizer.decay_epochs);
    s.read("epochs", c.optimizer.epochs);
    s.read("batch_size", c.optimizer.batch_size);
    s.finish();
  }
  if (const json* d = root.child("data")) {
    Section s(*d, "data");
    s.read("seed", c.data.seed);
    s.read("train_samples", c.data.train_samples);
    s.read("val_samples", c.data.val_samples);
    s.read("max_objects", c.data.max_objects);
    s.read("noise", c.data.noise);
    s.finish();
  }
  if (const json* g = root.child("gradcheck")) {
    Section s(*g, "gradcheck");
    s.read("step", c.gradcheck.step);
    s.read("fraction", c.gradcheck.fraction);
    s.read("tolerance", c.gradcheck.tolerance);
    s.read("batch", c.gradcheck.batch);
    s.finish();
  }
  root.read("seed", c.seed);
  root.read("capture_graphs", c.capture_graphs);
  std::string precision = "f32";
  root.read("precision", precision);
  if (precision == "f32") c.precision = Precision::f32;
  else if (precision == "f64") c.precision = Precision::f64;
  else throw ConfigError("precision: expected \"f32\" or \"f64\", got \"" + precision + "\"");
  root.finish();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open config file " + file.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(file.string() + ": " + e.what());
  }
  return parse_run_config(j);
}

json to_json(const ModelConfig& m) {
  return json{{"dims", m.dims},
              {"patch_modules", m.patch_modules},
              {"cross_modules", m.cross_modules},
              {"image_size", m.image_size},
              {"channels", m.channels},
              {"patch_size", m.patch_size},
              {"num_labels", m.num_labels},
              {"k", m.k},
              {"groups", m.groups},
              {"ffn_expansion", m.ffn_expansion}};
}

json to_json(const RunConfig& c) {
  const auto& o = c.optimizer;
  return json{
      {"model", to_json(c.model)},
      {"loss",
       {{"smooth_eps", c.loss.smooth_eps},
        {"gamma_pos", c.loss.gamma_pos},
        {"gamma_neg", c.loss.gamma_neg},
        {"margin", c.loss.margin},
        {"floor", c.loss.floor}}},
      {"optimizer",
       {{"lr", o.lr},
        {"weight_decay", o.weight_decay},
        {"beta1", o.beta1},
        {"beta2", o.beta2},
        {"eps", o.eps},
        {"warmup_steps", o.warmup_steps},
        {"decay_epochs", o.decay_epochs},
        {"epochs", o.epochs},
        {"batch_size", o.batch_size}}},
      {"data",
       {{"seed", c.data.seed},
        {"train_samples", c.data.train_samples},
        {"val_samples", c.data.val_samples},
        {"max_objects", c.data.max_objects},
        {"noise", c.data.noise}}},
      {"gradcheck",
       {{"step", c.gradcheck.step},
        {"fraction", c.gradcheck.fraction},
        {"tolerance", c.gradcheck.tolerance},
        {"batch", c.gradcheck.batch}}},
      {"seed", c.seed},
      {"capture_graphs", c.capture_graphs},
      {"precision", c.precision == Precision::f32 ? "f32" : "f64"}};
}

}  // namespace gkg
