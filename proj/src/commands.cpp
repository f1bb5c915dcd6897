#include "gkg/commands.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <ostream>

#include "gkg/checkpoint.hpp"
#include "gkg/errors.hpp"
#include "gkg/losses.hpp"

namespace gkg {
namespace {

using nlohmann::json;

json grid_json(const Grid& g) { return json{{"height", g.height}, {"width", g.width}}; }

json ap_json(double v) { return std::isnan(v) ? json(nullptr) : json(v); }

std::vector<std::string> category_names(std::size_t num_labels) {
  if (num_labels <= shape_prototypes().size()) return label_names(num_labels);
  std::vector<std::string> names;
  for (std::size_t i = 0; i < num_labels; ++i) names.push_back("class_" + std::to_string(i));
  return names;
}

}  // namespace

TrainResult run_train(const RunConfig& config, const std::filesystem::path& out_dir) {
  config.validate();
  std::filesystem::create_directories(out_dir);
  GkgModel model(config.model, config.seed);
  const auto train_set = generate_shapes_dataset(config.train_set());
  const auto val_set = generate_shapes_dataset(config.val_set());

  std::ofstream log(out_dir / "metrics.jsonl");
  if (!log) throw std::runtime_error("cannot write " + (out_dir / "metrics.jsonl").string());
  double best_map = -1;
  TrainOptions options;
  options.log = &log;
  options.on_epoch = [&](const EpochRecord& record, const ParamStore& params) {
    if (record.epoch > 0 && record.val.map > best_map) {
      best_map = record.val.map;
      save_checkpoint(out_dir / "best.ckpt.json", config, params, record.step, "");
    }
  };
  TrainResult result = train(config, as_classifier(model), train_set, val_set, options);
  save_checkpoint(out_dir / "final.ckpt.json", config, model.params(), result.steps, result.rng_state);
  if (config.optimizer.epochs == 0) save_checkpoint(out_dir / "best.ckpt.json", config, model.params(), 0, "");
  return result;
}

GkgModel load_model(const std::filesystem::path& checkpoint, RunConfig* config_out) {
  Checkpoint ck = load_checkpoint(checkpoint);
  GkgModel model(ck.config.model, ck.config.seed);
  restore_params(ck.params, model.params());
  if (config_out) *config_out = ck.config;
  return model;
}

json metrics_to_json(const MetricsReport& r) {
  json per_class = json::array();
  for (double ap : r.per_class_ap) per_class.push_back(ap_json(ap));
  return json{{"mAP", r.map},
              {"CP", r.cp},
              {"CR", r.cr},
              {"CF1", r.cf1},
              {"OP", r.op},
              {"OR", r.or_},
              {"OF1", r.of1},
              {"top3_CP", r.top3_cp},
              {"top3_CR", r.top3_cr},
              {"top3_CF1", r.top3_cf1},
              {"top3_OP", r.top3_op},
              {"top3_OR", r.top3_or},
              {"top3_OF1", r.top3_of1},
              {"per_class_AP", per_class},
              {"excluded_classes", r.excluded_classes}};
}

MetricsReport run_eval(const RunConfig& config, const std::optional<std::filesystem::path>& checkpoint,
                       const std::optional<std::filesystem::path>& dataset_dir) {
  RunConfig effective = config;
  std::optional<GkgModel> model;
  if (checkpoint) {
    model.emplace(load_model(*checkpoint, &effective));
  } else {
    config.validate();
    model.emplace(config.model, config.seed);
  }
  const auto samples = dataset_dir ? read_dataset(*dataset_dir) : generate_shapes_dataset(effective.val_set());
  if (samples.empty()) throw ConfigError("dataset: no samples");
  const auto& mc = model->config();
  if (samples.front().labels.size() != mc.num_labels) {
    throw ConfigError("dataset: " + std::to_string(samples.front().labels.size()) + " labels, model expects " +
                      std::to_string(mc.num_labels));
  }
  if (samples.front().image.shape() != Shape{mc.image_size, mc.image_size, mc.channels}) {
    throw ConfigError("dataset: image shape " + shape_string(samples.front().image.shape()) +
                      " does not match model input");
  }
  return evaluate(predict_scores(as_classifier(*model), samples), flat_targets(samples));
}

GradcheckRun run_gradcheck(const RunConfig& base, std::optional<double> fraction,
                           const std::function<void(ParamStore&)>& tamper) {
  RunConfig config = base;
  config.precision = Precision::f64;
  config.validate();
  GkgModel model(config.model, config.seed);
  ShapesConfig data = config.train_set();
  data.num_samples = config.gradcheck.batch;
  const auto samples = generate_shapes_dataset(data);
  const double inv = 1.0 / static_cast<double>(samples.size());

  std::vector<std::vector<GroupedKnnGraph>> frozen(samples.size());
  ParamStore& store = model.params();
  store.zero_grad();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    Tape tape;
    ForwardOptions capture;
    capture.capture_graphs = true;
    ForwardVars vars = model.forward(tape, store, samples[i].image, capture);
    for (auto& m : vars.modules) frozen[i].push_back(std::move(m.graph));
    Var loss = total_loss(tape, vars.logits, samples[i].labels, config.loss);
    tape.backward(loss);
    GradBuffer g(store);
    tape.accumulate_into(g);
    g.add_into(store, inv);
  }
  if (tamper) tamper(store);

  auto loss_fn = [&](const ParamStore& params) {
    double total = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      Tape tape(false);
      ForwardOptions replay;
      replay.frozen_graphs = &frozen[i];
      Var z = model.forward(tape, params, samples[i].image, replay).logits;
      total += total_loss(tape.value(z).data(), samples[i].labels, config.loss);
    }
    return total * inv;
  };
  GradcheckOptions options;
  options.step = config.gradcheck.step;
  options.fraction = fraction.value_or(config.gradcheck.fraction);
  options.seed = config.seed;
  GradcheckRun run;
  run.result = finite_difference_gradcheck(loss_fn, store, options);
  run.passed = run.result.max_rel_error <= config.gradcheck.tolerance;
  return run;
}

std::optional<SweepAxis> parse_sweep_axis(const std::string& text) {
  if (text == "G" || text == "g" || text == "groups") return SweepAxis::groups;
  if (text == "K" || text == "k") return SweepAxis::k;
  return std::nullopt;
}

std::vector<RunConfig> sweep_configs(const RunConfig& base, SweepAxis axis, const std::vector<std::size_t>& values) {
  if (values.empty()) throw ConfigError("sweep: no values given");
  std::vector<RunConfig> configs;
  for (std::size_t v : values) {
    RunConfig c = base;
    (axis == SweepAxis::groups ? c.model.groups : c.model.k) = v;
    try {
      c.validate();
    } catch (const ConfigError& e) {
      throw ConfigError("sweep value " + std::to_string(v) + ": " + e.what());
    }
    configs.push_back(std::move(c));
  }
  return configs;
}

void run_sweep(const RunConfig& base, SweepAxis axis, const std::vector<std::size_t>& values,
               const std::filesystem::path& out_dir, std::ostream& csv) {
  const auto configs = sweep_configs(base, axis, values);
  const char* axis_name = axis == SweepAxis::groups ? "G" : "K";
  std::vector<std::string> notes;
  csv << "value,map,cf1,of1,wall_s\n";
  for (std::size_t i = 0; i < configs.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    TrainResult result = run_train(configs[i], out_dir / (std::string(axis_name) + "_" + std::to_string(values[i])));
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const auto& last = result.epochs.back().val;
    char line[160];
    std::snprintf(line, sizeof(line), "%zu,%.6f,%.6f,%.6f,%.3f\n", values[i], last.map, last.cf1, last.of1, wall);
    csv << line;
    const auto grids = configs[i].model.stage_grids();
    for (std::size_t s = 0; s < grids.size(); ++s) {
      if (configs[i].model.k > grids[s].size()) {
        notes.push_back("# " + std::string(axis_name) + "=" + std::to_string(values[i]) + ": K=" +
                        std::to_string(configs[i].model.k) + " exceeds N_S=" + std::to_string(grids[s].size()) +
                        " at stage " + std::to_string(s + 1) + "; k clamped to " + std::to_string(grids[s].size()));
      }
    }
  }
  for (const auto& n : notes) csv << n << "\n";
}

json connection_record(const GkgModel& model, const Tensor& image) {
  ForwardOptions options;
  options.capture_graphs = true;
  const ForwardTrace trace = evaluate_forward(model, image, options);
  const auto& mc = model.config();
  const auto plans = model.stage_plans();
  json stages = json::array();
  for (std::size_t s = 0; s < plans.size(); ++s) {
    stages.push_back({{"stage", s + 1},
                      {"dim", plans[s].dim},
                      {"grid", grid_json(plans[s].grid)},
                      {"modules", json::array()}});
  }
  for (const auto& m : trace.modules) {
    const auto& g = m.graph;
    json edges = json::array();
    for (std::size_t i = 0; i < g.num_dest; ++i) {
      for (std::size_t grp = 0; grp < g.groups; ++grp) {
        auto nbrs = g.neighbors(grp, i);
        edges.push_back({{"dest", i}, {"group", grp}, {"sources", std::vector<std::int32_t>(nbrs.begin(), nbrs.end())}});
      }
    }
    stages[m.stage]["modules"].push_back({{"kind", to_string(m.kind)},
                                          {"index", m.index},
                                          {"G", g.groups},
                                          {"k", g.k},
                                          {"num_dest", g.num_dest},
                                          {"num_src", g.num_src},
                                          {"grid", grid_json(m.source_grid)},
                                          {"edges", std::move(edges)}});
  }
  return json{{"format_version", 1},
              {"image_shape", image.shape()},
              {"patch_size", mc.patch_size},
              {"labels", category_names(mc.num_labels)},
              {"stages", std::move(stages)}};
}

Tensor load_image(const std::filesystem::path& file, const ModelConfig& config) {
  const Shape expected{config.image_size, config.image_size, config.channels};
  Tensor image = file.extension() == ".ppm" ? read_ppm(file) : read_image_f32(file, expected);
  if (image.shape() != expected) {
    throw ConfigError("image " + file.string() + " has shape " + shape_string(image.shape()) + ", model expects " +
                      shape_string(expected));
  }
  return image;
}

}  // namespace gkg
