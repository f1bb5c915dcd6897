// gkg: train, evaluate, gradient-check, sweep and export connection records
// for the Group KNN graph network.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "gkg/commands.hpp"
#include "gkg/errors.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonArgs {
  std::string config;
  std::string out = "gkg_out";
  std::optional<std::uint64_t> seed;
  std::optional<std::string> precision;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required) {
  auto* opt = cmd->add_option("--config", args.config, "run configuration (JSON)");
  if (config_required) opt->required();
  cmd->add_option("--out", args.out, "output directory");
  cmd->add_option("--seed", args.seed, "override the model/shuffle seed");
  cmd->add_option("--precision", args.precision, "f32 or f64")->check(CLI::IsMember({"f32", "f64"}));
}

gkg::RunConfig resolve_config(const CommonArgs& args) {
  gkg::RunConfig config = args.config.empty() ? gkg::RunConfig{} : gkg::load_run_config(args.config);
  if (args.seed) config.seed = *args.seed;
  if (args.precision) config.precision = *args.precision == "f64" ? gkg::Precision::f64 : gkg::Precision::f32;
  config.validate();
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Group KNN graph convolutional network for multi-label recognition"};
  app.require_subcommand(1);

  CommonArgs train_args, eval_args, grad_args, sweep_args, export_args;

  auto* train = app.add_subcommand("train", "train a model and write checkpoints + metrics log");
  add_common(train, train_args, true);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint; prints metrics JSON");
  add_common(eval, eval_args, false);
  std::string eval_checkpoint, eval_dataset;
  eval->add_option("--checkpoint", eval_checkpoint, "checkpoint file (fresh model from config if omitted)");
  eval->add_option("--dataset", eval_dataset, "dataset directory (index.json + raw images)");

  auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient check on one batch");
  add_common(grad, grad_args, true);
  std::optional<double> grad_fraction;
  grad->add_option("--fraction", grad_fraction, "probe this fraction of parameter entries")
      ->check(CLI::Range(0.0, 1.0));

  auto* sweep = app.add_subcommand("sweep", "train once per G or K value; CSV to stdout");
  add_common(sweep, sweep_args, true);
  std::string axis_text;
  std::vector<std::size_t> values;
  sweep->add_option("--axis", axis_text, "G or K")->required();
  sweep->add_option("--values", values, "values to sweep")->required()->delimiter(',');

  auto* exporter = app.add_subcommand("export-graph", "write the connection record of one image as JSON");
  add_common(exporter, export_args, false);
  std::string export_checkpoint, export_image;
  exporter->add_option("--checkpoint", export_checkpoint, "checkpoint file (fresh model from config if omitted)");
  exporter->add_option("--image", export_image, "raw float32 [H][W][ch] file or binary PPM")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      const auto config = resolve_config(train_args);
      const auto result = gkg::run_train(config, train_args.out);
      const auto& last = result.epochs.back();
      std::cout << "trained " << last.epoch << " epochs; train_loss " << last.train_loss << ", val mAP "
                << last.val.map << "\n";
    } else if (*eval) {
      std::optional<fs::path> ck, ds;
      if (!eval_checkpoint.empty()) ck = eval_checkpoint;
      if (!eval_dataset.empty()) ds = eval_dataset;
      const auto config = resolve_config(eval_args);
      const auto report = gkg::run_eval(config, ck, ds);
      for (auto c : report.excluded_classes) {
        std::cerr << "warning: class " << c << " has no positive targets; excluded from mAP\n";
      }
      std::cout << gkg::metrics_to_json(report).dump(2) << "\n";
    } else if (*grad) {
      const auto config = resolve_config(grad_args);
      const auto run = gkg::run_gradcheck(config, grad_fraction);
      std::cout << "max_rel_error " << run.result.max_rel_error << " over " << run.result.checked << " entries\n";
      if (!run.passed) {
        std::cout << "FAILED at " << run.result.worst_param << "[" << run.result.worst_index << "]: analytic "
                  << run.result.worst_analytic << ", numeric " << run.result.worst_numeric << "\n";
        return gkg::kExitCheckFailed;
      }
    } else if (*sweep) {
      const auto axis = gkg::parse_sweep_axis(axis_text);
      if (!axis) throw gkg::ConfigError("--axis: expected G or K, got '" + axis_text + "'");
      const auto config = resolve_config(sweep_args);
      gkg::run_sweep(config, *axis, values, sweep_args.out, std::cout);
    } else if (*exporter) {
      gkg::RunConfig config;
      std::optional<gkg::GkgModel> model;
      if (!export_checkpoint.empty()) {
        model.emplace(gkg::load_model(export_checkpoint, &config));
      } else {
        config = resolve_config(export_args);
        model.emplace(config.model, config.seed);
      }
      gkg::Tensor image;
      try {
        image = gkg::load_image(export_image, config.model);
      } catch (const std::runtime_error& e) {
        throw gkg::ConfigError(e.what());
      }
      std::cout << gkg::connection_record(*model, image).dump() << "\n";
    }
  } catch (const gkg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return gkg::kExitConfig;
  } catch (const gkg::DimensionError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return gkg::kExitConfig;
  } catch (const gkg::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return gkg::kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return gkg::kExitConfig;
  }
  return gkg::kExitOk;
}
