#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "gkg/checkpoint.hpp"
#include "gkg/commands.hpp"
#include "gkg/errors.hpp"

using namespace gkg;
namespace fs = std::filesystem;

namespace {

// Three-stage network on 16x16 images: grids 4x4 -> 2x2 -> 1x1.
RunConfig nano_config() {
  RunConfig c;
  c.model.dims = {4, 8, 8};
  c.model.patch_modules = {1, 1, 1};
  c.model.cross_modules = {1, 1, 1};
  c.model.image_size = 16;
  c.model.patch_size = 4;
  c.model.num_labels = 4;
  c.model.k = 3;
  c.model.groups = 2;
  c.data.train_samples = 24;
  c.data.val_samples = 16;
  c.optimizer.epochs = 2;
  c.optimizer.batch_size = 8;
  c.optimizer.warmup_steps = 2;
  c.optimizer.decay_epochs = {1};
  return c;
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("gkg_cli_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& file, const std::string& text) { std::ofstream(file) << text; }

int run_cli(const std::string& args) {
  const std::string cmd = std::string(GKG_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Tensor random_image(std::mt19937_64& rng, std::size_t side) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor t({side, side, 3});
  for (double& v : t.data()) v = u(rng);
  return t;
}

std::string config_error(const nlohmann::json& j) {
  try {
    parse_run_config(j).validate();
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Config, UnknownKeysAreRejectedWithPath) {
  EXPECT_NE(config_error({{"model", {{"dimz", {8}}}}}).find("model.dimz"), std::string::npos);
  EXPECT_NE(config_error({{"bogus", 1}}).find("bogus"), std::string::npos);
}

TEST(Config, PreconditionViolationsSurfaceBeforeWork) {
  EXPECT_NE(config_error({{"model", {{"groups", 3}}}}).find("model.dims[0]"), std::string::npos);
  EXPECT_NE(config_error({{"model", {{"patch_size", 5}}}}).find("model.image_size"), std::string::npos);
  EXPECT_NE(config_error({{"model", {{"num_labels", 99}}}}).find("num_labels"), std::string::npos);
  EXPECT_NE(config_error({{"loss", {{"smooth_eps", 1.5}}}}).find("loss.smooth_eps"), std::string::npos);
  EXPECT_NE(config_error({{"optimizer", {{"lr", -1}}}}).find("optimizer.lr"), std::string::npos);
  EXPECT_NE(config_error({{"optimizer", {{"batch_size", 0}}}}).find("optimizer.batch_size"), std::string::npos);
  EXPECT_NE(config_error({{"precision", "f16"}}).find("precision"), std::string::npos);
  EXPECT_NE(config_error({{"model", {{"k", "nine"}}}}).find("model.k"), std::string::npos);
}

TEST(Config, JsonRoundTrip) {
  RunConfig c = nano_config();
  c.loss.smooth_eps = 0.03;
  RunConfig back = parse_run_config(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
}

TEST(Checkpoint, Base64RoundTrip) {
  for (std::size_t n = 0; n < 10; ++n) {
    std::vector<std::uint8_t> bytes(n);
    for (std::size_t i = 0; i < n; ++i) bytes[i] = static_cast<std::uint8_t>(i * 37 + 11);
    EXPECT_EQ(base64_decode(base64_encode(bytes)), bytes);
  }
  EXPECT_EQ(base64_encode(std::vector<std::uint8_t>{'M', 'a', 'n'}), "TWFu");
}

TEST(Checkpoint, RoundTripPreservesForwardBitExactly) {
  const auto dir = scratch("ckpt");
  RunConfig config;
  GkgModel model(config.model, 21);
  model.params().round_values_to_f32();
  save_checkpoint(dir / "m.ckpt.json", config, model.params(), 7, "state");
  RunConfig loaded_config;
  GkgModel loaded = load_model(dir / "m.ckpt.json", &loaded_config);
  EXPECT_EQ(to_json(loaded_config), to_json(config));
  std::mt19937_64 rng(21);
  for (int i = 0; i < 10; ++i) {
    Tensor img = random_image(rng, 32);
    EXPECT_EQ(evaluate_forward(model, img).scores, evaluate_forward(loaded, img).scores) << "input " << i;
  }
  const Checkpoint ck = load_checkpoint(dir / "m.ckpt.json");
  EXPECT_EQ(ck.step, 7);
  EXPECT_EQ(ck.rng_state, "state");
  fs::remove_all(dir);
}

TEST(Checkpoint, MismatchedLayoutIsRejected) {
  GkgModel a(ModelConfig::tiny(), 1), b(ModelConfig::micro(), 1);
  EXPECT_ANY_THROW(restore_params(a.params(), b.params()));
}

TEST(Train, ZeroLearningRateLeavesParametersUnchanged) {
  RunConfig c = nano_config();
  c.optimizer.lr = 0;
  GkgModel model(c.model, c.seed);
  model.params().round_values_to_f32();
  std::vector<Tensor> before;
  for (const auto& p : model.params()) before.push_back(p.value);
  const auto result = train(c, as_classifier(model), generate_shapes_dataset(c.train_set()),
                            generate_shapes_dataset(c.val_set()));
  std::size_t i = 0;
  for (const auto& p : model.params()) EXPECT_EQ(p.value, before[i++]) << p.name;
  for (const auto& e : result.epochs) EXPECT_EQ(e.train_loss, result.epochs.front().train_loss);
}

TEST(Train, IdenticalSeedsGiveByteIdenticalLogs) {
  const auto dir = scratch("det");
  RunConfig c = nano_config();
  run_train(c, dir / "a");
  ::setenv("GKG_THREADS", "3", 1);
  run_train(c, dir / "b");
  ::unsetenv("GKG_THREADS");
  const std::string a = slurp(dir / "a" / "metrics.jsonl");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, slurp(dir / "b" / "metrics.jsonl"));
  EXPECT_EQ(slurp(dir / "a" / "final.ckpt.json"), slurp(dir / "b" / "final.ckpt.json"));
  c.seed = 1;
  run_train(c, dir / "c");
  EXPECT_NE(a, slurp(dir / "c" / "metrics.jsonl"));
  fs::remove_all(dir);
}

TEST(Train, LogHasOneLinePerEpochWithRequiredKeys) {
  const auto dir = scratch("log");
  RunConfig c = nano_config();
  run_train(c, dir);
  std::ifstream in(dir / "metrics.jsonl");
  std::string line;
  int epoch = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j["epoch"], epoch++);
    for (const char* key : {"lr", "train_loss", "val_map", "val_cf1", "val_of1"}) EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_EQ(epoch, c.optimizer.epochs + 1);
  EXPECT_TRUE(fs::exists(dir / "best.ckpt.json"));
  EXPECT_TRUE(fs::exists(dir / "final.ckpt.json"));
  fs::remove_all(dir);
}

TEST(Train, DivergenceIsNumericError) {
  RunConfig c = nano_config();
  c.optimizer.lr = 1e30;
  c.optimizer.weight_decay = 0;
  c.optimizer.epochs = 4;
  GkgModel model(c.model, c.seed);
  EXPECT_THROW(train(c, as_classifier(model), generate_shapes_dataset(c.train_set()),
                     generate_shapes_dataset(c.val_set())),
               NumericError);
}

TEST(Eval, RepeatedEvaluationIsIdentical) {
  const auto dir = scratch("eval");
  RunConfig c = nano_config();
  run_train(c, dir);
  const auto a = metrics_to_json(run_eval(c, dir / "final.ckpt.json", std::nullopt)).dump();
  const auto b = metrics_to_json(run_eval(c, dir / "final.ckpt.json", std::nullopt)).dump();
  EXPECT_EQ(a, b);
  fs::remove_all(dir);
}

TEST(Eval, DatasetDirectoryMatchesGeneratedSet) {
  const auto dir = scratch("evalds");
  RunConfig c = nano_config();
  write_dataset(dir, generate_shapes_dataset(c.val_set()), label_names(4));
  const auto from_dir = run_eval(c, std::nullopt, dir);
  EXPECT_GE(from_dir.map, 0.0);
  RunConfig wrong = c;
  wrong.model.num_labels = 3;
  EXPECT_THROW(run_eval(wrong, std::nullopt, dir), ConfigError);
  fs::remove_all(dir);
}

TEST(Eval, RandomInitMapIsNearClassPrior) {
  RunConfig c;
  c.data.val_samples = 500;
  const auto samples = generate_shapes_dataset(c.val_set());
  double positives = 0;
  for (const auto& s : samples)
    for (auto v : s.labels) positives += v;
  const double prior = positives / static_cast<double>(samples.size() * c.model.num_labels);
  const double map = run_eval(c, std::nullopt, std::nullopt).map;
  EXPECT_NEAR(map, prior, 0.1) << "prior " << prior;
}

TEST(Gradcheck, TamperedGradientFailsAndNamesParameter) {
  RunConfig c = nano_config();
  auto tamper = [](ParamStore& store) { store[store.id("stage2.patch.0.ffn.w1")].grad[3] += 0.05; };
  const auto bad = run_gradcheck(c, std::nullopt, tamper);
  EXPECT_FALSE(bad.passed);
  EXPECT_EQ(bad.result.worst_param, "stage2.patch.0.ffn.w1");
  EXPECT_EQ(bad.result.worst_index, 3u);
}

TEST(Gradcheck, SubsetAgreesWithFullRun) {
  RunConfig c = nano_config();
  const auto full = run_gradcheck(c);
  const auto subset = run_gradcheck(c, 0.1);
  EXPECT_TRUE(full.passed) << full.result.max_rel_error << " at " << full.result.worst_param;
  EXPECT_EQ(subset.passed, full.passed);
  EXPECT_LT(subset.result.checked, full.result.checked / 5);
}

TEST(Sweep, SingleValueDuplicatesTrain) {
  const auto dir = scratch("sweep1");
  RunConfig c = nano_config();
  c.model.groups = 1;
  run_train(c, dir / "train");
  std::ostringstream csv;
  run_sweep(c, SweepAxis::groups, {1}, dir / "sweep", csv);
  EXPECT_EQ(slurp(dir / "train" / "metrics.jsonl"), slurp(dir / "sweep" / "G_1" / "metrics.jsonl"));
  EXPECT_EQ(slurp(dir / "train" / "final.ckpt.json"), slurp(dir / "sweep" / "G_1" / "final.ckpt.json"));
  std::istringstream lines(csv.str());
  std::string header, row;
  std::getline(lines, header);
  std::getline(lines, row);
  EXPECT_EQ(header, "value,map,cf1,of1,wall_s");
  EXPECT_EQ(row.substr(0, 2), "1,");
  fs::remove_all(dir);
}

TEST(Sweep, ClampedKIsFootnoted) {
  const auto dir = scratch("sweepk");
  RunConfig c = nano_config();
  c.optimizer.epochs = 1;
  std::ostringstream csv;
  run_sweep(c, SweepAxis::k, {2, 5}, dir, csv);
  const std::string out = csv.str();
  EXPECT_NE(out.find("\n2,"), std::string::npos);
  EXPECT_NE(out.find("\n5,"), std::string::npos);
  EXPECT_NE(out.find("# K=5: K=5 exceeds N_S=4 at stage 2; k clamped to 4"), std::string::npos) << out;
  fs::remove_all(dir);
}

TEST(Sweep, InvalidValueIsConfigError) {
  RunConfig c = nano_config();
  EXPECT_THROW(sweep_configs(c, SweepAxis::groups, {1, 3}), ConfigError);
  EXPECT_FALSE(parse_sweep_axis("X").has_value());
}

TEST(ExportGraph, RecordCountsMatchModel) {
  RunConfig c = nano_config();
  GkgModel model(c.model, 3);
  std::mt19937_64 rng(3);
  const auto rec = connection_record(model, random_image(rng, 16));
  ASSERT_EQ(rec["stages"].size(), 3u);
  for (const auto& stage : rec["stages"]) EXPECT_EQ(stage["modules"].size(), 2u);
  EXPECT_EQ(rec["labels"].size(), 4u);
}

TEST(Binary, ExitCodes) {
  const auto dir = scratch("bin");
  write_text(dir / "bad.json", R"({"model": {"groups": 3}})");
  write_text(dir / "unknown.json", R"({"modle": {}})");
  write_text(dir / "nano.json", to_json(nano_config()).dump());
  const std::string out = " --out " + (dir / "o").string();
  EXPECT_EQ(run_cli("train --config " + (dir / "bad.json").string() + out), 2);
  EXPECT_EQ(run_cli("train --config " + (dir / "unknown.json").string() + out), 2);
  EXPECT_EQ(run_cli("train --config " + (dir / "missing.json").string() + out), 2);
  EXPECT_EQ(run_cli("gradcheck --fraction 0.2 --config " + (dir / "nano.json").string() + out), 0);
  EXPECT_EQ(run_cli("sweep --axis G --values 1,3 --config " + (dir / "nano.json").string() + out), 2);
  EXPECT_EQ(run_cli("export-graph --image " + (dir / "nope.f32").string() + " --config " +
                    (dir / "nano.json").string()),
            2);
  write_text(dir / "diverge.json",
             R"({"model": {"dims": [4, 8, 8], "patch_modules": [1, 1, 1], "cross_modules": [1, 1, 1],
                 "image_size": 16, "patch_size": 4, "num_labels": 4, "k": 3},
                 "data": {"train_samples": 24, "val_samples": 8},
                 "optimizer": {"lr": 1e30, "weight_decay": 0, "epochs": 4, "batch_size": 8, "warmup_steps": 1}})");
  EXPECT_EQ(run_cli("train --config " + (dir / "diverge.json").string() + out), 3);
  fs::remove_all(dir);
}
