#include <random>

#include <gtest/gtest.h>

#include "gkg/commands.hpp"
#include "gkg/errors.hpp"
#include "gkg/gradcheck.hpp"
#include "gkg/losses.hpp"
#include "gkg/model.hpp"
#include "gkg/ops.hpp"
#include "oracles.hpp"

using namespace gkg;

namespace {

Tensor random_image(std::mt19937_64& rng, std::size_t side, std::size_t ch = 3) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor t({side, side, ch});
  for (double& v : t.data()) v = u(rng);
  return t;
}

}  // namespace

TEST(ExtractPatches, ShapeArithmetic) {
  Tensor img({8, 8, 3});
  Tensor p = extract_patches(img, 4);
  EXPECT_EQ(p.shape(), (Shape{4, 48}));
  EXPECT_THROW(extract_patches(Tensor({6, 8, 3}), 4), ArgumentError);
}

TEST(ExtractPatches, MatchesNaiveLoops) {
  std::mt19937_64 rng(1);
  Tensor img = random_image(rng, 32);
  Tensor p = extract_patches(img, 4);
  for (std::size_t py = 0; py < 8; ++py)
    for (std::size_t px = 0; px < 8; ++px) {
      std::size_t col = 0;
      for (std::size_t dy = 0; dy < 4; ++dy)
        for (std::size_t dx = 0; dx < 4; ++dx)
          for (std::size_t ch = 0; ch < 3; ++ch) {
            const double expected = img[((py * 4 + dy) * 32 + px * 4 + dx) * 3 + ch];
            ASSERT_EQ(p(py * 8 + px, col++), expected);
          }
    }
}

TEST(PatchifyEmbed, ZeroImageAndPositionalGiveBias) {
  GkgModel model(ModelConfig::tiny(), 3);
  ParamStore& store = model.params();
  store[model.positional()].value.fill(0);
  store[model.patch_embed_b()].value = Tensor::vector({1, 2, 3, 4, 5, 6, 7, 8});
  Tape tape(false);
  NodeSet nodes = model.patchify_embed(tape, store, Tensor({32, 32, 3}));
  ASSERT_EQ(tape.shape(nodes.features), (Shape{64, 8}));
  ASSERT_TRUE(nodes.grid.has_value());
  EXPECT_EQ(*nodes.grid, (Grid{8, 8}));
  for (std::size_t r = 0; r < 64; ++r)
    for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(tape.value(nodes.features)(r, c), static_cast<double>(c + 1));
}

TEST(PatchifyEmbed, MatchesStraightLineReference) {
  std::mt19937_64 rng(2);
  GkgModel model(ModelConfig::tiny(), 4);
  const ParamStore& store = model.params();
  Tensor img = random_image(rng, 32);
  Tape tape(false);
  const Tensor& got = tape.value(model.patchify_embed(tape, store, img).features);
  const auto w = oracle::to_matrix(store[model.patch_embed_w()].value);
  const auto b = oracle::to_vector(store[model.patch_embed_b()].value);
  const Tensor& pos = store[model.positional()].value;
  for (std::size_t py = 0; py < 8; ++py)
    for (std::size_t px = 0; px < 8; ++px) {
      std::vector<double> flat;
      for (std::size_t dy = 0; dy < 4; ++dy)
        for (std::size_t dx = 0; dx < 4; ++dx)
          for (std::size_t ch = 0; ch < 3; ++ch) flat.push_back(img[((py * 4 + dy) * 32 + px * 4 + dx) * 3 + ch]);
      const auto row = oracle::affine_row(flat, w, b);
      for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(got(py * 8 + px, c), row[c] + pos(py * 8 + px, c), 1e-12);
    }
}

TEST(WindowMeanPool, IdenticalNodesCollapse) {
  Tape tape(false);
  Tensor x = Tensor::matrix({{1, 2}, {1, 2}, {1, 2}, {1, 2}});
  EXPECT_EQ(tape.value(window_mean_pool(tape, tape.constant(x), Grid{2, 2})), Tensor::matrix({{1, 2}}));
}

TEST(WindowMeanPool, MatchesWindowedMeanOracle) {
  std::mt19937_64 rng(5);
  Tensor x = oracle::random_matrix(rng, 16, 6);
  Tape tape(false);
  const Tensor& got = tape.value(window_mean_pool(tape, tape.constant(x), Grid{4, 4}));
  ASSERT_EQ(got.shape(), (Shape{4, 6}));
  for (std::size_t y = 0; y < 2; ++y)
    for (std::size_t xx = 0; xx < 2; ++xx)
      for (std::size_t c = 0; c < 6; ++c) {
        const double mean = (x((2 * y) * 4 + 2 * xx, c) + x((2 * y) * 4 + 2 * xx + 1, c) +
                             x((2 * y + 1) * 4 + 2 * xx, c) + x((2 * y + 1) * 4 + 2 * xx + 1, c)) /
                            4.0;
        EXPECT_NEAR(got(y * 2 + xx, c), mean, 1e-15);
      }
}

TEST(WindowMeanPool, OddGridIsArgumentError) {
  Tape tape(false);
  EXPECT_THROW(window_mean_pool(tape, tape.constant(Tensor({9, 2})), Grid{3, 3}), ArgumentError);
}

TEST(Downsample, GridHalvesAndProjects) {
  GkgModel model(ModelConfig::tiny(), 6);
  std::mt19937_64 rng(6);
  Tape tape(false);
  NodeSet in{tape.constant(oracle::random_matrix(rng, 64, 8)), NodeKind::patch, Grid{8, 8}};
  NodeSet out = model.downsample(tape, model.params(), 0, in);
  EXPECT_EQ(tape.shape(out.features), (Shape{16, 16}));
  EXPECT_EQ(*out.grid, (Grid{4, 4}));
}

TEST(Forward, TinyConfigShapesAndClampedK) {
  std::mt19937_64 rng(7);
  GkgModel model(ModelConfig::tiny(), 7);
  ForwardOptions opts;
  opts.capture_graphs = true;
  ForwardTrace t = evaluate_forward(model, random_image(rng, 32), opts);
  EXPECT_EQ(t.logits_patch.shape(), (Shape{4}));
  EXPECT_EQ(t.logits_label.shape(), (Shape{4}));
  EXPECT_EQ(t.scores.shape(), (Shape{4}));
  const std::vector<Grid> grids{{8, 8}, {4, 4}, {2, 2}, {1, 1}};
  ASSERT_EQ(t.modules.size(), 8u);
  for (const auto& m : t.modules) {
    EXPECT_EQ(m.source_grid, grids[m.stage]);
    EXPECT_EQ(m.graph.k, std::min<std::size_t>(3, grids[m.stage].size()));
    if (m.kind == ModuleKind::cross_level) EXPECT_EQ(m.graph.num_dest, 4u);
  }
}

TEST(Forward, DeterministicAcrossRunsAndInstances) {
  std::mt19937_64 rng(8);
  Tensor img = random_image(rng, 32);
  GkgModel a(ModelConfig::tiny(), 8), b(ModelConfig::tiny(), 8);
  EXPECT_EQ(evaluate_forward(a, img).scores, evaluate_forward(a, img).scores);
  EXPECT_EQ(evaluate_forward(a, img).scores, evaluate_forward(b, img).scores);
}

TEST(Forward, ZeroHeadsGiveOneHalf) {
  std::mt19937_64 rng(9);
  GkgModel model(ModelConfig::tiny(), 9);
  for (ParamId id : {model.head_ids().patch_w, model.head_ids().patch_b, model.head_ids().label_w,
                     model.head_ids().label_b})
    model.params()[id].value.fill(0);
  const Tensor scores = evaluate_forward(model, random_image(rng, 32)).scores;
  for (double s : scores.data()) EXPECT_EQ(s, 0.5);
}

TEST(Forward, ScoresAreSigmoidOfSummedHeads) {
  std::mt19937_64 rng(10);
  GkgModel model(ModelConfig::micro(), 10);
  for (int trial = 0; trial < 3; ++trial) {
    ForwardTrace t = evaluate_forward(model, random_image(rng, 32));
    for (std::size_t c = 0; c < 8; ++c) {
      EXPECT_EQ(t.scores[c], ops::sigmoid(t.logits_patch[c] + t.logits_label[c]));
      EXPECT_GT(t.scores[c], 0.0);
      EXPECT_LT(t.scores[c], 1.0);
    }
  }
}

TEST(Forward, HeadAdditivity) {
  std::mt19937_64 rng(11);
  GkgModel model(ModelConfig::tiny(), 11);
  Tensor img = random_image(rng, 32);
  const Tensor before = evaluate_forward(model, img).scores;
  const double delta = 0.75;
  model.params()[model.head_ids().patch_b].value[2] += delta;
  model.params()[model.head_ids().label_b].value[2] -= delta;
  const Tensor after = evaluate_forward(model, img).scores;
  for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(after[c], before[c], 1e-15);
}

TEST(Forward, WrongImageShapeIsDimensionError) {
  GkgModel model(ModelConfig::tiny(), 12);
  EXPECT_THROW(evaluate_forward(model, Tensor({16, 16, 3})), DimensionError);
}

TEST(ModelConfig, ValidationNamesField) {
  ModelConfig c = ModelConfig::micro();
  c.dims[1] = 33;
  try {
    c.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("model.dims[1]"), std::string::npos);
  }
}

TEST(ResidualIdentity, ZeroSecondFfnLayersPassEmbeddingsThrough) {
  std::mt19937_64 rng(13);
  GkgModel model(ModelConfig::tiny(), 13);
  ParamStore& store = model.params();
  for (std::size_t s = 0; s < 4; ++s) {
    for (const auto& p : model.patch_modules(s)) store[p.ffn_w2].value.fill(0);
    for (const auto& p : model.cross_modules(s)) store[p.ffn_w2].value.fill(0);
  }
  Tensor img = random_image(rng, 32);
  ForwardOptions opts;
  opts.capture_features = true;
  ForwardTrace t = evaluate_forward(model, img, opts);
  for (const auto& m : t.modules) EXPECT_EQ(m.dest_out, m.dest_in);

  // Same network with every module removed.
  Tape tape(false);
  NodeSet patches = model.patchify_embed(tape, store, img);
  NodeSet labels = model.label_nodes(tape, store);
  for (std::size_t b = 0; b < 3; ++b) {
    patches = model.downsample(tape, store, b, patches);
    labels = model.project_labels(tape, store, b, labels);
  }
  auto [yp, yl] = model.heads(tape, store, patches, labels);
  EXPECT_EQ(t.logits_patch, tape.value(yp));
  EXPECT_EQ(t.logits_label, tape.value(yl));
  EXPECT_EQ(t.scores, ops::sigmoid(tape.value(ops::add(tape, yp, yl))));
}

TEST(ConnectionRecord, ModuleCountsAndValidIndices) {
  std::mt19937_64 rng(14);
  GkgModel model(ModelConfig::micro(), 14);
  const auto rec = connection_record(model, random_image(rng, 32));
  std::size_t modules = 0;
  for (const auto& stage : rec["stages"]) {
    for (const auto& m : stage["modules"]) {
      ++modules;
      const std::size_t ns = m["num_src"], nd = m["num_dest"], k = m["k"], groups = m["G"];
      if (m["kind"] == "cross") EXPECT_EQ(nd, 8u);
      EXPECT_EQ(m["edges"].size(), nd * groups);
      for (const auto& e : m["edges"]) {
        EXPECT_EQ(e["sources"].size(), k);
        for (std::size_t s : e["sources"]) EXPECT_LT(s, ns);
      }
    }
  }
  EXPECT_EQ(modules, 5u + 4u);
  EXPECT_EQ(rec["labels"].size(), 8u);
}

TEST(LinearBaseline, ProducesOneLogitPerClass) {
  std::mt19937_64 rng(15);
  LinearBaseline base(ModelConfig::micro(), 15);
  Tape tape(false);
  EXPECT_EQ(tape.shape(base.logits(tape, base.params(), random_image(rng, 32))), (Shape{8}));
}

TEST(Gradcheck, TinyModelSampledEntriesWithFrozenGraphs) {
  std::mt19937_64 rng(16);
  GkgModel model(ModelConfig::tiny(), 16);
  Tensor img = random_image(rng, 32);
  const std::vector<std::uint8_t> targets{1, 0, 0, 1};
  LossConfig loss;
  ParamStore& store = model.params();
  Tape tape;
  ForwardOptions capture;
  capture.capture_graphs = true;
  ForwardVars vars = model.forward(tape, store, img, capture);
  std::vector<GroupedKnnGraph> frozen;
  for (auto& m : vars.modules) frozen.push_back(m.graph);
  backward(tape, total_loss(tape, vars.logits, targets, loss), store);
  auto f = [&](const ParamStore& s) {
    Tape t(false);
    ForwardOptions replay;
    replay.frozen_graphs = &frozen;
    return total_loss(t.value(model.forward(t, s, img, replay).logits).data(), targets, loss);
  };
  GradcheckOptions options;
  options.fraction = 0.05;
  const auto result = finite_difference_gradcheck(f, store, options);
  EXPECT_GT(result.checked, 100u);
  EXPECT_LE(result.max_rel_error, 1e-4) << result.worst_param << "[" << result.worst_index << "]";
}
