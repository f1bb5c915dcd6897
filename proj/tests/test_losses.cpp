#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "gkg/errors.hpp"
#include "gkg/gradcheck.hpp"
#include "gkg/losses.hpp"
#include "gkg/ops.hpp"

using namespace gkg;

namespace {

using Labels = std::vector<std::uint8_t>;

double plain_bce(const std::vector<double>& z, const Labels& y) {
  double total = 0;
  for (std::size_t c = 0; c < z.size(); ++c) {
    const double p = std::clamp(1.0 / (1.0 + std::exp(-z[c])), 1e-8, 1 - 1e-8);
    total += y[c] ? -std::log(p) : -std::log(1 - p);
  }
  return total / static_cast<double>(z.size());
}

std::vector<double> random_logits(std::mt19937_64& rng, std::size_t n, double scale = 3.0) {
  std::normal_distribution<double> d(0, scale);
  std::vector<double> z(n);
  for (double& v : z) v = d(rng);
  return z;
}

Labels random_labels(std::mt19937_64& rng, std::size_t n) {
  Labels y(n);
  for (auto& v : y) v = static_cast<std::uint8_t>(rng() % 2);
  return y;
}

double logit_of(double p) { return std::log(p / (1 - p)); }

}  // namespace

TEST(LabelSmoothBce, ConfidentCorrectApproachesZero) {
  EXPECT_LT(label_smooth_bce(std::vector<double>{40.0}, Labels{1}, 0.0), 1e-7);
}

TEST(LabelSmoothBce, ZeroEpsilonIsPlainBce) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    auto z = random_logits(rng, 8);
    auto y = random_labels(rng, 8);
    EXPECT_NEAR(label_smooth_bce(z, y, 0.0), plain_bce(z, y), 1e-15);
  }
}

TEST(LabelSmoothBce, ZeroLogitGivesLogTwoForAnyEpsilon) {
  for (double eps : {0.0, 0.1, 0.5}) {
    EXPECT_NEAR(label_smooth_bce(std::vector<double>{0.0}, Labels{1}, eps), std::log(2.0), 1e-15);
  }
}

TEST(AsymmetricLoss, ConfidentPositiveApproachesZero) {
  EXPECT_LT(asymmetric_loss(std::vector<double>{40.0}, Labels{1}, 0, 4, 0.05), 1e-7);
}

TEST(AsymmetricLoss, MarginDeadZoneIsExactlyZero) {
  EXPECT_EQ(asymmetric_loss(std::vector<double>{logit_of(0.04)}, Labels{0}, 0, 4, 0.05), 0.0);
  EXPECT_EQ(asymmetric_loss(std::vector<double>{-20.0}, Labels{0}, 0, 4, 0.05), 0.0);
}

TEST(AsymmetricLoss, HandEvaluatedNegative) {
  const double expected = std::pow(0.85, 4) * -std::log(0.15);
  EXPECT_NEAR(asymmetric_loss(std::vector<double>{logit_of(0.9)}, Labels{0}, 0, 4, 0.05), expected, 1e-12);
}

TEST(TotalLoss, ZeroWhenBothComponentsVanish) {
  LossConfig cfg;
  cfg.smooth_eps = 0;
  // Only the probability floor keeps the result above zero.
  EXPECT_LT(total_loss(std::vector<double>{60.0, -60.0}, Labels{1, 0}, cfg), 1e-7);
}

TEST(TotalLoss, IsSumOfComponents) {
  std::mt19937_64 rng(2);
  LossConfig cfg;
  for (int trial = 0; trial < 20; ++trial) {
    auto z = random_logits(rng, 8);
    auto y = random_labels(rng, 8);
    const double sum = label_smooth_bce(z, y, cfg.smooth_eps) +
                       asymmetric_loss(z, y, cfg.gamma_pos, cfg.gamma_neg, cfg.margin);
    EXPECT_NEAR(total_loss(z, y, cfg), sum, 1e-14);
  }
}

TEST(TotalLoss, TapeAndValueFormsAgree) {
  std::mt19937_64 rng(3);
  LossConfig cfg;
  auto z = random_logits(rng, 8);
  auto y = random_labels(rng, 8);
  Tape tape;
  Var v = total_loss(tape, tape.constant(Tensor({z.size()}, z)), y, cfg);
  EXPECT_EQ(tape.value(v).item(), total_loss(z, y, cfg));
}

TEST(TotalLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    LossConfig cfg;
    auto y = random_labels(rng, 8);
    ParamStore store;
    ParamId z = store.add("z", Tensor({8}, random_logits(rng, 8, 2.0)));
    Tape tape;
    backward(tape, total_loss(tape, tape.param(store, z), y, cfg), store);
    auto f = [&](const ParamStore& s) { return total_loss(s[z].value.data(), y, cfg); };
    const auto result = finite_difference_gradcheck(f, store);
    EXPECT_LE(result.max_rel_error, 1e-6) << "trial " << trial << " " << result.worst_index;
  }
}

TEST(LossConfig, OutOfRangeFieldsAreConfigErrors) {
  LossConfig cfg;
  cfg.smooth_eps = 1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.margin = -0.1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.gamma_neg = -1;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(LossProperty, NonNegative) {
  std::mt19937_64 rng(5);
  LossConfig cfg;
  for (int trial = 0; trial < 200; ++trial) {
    auto z = random_logits(rng, 8, 10.0);
    auto y = random_labels(rng, 8);
    EXPECT_GE(label_smooth_bce(z, y, cfg.smooth_eps), 0.0);
    EXPECT_GE(asymmetric_loss(z, y, cfg.gamma_pos, cfg.gamma_neg, cfg.margin), 0.0);
  }
}

TEST(LossProperty, PositiveLossDecreasesWithLogit) {
  LossConfig cfg;
  double prev_plain = INFINITY, prev_asl = INFINITY;
  for (double z = -8; z <= 8; z += 0.25) {
    const double plain = label_smooth_bce(std::vector<double>{z}, Labels{1}, 0.0);
    const double asl = asymmetric_loss(std::vector<double>{z}, Labels{1}, cfg.gamma_pos, cfg.gamma_neg, cfg.margin);
    EXPECT_LT(plain, prev_plain) << z;
    EXPECT_LT(asl, prev_asl) << z;
    prev_plain = plain;
    prev_asl = asl;
  }
}

// A smoothed positive target y' = 1 - eps/2 is matched best at
// z* = logit(1 - eps/2): the loss falls up to z* and rises after it.
TEST(LossProperty, SmoothedPositiveLossIsMinimisedAtSmoothedTarget) {
  for (double eps : {0.02, 0.1, 0.3}) {
    const double z_star = logit_of(1 - eps / 2);
    auto loss = [&](double z) { return label_smooth_bce(std::vector<double>{z}, Labels{1}, eps); };
    for (double z = z_star - 8; z < z_star - 0.01; z += 0.25) EXPECT_GT(loss(z), loss(z + 0.005)) << eps << " " << z;
    for (double z = z_star + 0.01; z < z_star + 8; z += 0.25) EXPECT_LT(loss(z), loss(z + 0.005)) << eps << " " << z;
    const double floor = -((1 - eps / 2) * std::log(1 - eps / 2) + (eps / 2) * std::log(eps / 2));
    EXPECT_NEAR(loss(z_star), floor, 1e-12);
  }
}

TEST(LossProperty, DegenerateSettingsGiveTwicePlainBce) {
  std::mt19937_64 rng(6);
  LossConfig cfg;
  cfg.smooth_eps = 0;
  cfg.gamma_pos = 0;
  cfg.gamma_neg = 0;
  cfg.margin = 0;
  for (int trial = 0; trial < 50; ++trial) {
    auto z = random_logits(rng, 8);
    auto y = random_labels(rng, 8);
    EXPECT_EQ(total_loss(z, y, cfg), 2.0 * label_smooth_bce(z, y, 0.0));
    EXPECT_NEAR(total_loss(z, y, cfg), 2.0 * plain_bce(z, y), 1e-14);
  }
}
