#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "ddcnet/objectives.hpp"
#include "ddcnet/rng.hpp"
#include "oracles.hpp"

namespace ddc {
namespace {

using testing::central_difference;
using testing::relative_error;
using Vec = std::vector<double>;
using Span = std::span<const double>;

Vec random_vec(std::size_t n, std::uint64_t seed, double lo, double hi) {
  Rng rng(seed);
  Vec v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

TEST(Quadratic, HandWorkedValues) {
  const Vec a(4, 0.5), b(4, 0.0);
  EXPECT_DOUBLE_EQ(loss_background<double>(a, b, 1, Reduction::kFrobeniusSum), 1.0);
  EXPECT_DOUBLE_EQ(loss_background<double>(a, b, 1, Reduction::kPerPixelMean), 0.25);
  // Two samples of one value each with squared errors 1 and 3.
  const Vec p{1.0, std::sqrt(3.0)}, q{0.0, 0.0};
  EXPECT_NEAR(loss_background<double>(p, q, 2, Reduction::kFrobeniusSum), 2.0, 1e-15);
  EXPECT_DOUBLE_EQ(loss_rain<double>(Vec{0.0}, Vec{1.0}, 1, Reduction::kFrobeniusSum), 1.0);
  EXPECT_DOUBLE_EQ(loss_rain<double>(Vec{0.0}, Vec{1.0}, 1, Reduction::kPerPixelMean), 1.0);
}

TEST(Quadratic, ConstantOffsetOnFullSizeImage) {
  const std::size_t n = 224 * 224 * 3;
  const Vec o(n, 0.5), o_hat(n, 0.6);
  const double mean = loss_reconstruction<double>(o_hat, o, 1);
  EXPECT_NEAR(mean, 0.01, 1e-12);
  EXPECT_NEAR(loss_reconstruction<double>(o_hat, o, 1, Reduction::kFrobeniusSum), mean * n, 1e-8);
}

TEST(Quadratic, PropertiesOnRandomBatches) {
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    const Vec a = random_vec(32, trial, 0, 1), b = random_vec(32, 100 + trial, 0, 1);
    const double ab = quadratic_loss<double>(a, b, 2, Reduction::kPerPixelMean);
    EXPECT_GT(ab, 0.0);
    EXPECT_EQ(ab, quadratic_loss<double>(b, a, 2, Reduction::kPerPixelMean));
    EXPECT_EQ(quadratic_loss<double>(a, a, 2, Reduction::kPerPixelMean), 0.0);
    Vec doubled(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) doubled[i] = b[i] + 2 * (a[i] - b[i]);
    EXPECT_NEAR(quadratic_loss<double>(doubled, b, 2, Reduction::kPerPixelMean), 4 * ab, 1e-12);
  }
}

TEST(Quadratic, ShapeErrors) {
  EXPECT_THROW(loss_background<double>(Vec(4), Vec(5), 1), ShapeMismatch);
  EXPECT_THROW(loss_background<double>(Vec(5), Vec(5), 2), ShapeMismatch);
}

TEST(Adversarial, AnalyticValues) {
  const Vec half(676, 0.5);
  EXPECT_EQ(loss_adversarial_d<double>(half, half), 2 * std::numbers::ln2);
  EXPECT_NEAR(loss_adversarial_g<double>(half, GeneratorLoss::kNonSaturating), std::numbers::ln2, 1e-15);
  EXPECT_NEAR(loss_adversarial_g<double>(half, GeneratorLoss::kMinimax), -std::numbers::ln2, 1e-15);
  EXPECT_LT(loss_adversarial_d<double>(Vec(4, 1.0 - 1e-9), Vec(4, 1e-9)), 1e-6);
}

TEST(Adversarial, SwapAtUninformativePointIsSymmetric) {
  const Vec a(9, 0.5), b(9, 0.5);
  EXPECT_EQ(loss_adversarial_d<double>(a, b), loss_adversarial_d<double>(b, a));
}

TEST(Adversarial, NonSaturatingDecreasesAsFakeLooksReal) {
  double previous = std::numeric_limits<double>::infinity();
  for (double p = 0.05; p < 1.0; p += 0.05) {
    const double v = loss_adversarial_g<double>(Vec(3, p));
    EXPECT_LT(v, previous);
    previous = v;
  }
}

TEST(Adversarial, DomainErrors) {
  EXPECT_THROW(loss_adversarial_d<double>(Vec{1.5}, Vec{0.5}), DomainError);
  EXPECT_THROW(loss_adversarial_g<double>(Vec{std::nan("")}), DomainError);
  EXPECT_THROW(loss_adversarial_g<double>(Vec{-0.1}), DomainError);
  EXPECT_NO_THROW(loss_adversarial_d<double>(Vec{1.0}, Vec{0.0}));  // clamped
  EXPECT_THROW(loss_adversarial_d<double>(Vec{}, Vec{0.5}), ShapeMismatch);
}

// Analytic gradients vs central differences on random 4x4x1, N = 2 batches.
constexpr double kFdStep = 1e-6;
constexpr double kFdTolerance = 1e-4;

TEST(Gradients, QuadraticLossesMatchFiniteDifferences) {
  for (Reduction r : {Reduction::kPerPixelMean, Reduction::kFrobeniusSum}) {
    for (std::uint64_t trial = 0; trial < 20; ++trial) {
      Vec x = random_vec(32, trial, 0, 1);
      const Vec y = random_vec(32, 50 + trial, 0, 1);
      const Vec g = quadratic_loss_grad<double>(x, y, 2, r);
      auto f = [&](const Vec& v) { return quadratic_loss<double>(v, y, 2, r); };
      for (std::size_t i = 0; i < x.size(); ++i) {
        EXPECT_LT(relative_error(g[i], central_difference(f, x, i, kFdStep), 1e-8), kFdTolerance);
      }
    }
  }
}

TEST(Gradients, AdversarialLossesMatchFiniteDifferences) {
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    Vec real = random_vec(32, trial, 0.05, 0.95);
    Vec fake = random_vec(32, 70 + trial, 0.05, 0.95);
    const AdversarialGrad gd = loss_adversarial_d_grad<double>(real, fake);
    auto f_real = [&](const Vec& v) { return loss_adversarial_d<double>(v, fake); };
    auto f_fake = [&](const Vec& v) { return loss_adversarial_d<double>(real, v); };
    for (std::size_t i = 0; i < real.size(); ++i) {
      EXPECT_LT(relative_error(gd.real[i], central_difference(f_real, real, i, kFdStep)), kFdTolerance);
      EXPECT_LT(relative_error(gd.fake[i], central_difference(f_fake, fake, i, kFdStep)), kFdTolerance);
    }
    for (GeneratorLoss variant : {GeneratorLoss::kNonSaturating, GeneratorLoss::kMinimax}) {
      const Vec gg = loss_adversarial_g_grad<double>(fake, variant);
      auto f = [&](const Vec& v) { return loss_adversarial_g<double>(v, variant); };
      for (std::size_t i = 0; i < fake.size(); ++i) {
        EXPECT_LT(relative_error(gg[i], central_difference(f, fake, i, kFdStep)), kFdTolerance);
      }
    }
  }
}

// d/dz through p = sigmoid(z): logit gradients equal probability gradients
// times p (1 - p).
TEST(Gradients, LogitFormsAgreeWithChainRule) {
  const Vec real = random_vec(16, 1, 0.05, 0.95), fake = random_vec(16, 2, 0.05, 0.95);
  const AdversarialGrad p = loss_adversarial_d_grad<double>(real, fake);
  const AdversarialGrad z = loss_adversarial_d_grad_logits<double>(real, fake);
  for (std::size_t i = 0; i < real.size(); ++i) {
    EXPECT_NEAR(z.real[i], p.real[i] * real[i] * (1 - real[i]), 1e-12);
    EXPECT_NEAR(z.fake[i], p.fake[i] * fake[i] * (1 - fake[i]), 1e-12);
  }
  for (GeneratorLoss variant : {GeneratorLoss::kNonSaturating, GeneratorLoss::kMinimax}) {
    const Vec gp = loss_adversarial_g_grad<double>(fake, variant);
    const Vec gz = loss_adversarial_g_grad_logits<double>(fake, variant);
    for (std::size_t i = 0; i < fake.size(); ++i) EXPECT_NEAR(gz[i], gp[i] * fake[i] * (1 - fake[i]), 1e-12);
  }
}

TEST(StageTotal, WeightedSumAndInvariants) {
  LossComponents c;
  c.background = 0.2;
  c.rain = 0.3;
  c.reconstruction = 0.1;
  const LossValue v = stage_total(StageObjective::pretrain_default(), c);
  EXPECT_NEAR(v.total, 0.6, 1e-15);
  EXPECT_EQ(v.components.size(), 3u);
  EXPECT_EQ(v.components.count("adversarial"), 0u);

  StageObjective bad = StageObjective::finetune_default();
  bad.weights.background = 0.5;
  EXPECT_THROW(stage_total(bad, c), StageInvariantViolation);
  StageObjective adv_in_pretrain = StageObjective::pretrain_default();
  adv_in_pretrain.weights.adversarial = 1.0;
  EXPECT_THROW(adv_in_pretrain.validate(), StageInvariantViolation);

  StageObjective zero = StageObjective::pretrain_default();
  zero.weights = {0, 0, 0, 0};
  EXPECT_EQ(stage_total(zero, c).total, 0.0);

  LossComponents missing;
  missing.background = 0.2;
  EXPECT_THROW(stage_total(StageObjective::pretrain_default(), missing), StageInvariantViolation);
}

TEST(StageTotal, LinearInEachComponent) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    StageObjective o = StageObjective::pretrain_default();
    o.weights = {rng.uniform(), rng.uniform(), rng.uniform(), 0.0};
    LossComponents c{rng.uniform(), rng.uniform(), rng.uniform(), std::nullopt};
    const double base = stage_total(o, c).total;
    const double delta = rng.uniform();
    LossComponents shifted = c;
    *shifted.rain += delta;
    EXPECT_NEAR(stage_total(o, shifted).total - base, o.weights.rain * delta, 1e-12);
  }
  StageObjective f = StageObjective::finetune_default();
  LossComponents c;
  c.reconstruction = 0.25;
  c.adversarial = -0.5;  // adversarial terms may be negative
  EXPECT_NEAR(stage_total(f, c).total, -0.25, 1e-15);
}

TEST(Enums, RoundTrip) {
  for (Reduction r : {Reduction::kPerPixelMean, Reduction::kFrobeniusSum}) EXPECT_EQ(parse_reduction(to_string(r)), r);
  for (GeneratorLoss g : {GeneratorLoss::kNonSaturating, GeneratorLoss::kMinimax}) {
    EXPECT_EQ(parse_generator_loss(to_string(g)), g);
  }
  EXPECT_THROW(parse_reduction("median"), InvalidParameter);
}

}  // namespace
}  // namespace ddc
