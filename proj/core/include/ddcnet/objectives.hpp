#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ddcnet/errors.hpp"

namespace ddc {

enum class Reduction {
  kPerPixelMean,   // (1/N) sum_i ||x_i - y_i||_F^2 / (H*W*C)
  kFrobeniusSum,   // (1/N) sum_i ||x_i - y_i||_F^2
};

enum class GeneratorLoss { kNonSaturating, kMinimax };

enum class Stage { kPretrain, kFinetune };

const char* to_string(Reduction r);
const char* to_string(GeneratorLoss g);
const char* to_string(Stage s);
Reduction parse_reduction(const std::string& text);
GeneratorLoss parse_generator_loss(const std::string& text);

// Probabilities are clamped to [kProbabilityEpsilon, 1 - kProbabilityEpsilon]
// before taking logs.
inline constexpr double kProbabilityEpsilon = 1e-7;

namespace detail {

template <std::floating_point T>
void check_batch(std::span<const T> a, std::span<const T> b, std::size_t batch) {
  if (a.size() != b.size()) {
    throw ShapeMismatch("loss inputs differ in size: " + std::to_string(a.size()) + " vs " +
                        std::to_string(b.size()));
  }
  if (batch == 0 || a.size() % batch != 0) {
    throw ShapeMismatch("loss input of " + std::to_string(a.size()) +
                        " values is not divisible into " + std::to_string(batch) + " samples");
  }
}

template <std::floating_point T>
T clamp_probability(T p) {
  if (!(p >= T(0) && p <= T(1))) {
    throw DomainError("probability outside [0,1]: " + std::to_string(static_cast<double>(p)));
  }
  const T eps = static_cast<T>(kProbabilityEpsilon);
  const T c = p < eps ? eps : (p > T(1) - eps ? T(1) - eps : p);
  if (c <= T(0) || c >= T(1)) throw DomainError("probability saturated after clamping");
  return c;
}

template <std::floating_point T>
bool inside_clamp(T p) {
  const T eps = static_cast<T>(kProbabilityEpsilon);
  return p > eps && p < T(1) - eps;
}

template <std::floating_point T>
double reduction_scale(std::size_t total, std::size_t batch, Reduction r) {
  const double per_sample = static_cast<double>(total / batch);
  return r == Reduction::kPerPixelMean ? 1.0 / (static_cast<double>(batch) * per_sample)
                                       : 1.0 / static_cast<double>(batch);
}

// Mean of f(x_i), accumulated as offsets from the first term so that a
// constant input returns that constant exactly.
template <std::floating_point T, typename F>
double shifted_mean(std::span<const T> xs, F f) {
  const double first = f(xs[0]);
  double offset = 0.0;
  for (std::size_t i = 1; i < xs.size(); ++i) offset += f(xs[i]) - first;
  return first + offset / static_cast<double>(xs.size());
}

}  // namespace detail

// Quadratic (Euclidean) loss shared by the background, rain and
// reconstruction terms. `batch` is N; the per-sample size is inferred.
template <std::floating_point T>
double quadratic_loss(std::span<const T> prediction, std::span<const T> target, std::size_t batch,
                      Reduction reduction) {
  detail::check_batch(prediction, target, batch);
  double sum = 0.0;
  for (std::size_t i = 0; i < prediction.size(); ++i) {
    const double d = static_cast<double>(prediction[i]) - static_cast<double>(target[i]);
    sum += d * d;
  }
  return sum * detail::reduction_scale<T>(prediction.size(), batch, reduction);
}

// d(quadratic_loss)/d(prediction).
template <std::floating_point T>
std::vector<T> quadratic_loss_grad(std::span<const T> prediction, std::span<const T> target,
                                   std::size_t batch, Reduction reduction) {
  detail::check_batch(prediction, target, batch);
  const double scale = 2.0 * detail::reduction_scale<T>(prediction.size(), batch, reduction);
  std::vector<T> g(prediction.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    g[i] = static_cast<T>(scale * (static_cast<double>(prediction[i]) - static_cast<double>(target[i])));
  }
  return g;
}

// L_B: background branch output vs clean background.
template <std::floating_point T>
double loss_background(std::span<const T> predicted, std::span<const T> background,
                       std::size_t batch, Reduction reduction = Reduction::kPerPixelMean) {
  return quadratic_loss(predicted, background, batch, reduction);
}

// L_R: rain branch output vs rain layer.
template <std::floating_point T>
double loss_rain(std::span<const T> predicted, std::span<const T> rain, std::size_t batch,
                 Reduction reduction = Reduction::kPerPixelMean) {
  return quadratic_loss(predicted, rain, batch, reduction);
}

// L_O: composed reconstruction vs the rainy input.
template <std::floating_point T>
double loss_reconstruction(std::span<const T> reconstructed, std::span<const T> rainy,
                           std::size_t batch, Reduction reduction = Reduction::kPerPixelMean) {
  return quadratic_loss(reconstructed, rainy, batch, reduction);
}

// Discriminator objective -[mean log D(real) + mean log(1 - D(fake))]; the
// means run over batch and spatial map.
template <std::floating_point T>
double loss_adversarial_d(std::span<const T> d_real, std::span<const T> d_fake) {
  if (d_real.empty() || d_fake.empty()) throw ShapeMismatch("empty discriminator output");
  const double real = detail::shifted_mean(
      d_real, [](T p) { return std::log(static_cast<double>(detail::clamp_probability(p))); });
  const double fake = detail::shifted_mean(
      d_fake, [](T p) { return std::log1p(-static_cast<double>(detail::clamp_probability(p))); });
  return -(real + fake);
}

struct AdversarialGrad {
  std::vector<double> real;
  std::vector<double> fake;
};

// Gradient of loss_adversarial_d w.r.t. the probabilities (zero where the
// clamp is active).
template <std::floating_point T>
AdversarialGrad loss_adversarial_d_grad(std::span<const T> d_real, std::span<const T> d_fake) {
  AdversarialGrad g{std::vector<double>(d_real.size()), std::vector<double>(d_fake.size())};
  const double nr = static_cast<double>(d_real.size());
  const double nf = static_cast<double>(d_fake.size());
  for (std::size_t i = 0; i < d_real.size(); ++i) {
    const double p = detail::clamp_probability(d_real[i]);
    g.real[i] = detail::inside_clamp(d_real[i]) ? -1.0 / (nr * p) : 0.0;
  }
  for (std::size_t i = 0; i < d_fake.size(); ++i) {
    const double p = detail::clamp_probability(d_fake[i]);
    g.fake[i] = detail::inside_clamp(d_fake[i]) ? 1.0 / (nf * (1.0 - p)) : 0.0;
  }
  return g;
}

// Same gradient taken w.r.t. the pre-sigmoid logits z (p = sigmoid(z)).
// Unlike the probability-space form it does not vanish when D saturates.
template <std::floating_point T>
AdversarialGrad loss_adversarial_d_grad_logits(std::span<const T> d_real, std::span<const T> d_fake) {
  AdversarialGrad g{std::vector<double>(d_real.size()), std::vector<double>(d_fake.size())};
  const double nr = static_cast<double>(d_real.size());
  const double nf = static_cast<double>(d_fake.size());
  for (std::size_t i = 0; i < d_real.size(); ++i) g.real[i] = -(1.0 - d_real[i]) / nr;
  for (std::size_t i = 0; i < d_fake.size(); ++i) g.fake[i] = static_cast<double>(d_fake[i]) / nf;
  return g;
}

// Generator objective. MINIMAX: mean log(1 - D(fake)) (minimised by G);
// NON_SATURATING: -mean log D(fake).
template <std::floating_point T>
double loss_adversarial_g(std::span<const T> d_fake, GeneratorLoss variant = GeneratorLoss::kNonSaturating) {
  if (d_fake.empty()) throw ShapeMismatch("empty discriminator output");
  const double mean = detail::shifted_mean(d_fake, [variant](T p) {
    const double c = detail::clamp_probability(p);
    return variant == GeneratorLoss::kMinimax ? std::log1p(-c) : std::log(c);
  });
  return variant == GeneratorLoss::kMinimax ? mean : -mean;
}

template <std::floating_point T>
std::vector<double> loss_adversarial_g_grad(std::span<const T> d_fake,
                                            GeneratorLoss variant = GeneratorLoss::kNonSaturating) {
  std::vector<double> g(d_fake.size());
  const double n = static_cast<double>(d_fake.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double p = detail::clamp_probability(d_fake[i]);
    if (!detail::inside_clamp(d_fake[i])) continue;
    g[i] = variant == GeneratorLoss::kMinimax ? -1.0 / (n * (1.0 - p)) : -1.0 / (n * p);
  }
  return g;
}

template <std::floating_point T>
std::vector<double> loss_adversarial_g_grad_logits(std::span<const T> d_fake,
                                                   GeneratorLoss variant = GeneratorLoss::kNonSaturating) {
  std::vector<double> g(d_fake.size());
  const double n = static_cast<double>(d_fake.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double p = d_fake[i];
    g[i] = variant == GeneratorLoss::kMinimax ? -p / n : -(1.0 - p) / n;
  }
  return g;
}

struct LossWeights {
  double background = 1.0;
  double rain = 1.0;
  double reconstruction = 1.0;
  double adversarial = 0.0;

  bool operator==(const LossWeights&) const = default;
};

struct StageObjective {
  Stage stage = Stage::kPretrain;
  LossWeights weights;
  Reduction reduction = Reduction::kPerPixelMean;

  static StageObjective pretrain_default();
  static StageObjective finetune_default();

  // Pretrain forbids an adversarial weight; fine-tune forbids background and
  // rain weights. Weights must be finite and non-negative.
  void validate() const;
};

// Component values fed to stage_total; absent components are not evaluated.
struct LossComponents {
  std::optional<double> background;
  std::optional<double> rain;
  std::optional<double> reconstruction;
  std::optional<double> adversarial;
};

struct LossValue {
  double total = 0.0;
  std::map<std::string, double> components;  // raw (unweighted) values
  std::map<std::string, double> weights;
};

// Weighted sum. Throws StageInvariantViolation when the objective breaks its
// stage invariant or a positively weighted component is missing.
LossValue stage_total(const StageObjective& objective, const LossComponents& components);

}  // namespace ddc
