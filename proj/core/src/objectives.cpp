#include "ddcnet/objectives.hpp"

namespace ddc {

const char* to_string(Reduction r) {
  return r == Reduction::kPerPixelMean ? "per_pixel_mean" : "frobenius_sum";
}

const char* to_string(GeneratorLoss g) {
  return g == GeneratorLoss::kNonSaturating ? "non_saturating" : "minimax";
}

const char* to_string(Stage s) { return s == Stage::kPretrain ? "pretrain" : "finetune"; }

Reduction parse_reduction(const std::string& text) {
  if (text == "per_pixel_mean" || text == "mean") return Reduction::kPerPixelMean;
  if (text == "frobenius_sum" || text == "sum") return Reduction::kFrobeniusSum;
  throw InvalidParameter("unknown reduction '" + text + "'");
}

GeneratorLoss parse_generator_loss(const std::string& text) {
  if (text == "non_saturating") return GeneratorLoss::kNonSaturating;
  if (text == "minimax") return GeneratorLoss::kMinimax;
  throw InvalidParameter("unknown generator loss '" + text + "'");
}

StageObjective StageObjective::pretrain_default() {
  return {Stage::kPretrain, LossWeights{1.0, 1.0, 1.0, 0.0}, Reduction::kPerPixelMean};
}

StageObjective StageObjective::finetune_default() {
  return {Stage::kFinetune, LossWeights{0.0, 0.0, 1.0, 1.0}, Reduction::kPerPixelMean};
}

void StageObjective::validate() const {
  for (double w : {weights.background, weights.rain, weights.reconstruction, weights.adversarial}) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw StageInvariantViolation("loss weights must be finite and non-negative");
    }
  }
  if (stage == Stage::kPretrain && weights.adversarial != 0.0) {
    throw StageInvariantViolation("pretrain objective must not weight the adversarial loss");
  }
  if (stage == Stage::kFinetune && (weights.background != 0.0 || weights.rain != 0.0)) {
    throw StageInvariantViolation(
        "fine-tune objective has no background/rain supervision; their weights must be 0");
  }
}

LossValue stage_total(const StageObjective& objective, const LossComponents& components) {
  objective.validate();
  LossValue v;
  auto add = [&](const char* name, double weight, const std::optional<double>& value) {
    if (!value) {
      if (weight > 0.0) {
        throw StageInvariantViolation(std::string("component '") + name +
                                      "' has positive weight but was not provided");
      }
      return;
    }
    v.components[name] = *value;
    v.weights[name] = weight;
    v.total += weight * *value;
  };
  add("background", objective.weights.background, components.background);
  add("rain", objective.weights.rain, components.rain);
  add("reconstruction", objective.weights.reconstruction, components.reconstruction);
  add("adversarial", objective.weights.adversarial, components.adversarial);
  return v;
}

}  // namespace ddc
