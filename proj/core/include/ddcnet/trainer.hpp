#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <nlohmann/json.hpp>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ddcnet/datastore.hpp"
#include "ddcnet/network.hpp"
#include "ddcnet/objectives.hpp"

namespace ddc {

struct LrStep {
  std::int64_t start = 0;  // first iteration using `rate`
  double rate = 0.0;
  bool operator==(const LrStep&) const = default;
};

// Which real images feed the discriminator's "real" side during fine-tune.
enum class RealPool { kClean, kCleanAndRainy };

struct TrainConfig {
  int batch = 8;
  int patch = 224;
  double momentum = 0.9;
  double weight_decay = 1e-6;
  std::vector<LrStep> lr_schedule{{0, 1e-3}, {70000, 1e-4}};
  std::int64_t max_iter = 100000;
  std::int64_t finetune_iter = 10000;
  double finetune_lr = 1e-4;
  int d_steps_per_g = 1;
  std::uint64_t seed = 0;
  std::int64_t checkpoint_every = 5000;

  StageObjective pretrain_objective = StageObjective::pretrain_default();
  StageObjective finetune_objective = StageObjective::finetune_default();
  GeneratorLoss generator_loss = GeneratorLoss::kNonSaturating;
  RealPool real_pool = RealPool::kClean;
  bool finetune_encoder = true;
  bool augment_flip = false;
  // Warn when discriminator accuracy stays above the threshold this long.
  std::int64_t collapse_window = 500;
  double collapse_accuracy = 0.95;

  // Throws InvalidParameter.
  void validate() const;
  // Right-continuous step schedule: the rate of the last step with start <= iter.
  double lr_at(std::int64_t iteration) const;
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);
std::uint64_t config_hash(const TrainConfig& cfg);

struct Checkpoint {
  Stage stage = Stage::kPretrain;
  std::int64_t iteration = 0;  // completed iterations in `stage`
  NetworkConfig network;
  Weights weights;
  ParameterSet momentum;  // SGD velocity for every parameter trained so far
  std::uint64_t seed = 0;  // batch seeds derive from (seed, stage, iteration)
  std::uint64_t train_config_hash = 0;
  std::vector<double> loss_tail;
  std::vector<std::string> warnings;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// v = momentum * v - lr * (g + decay * w); w += v. Weight decay skips biases.
// Only parameters present in `grads` are touched.
void sgd_step(Weights& weights, const Gradients& grads, ParameterSet& velocity, double lr,
              double momentum, double weight_decay);

// Append-only JSONL training log: an optional header record followed by one
// record per iteration {iter, stage, lr, components, weights, total, ms_per_iter}.
class TrainingLog {
 public:
  TrainingLog() = default;
  // Throws IoError when the file cannot be opened.
  TrainingLog(const std::filesystem::path& path, bool append);

  bool is_open() const { return out_.is_open(); }
  void write_header(const nlohmann::json& header);
  // Returns the record that was appended. Throws IoError on write failure.
  nlohmann::json log_iteration(std::int64_t iteration, Stage stage, const LossValue& loss, double lr,
                               double ms_per_iter, const nlohmann::json& extra = {});
  void flush();

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

struct RunOptions {
  // Checkpoints (<stage>_latest.ckpt, <stage>_final.ckpt) and train_log.jsonl
  // go here; nothing is written when empty.
  std::filesystem::path output_dir;
  std::optional<Checkpoint> resume;
  std::ostream* progress = nullptr;
  std::int64_t progress_every = 100;
  // Seconds since an arbitrary epoch; injectable for reproducible logs.
  std::function<double()> clock;
  // Called after every iteration with the logged record.
  std::function<void(const nlohmann::json&)> on_iteration;
  std::size_t image_cache_bytes = std::size_t{1} << 30;
};

// Paired pre-training on synthetic triplets, minimising the pretrain stage
// objective over background, rain and reconstruction losses.
// Throws NonFiniteLoss (the last written checkpoint is kept).
Checkpoint pretrain(const Manifest& paired, const TrainConfig& cfg, const NetworkConfig& net_cfg,
                    const RunOptions& options = {});

// Unpaired adversarial fine-tune. Alternates d_steps_per_g discriminator
// steps with one step of the background branch (the generator) on
// w_adv * L_adv + w_O * L_O. The rain decoder stays frozen.
Checkpoint finetune(const Checkpoint& pretrained, const Manifest& real_rainy,
                    const Manifest& real_clean, const TrainConfig& cfg,
                    const RunOptions& options = {});

}  // namespace ddc
