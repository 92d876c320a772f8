#include "ddcnet/trainer.hpp"

#include <chrono>
#include <cmath>
#include <deque>
#include <iomanip>

#include "ddcnet/checkpoint.hpp"
#include "ddcnet/errors.hpp"
#include "ddcnet/rng.hpp"

namespace ddc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::size_t kLossTail = 64;
constexpr std::uint64_t kDiscriminatorStream = 0x64697363;
constexpr std::uint64_t kGeneratorStream = 0x67656e;

std::uint64_t batch_seed(std::uint64_t seed, Stage stage, std::int64_t iteration, std::uint64_t stream) {
  return derive_seed(derive_seed(derive_seed(seed, static_cast<std::uint64_t>(stage)),
                                 static_cast<std::uint64_t>(iteration)),
                     stream);
}

json objective_json(const StageObjective& o) {
  return {{"stage", to_string(o.stage)},
          {"reduction", to_string(o.reduction)},
          {"weights",
           {{"background", o.weights.background},
            {"rain", o.weights.rain},
            {"reconstruction", o.weights.reconstruction},
            {"adversarial", o.weights.adversarial}}}};
}

StageObjective objective_from_json(const json& j, Stage stage) {
  StageObjective o;
  o.stage = stage;
  o.reduction = parse_reduction(j.at("reduction").get<std::string>());
  const json& w = j.at("weights");
  o.weights = {w.at("background").get<double>(), w.at("rain").get<double>(),
               w.at("reconstruction").get<double>(), w.at("adversarial").get<double>()};
  return o;
}

// Gradient tensor of weight * quadratic_loss(pred, target) w.r.t. pred.
Tensor quadratic_grad(const Tensor& pred, const Tensor& target, Reduction reduction, double weight) {
  if (weight == 0.0) return {};
  auto g = quadratic_loss_grad<float>(pred.data(), target.data(), static_cast<std::size_t>(pred.n()), reduction);
  Tensor out(pred.shape());
  for (std::size_t i = 0; i < g.size(); ++i) out.ptr()[i] = static_cast<float>(weight * g[i]);
  return out;
}

Tensor to_tensor_like(const Tensor& shape_of, const std::vector<double>& values, double scale) {
  Tensor t(shape_of.shape());
  for (std::size_t i = 0; i < values.size(); ++i) t.ptr()[i] = static_cast<float>(scale * values[i]);
  return t;
}

std::function<double()> default_clock() {
  return [] {
    using namespace std::chrono;
    return duration<double>(steady_clock::now().time_since_epoch()).count();
  };
}

void push_tail(std::vector<double>& tail, double v) {
  tail.push_back(v);
  if (tail.size() > kLossTail) tail.erase(tail.begin());
}

void write_checkpoint_files(const RunOptions& options, const Checkpoint& ckpt, bool final) {
  if (options.output_dir.empty()) return;
  const std::string stage = to_string(ckpt.stage);
  save_checkpoint(options.output_dir / (stage + "_latest.ckpt"), ckpt);
  if (final) save_checkpoint(options.output_dir / (stage + "_final.ckpt"), ckpt);
}

TrainingLog open_log(const RunOptions& options, bool append) {
  if (options.output_dir.empty()) return {};
  fs::create_directories(options.output_dir);
  return TrainingLog(options.output_dir / "train_log.jsonl", append);
}

void report(const RunOptions& options, const json& record) {
  if (options.on_iteration) options.on_iteration(record);
  if (options.progress == nullptr || options.progress_every <= 0) return;
  const auto iter = record.at("iter").get<std::int64_t>();
  if (iter % options.progress_every != 0) return;
  auto& out = *options.progress;
  out << record.at("stage").get<std::string>() << " iter " << iter << " lr "
      << record.at("lr").get<double>() << " total " << std::setprecision(6)
      << record.at("total").get<double>();
  for (const auto& [name, value] : record.at("components").items()) {
    out << " " << name << "=" << value.get<double>();
  }
  out << " (" << std::setprecision(4) << record.at("ms_per_iter").get<double>() << " ms)\n";
}

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw InvalidParameter("train config: " + what); };
  if (batch < 1) fail("batch must be >= 1");
  if (patch < 32 || patch % 32 != 0) fail("patch must be a positive multiple of 32");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must be in [0,1)");
  if (!(weight_decay >= 0.0)) fail("weight decay must be >= 0");
  if (lr_schedule.empty() || lr_schedule.front().start != 0) fail("lr schedule must start at iteration 0");
  for (std::size_t i = 0; i < lr_schedule.size(); ++i) {
    if (!(lr_schedule[i].rate > 0.0) || !std::isfinite(lr_schedule[i].rate)) fail("learning rates must be > 0");
    if (i > 0 && lr_schedule[i].start <= lr_schedule[i - 1].start) {
      fail("lr schedule breakpoints must be strictly increasing");
    }
  }
  if (max_iter < 0 || finetune_iter < 0) fail("iteration counts must be >= 0");
  if (!(finetune_lr > 0.0)) fail("fine-tune learning rate must be > 0");
  if (d_steps_per_g < 1) fail("d_steps_per_g must be >= 1");
  if (checkpoint_every < 1) fail("checkpoint_every must be >= 1");
  if (collapse_window < 1) fail("collapse window must be >= 1");
  if (pretrain_objective.stage != Stage::kPretrain || finetune_objective.stage != Stage::kFinetune) {
    fail("stage objectives are attached to the wrong stage");
  }
  pretrain_objective.validate();
  finetune_objective.validate();
}

double TrainConfig::lr_at(std::int64_t iteration) const {
  double rate = lr_schedule.front().rate;
  for (const auto& step : lr_schedule) {
    if (step.start <= iteration) rate = step.rate;
  }
  return rate;
}

json to_json(const TrainConfig& cfg) {
  json schedule = json::array();
  for (const auto& s : cfg.lr_schedule) schedule.push_back({{"start", s.start}, {"rate", s.rate}});
  return {{"batch", cfg.batch},
          {"patch", cfg.patch},
          {"optimizer", "sgd"},
          {"momentum", cfg.momentum},
          {"weight_decay", cfg.weight_decay},
          {"lr_schedule", schedule},
          {"max_iter", cfg.max_iter},
          {"finetune_iter", cfg.finetune_iter},
          {"finetune_lr", cfg.finetune_lr},
          {"d_steps_per_g", cfg.d_steps_per_g},
          {"seed", cfg.seed},
          {"checkpoint_every", cfg.checkpoint_every},
          {"pretrain_objective", objective_json(cfg.pretrain_objective)},
          {"finetune_objective", objective_json(cfg.finetune_objective)},
          {"generator_loss", to_string(cfg.generator_loss)},
          {"real_pool", cfg.real_pool == RealPool::kClean ? "clean" : "clean_and_rainy"},
          {"finetune_encoder", cfg.finetune_encoder},
          {"augment_flip", cfg.augment_flip},
          {"collapse_window", cfg.collapse_window},
          {"collapse_accuracy", cfg.collapse_accuracy}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig cfg;
  try {
    cfg.batch = j.at("batch").get<int>();
    cfg.patch = j.at("patch").get<int>();
    cfg.momentum = j.at("momentum").get<double>();
    cfg.weight_decay = j.at("weight_decay").get<double>();
    cfg.lr_schedule.clear();
    for (const auto& s : j.at("lr_schedule")) {
      cfg.lr_schedule.push_back({s.at("start").get<std::int64_t>(), s.at("rate").get<double>()});
    }
    cfg.max_iter = j.at("max_iter").get<std::int64_t>();
    cfg.finetune_iter = j.at("finetune_iter").get<std::int64_t>();
    cfg.finetune_lr = j.at("finetune_lr").get<double>();
    cfg.d_steps_per_g = j.at("d_steps_per_g").get<int>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.checkpoint_every = j.at("checkpoint_every").get<std::int64_t>();
    cfg.pretrain_objective = objective_from_json(j.at("pretrain_objective"), Stage::kPretrain);
    cfg.finetune_objective = objective_from_json(j.at("finetune_objective"), Stage::kFinetune);
    cfg.generator_loss = parse_generator_loss(j.at("generator_loss").get<std::string>());
    cfg.real_pool = j.at("real_pool").get<std::string>() == "clean" ? RealPool::kClean
                                                                    : RealPool::kCleanAndRainy;
    cfg.finetune_encoder = j.at("finetune_encoder").get<bool>();
    cfg.augment_flip = j.at("augment_flip").get<bool>();
    cfg.collapse_window = j.at("collapse_window").get<std::int64_t>();
    cfg.collapse_accuracy = j.at("collapse_accuracy").get<double>();
  } catch (const json::exception& e) {
    throw InvalidParameter(std::string("malformed train config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

std::uint64_t config_hash(const TrainConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : to_json(cfg).dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void save_checkpoint(const fs::path& path, const Checkpoint& ckpt) {
  Archive archive = weights_archive(ckpt.network, ckpt.weights);
  archive.metadata["trainer"] = {{"stage", to_string(ckpt.stage)},
                                 {"iteration", ckpt.iteration},
                                 {"rng", {{"seed", ckpt.seed}, {"scheme", "splitmix(seed, stage, iteration)"}}},
                                 {"train_config_hash", ckpt.train_config_hash},
                                 {"loss_tail", ckpt.loss_tail},
                                 {"warnings", ckpt.warnings}};
  for (const auto& [name, t] : ckpt.momentum) archive.tensors.emplace("momentum/" + name, t);
  write_archive(path, archive);
}

Checkpoint load_checkpoint(const fs::path& path) {
  const Archive archive = read_archive(path);
  LoadedModel model = model_from_archive(archive);
  Checkpoint ckpt;
  ckpt.network = model.config;
  ckpt.weights = std::move(model.weights);
  if (archive.metadata.contains("trainer")) {
    const json& t = archive.metadata.at("trainer");
    try {
      ckpt.stage = t.at("stage").get<std::string>() == "finetune" ? Stage::kFinetune : Stage::kPretrain;
      ckpt.iteration = t.at("iteration").get<std::int64_t>();
      ckpt.seed = t.at("rng").at("seed").get<std::uint64_t>();
      ckpt.train_config_hash = t.at("train_config_hash").get<std::uint64_t>();
      ckpt.loss_tail = t.at("loss_tail").get<std::vector<double>>();
      ckpt.warnings = t.at("warnings").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
      throw DecodeError("malformed trainer state in " + path.string() + ": " + e.what());
    }
  }
  const std::string prefix = "momentum/";
  for (const auto& [name, t] : archive.tensors) {
    if (name.starts_with(prefix)) ckpt.momentum.set(name.substr(prefix.size()), t);
  }
  return ckpt;
}

void sgd_step(Weights& weights, const Gradients& grads, ParameterSet& velocity, double lr,
              double momentum, double weight_decay) {
  const auto mu = static_cast<float>(momentum);
  const auto rate = static_cast<float>(lr);
  for (const auto& [name, g] : grads) {
    Tensor& w = weights[name];
    if (!(w.shape() == g.shape())) throw ShapeMismatch("gradient shape mismatch for '" + name + "'");
    Tensor& v = velocity[name];
    if (v.empty()) v = Tensor(w.shape());
    const float decay = is_bias(name) ? 0.0f : static_cast<float>(weight_decay);
    float* wp = w.ptr();
    float* vp = v.ptr();
    const float* gp = g.ptr();
    for (std::size_t i = 0; i < w.size(); ++i) {
      vp[i] = mu * vp[i] - rate * (gp[i] + decay * wp[i]);
      wp[i] += vp[i];
    }
  }
}

TrainingLog::TrainingLog(const fs::path& path, bool append)
    : path_(path), out_(path, append ? std::ios::app : std::ios::trunc) {
  if (!out_) throw IoError("cannot open training log " + path.string());
}

void TrainingLog::write_header(const json& header) {
  if (!out_.is_open()) return;
  out_ << json{{"header", header}}.dump() << '\n';
  if (!out_) throw IoError("failed writing training log " + path_.string());
}

json TrainingLog::log_iteration(std::int64_t iteration, Stage stage, const LossValue& loss, double lr,
                                double ms_per_iter, const json& extra) {
  json record{{"iter", iteration},
              {"stage", to_string(stage)},
              {"lr", lr},
              {"components", loss.components},
              {"weights", loss.weights},
              {"total", loss.total},
              {"ms_per_iter", ms_per_iter}};
  for (const auto& [k, v] : extra.items()) record[k] = v;
  if (out_.is_open()) {
    out_ << record.dump() << '\n';
    if (!out_) throw IoError("failed writing training log " + path_.string() + " (disk full?)");
  }
  return record;
}

void TrainingLog::flush() {
  if (!out_.is_open()) return;
  out_.flush();
  if (!out_) throw IoError("failed flushing training log " + path_.string());
}

Checkpoint pretrain(const Manifest& paired, const TrainConfig& cfg, const NetworkConfig& net_cfg,
                    const RunOptions& options) {
  cfg.validate();
  net_cfg.validate();
  if (paired.empty()) throw InvalidParameter("pretraining needs a non-empty paired manifest");
  if (paired.kind != DatasetKind::kPairedTriplets) throw InvalidParameter("pretraining needs a paired manifest");

  Checkpoint state;
  if (options.resume) {
    state = *options.resume;
    if (state.stage != Stage::kPretrain) throw InvalidParameter("cannot resume pretraining from a fine-tune checkpoint");
    if (!(state.network == net_cfg)) throw ConfigMismatch("resume checkpoint has a different network config");
    if (state.train_config_hash != config_hash(cfg) && options.progress != nullptr) {
      *options.progress << "warning: resuming with a training config that differs from the checkpoint's\n";
    }
  } else {
    state.network = net_cfg;
    state.weights = init_weights(net_cfg, derive_seed(cfg.seed, 0x696e6974));
  }
  state.stage = Stage::kPretrain;
  state.seed = cfg.seed;
  state.train_config_hash = config_hash(cfg);

  const auto clock = options.clock ? options.clock : default_clock();
  TrainingLog log = open_log(options, options.resume.has_value());
  log.write_header({{"stage", "pretrain"},
                    {"train_config", to_json(cfg)},
                    {"network_config", json::parse(to_json_string(net_cfg))},
                    {"parameter_count", parameter_count(net_cfg)},
                    {"start_iteration", state.iteration}});
  ImageCache cache(options.image_cache_bytes);
  const StageObjective& objective = cfg.pretrain_objective;
  const auto& lw = objective.weights;

  for (std::int64_t it = state.iteration; it < cfg.max_iter; ++it) {
    const double t0 = clock();
    const double lr = cfg.lr_at(it);
    const Batch batch = sample_batch(paired, cfg.batch, cfg.patch, batch_seed(cfg.seed, Stage::kPretrain, it, 0),
                                     {cfg.augment_flip}, &cache);
    ForwardTrace trace;
    const ForwardResult out = forward_full(batch.rainy, state.weights, net_cfg, &trace);
    const auto n = static_cast<std::size_t>(batch.size);
    LossComponents components;
    components.background = loss_background<float>(out.background.data(), batch.background.data(), n, objective.reduction);
    components.rain = loss_rain<float>(out.rain.data(), batch.rain.data(), n, objective.reduction);
    components.reconstruction = loss_reconstruction<float>(out.rainy.data(), batch.rainy.data(), n, objective.reduction);
    const LossValue loss = stage_total(objective, components);
    if (!std::isfinite(loss.total)) {
      log.flush();
      throw NonFiniteLoss("non-finite pretraining loss at iteration " + std::to_string(it));
    }

    Gradients grads;
    decomposition_backward(trace, quadratic_grad(out.background, batch.background, objective.reduction, lw.background),
                           quadratic_grad(out.rain, batch.rain, objective.reduction, lw.rain),
                           quadratic_grad(out.rainy, batch.rainy, objective.reduction, lw.reconstruction),
                           state.weights, net_cfg, grads);
    sgd_step(state.weights, grads, state.momentum, lr, cfg.momentum, cfg.weight_decay);
    if (!state.weights.all_finite()) {
      log.flush();
      throw NonFiniteLoss("non-finite weights after iteration " + std::to_string(it));
    }

    state.iteration = it + 1;
    push_tail(state.loss_tail, loss.total);
    const json record = log.log_iteration(it, Stage::kPretrain, loss, lr, 1000.0 * (clock() - t0));
    report(options, record);
    if (state.iteration % cfg.checkpoint_every == 0 && state.iteration < cfg.max_iter) {
      log.flush();
      write_checkpoint_files(options, state, false);
    }
  }
  log.flush();
  write_checkpoint_files(options, state, true);
  return state;
}

Checkpoint finetune(const Checkpoint& pretrained, const Manifest& real_rainy, const Manifest& real_clean,
                    const TrainConfig& cfg, const RunOptions& options) {
  cfg.validate();
  if (real_rainy.empty() || real_clean.empty()) {
    throw InvalidParameter("fine-tuning needs non-empty real-rainy and real-clean manifests");
  }
  if (real_rainy.kind != DatasetKind::kRealRainy) throw InvalidParameter("first manifest must be real-rainy");
  if (real_clean.kind != DatasetKind::kRealClean) throw InvalidParameter("second manifest must be real-clean");

  Checkpoint state = options.resume ? *options.resume : pretrained;
  const NetworkConfig& net_cfg = state.network;
  net_cfg.validate();
  check_weights(state.weights, net_cfg);
  if (cfg.patch != net_cfg.patch) {
    throw InvalidParameter("fine-tune patch (" + std::to_string(cfg.patch) +
                           ") must equal the discriminator input size (" + std::to_string(net_cfg.patch) + ")");
  }
  if (state.stage == Stage::kPretrain) {
    // A fresh stage: new iteration count and optimizer state.
    state.stage = Stage::kFinetune;
    state.iteration = 0;
    state.momentum = ParameterSet();
    state.loss_tail.clear();
  }
  state.seed = cfg.seed;
  state.train_config_hash = config_hash(cfg);

  const auto clock = options.clock ? options.clock : default_clock();
  TrainingLog log = open_log(options, options.resume.has_value());
  log.write_header({{"stage", "finetune"},
                    {"train_config", to_json(cfg)},
                    {"network_config", json::parse(to_json_string(net_cfg))},
                    {"start_iteration", state.iteration}});
  ImageCache cache(options.image_cache_bytes);
  const StageObjective& objective = cfg.finetune_objective;
  const double lr = cfg.finetune_lr;
  const TrainableSet trainable{cfg.finetune_encoder, true, false, true};
  std::int64_t confident_streak = 0;
  bool collapse_reported = false;

  auto sample_real = [&](std::uint64_t seed) {
    if (cfg.real_pool == RealPool::kClean || cfg.batch < 2) {
      return sample_batch(real_clean, cfg.batch, cfg.patch, seed, {cfg.augment_flip}, &cache).background;
    }
    const int clean_n = cfg.batch - cfg.batch / 2;
    Tensor clean = sample_batch(real_clean, clean_n, cfg.patch, seed, {cfg.augment_flip}, &cache).background;
    Tensor rainy = sample_batch(real_rainy, cfg.batch - clean_n, cfg.patch, derive_seed(seed, 1),
                                {cfg.augment_flip}, &cache).rainy;
    Tensor both(cfg.batch, clean.c(), clean.h(), clean.w());
    std::copy(clean.ptr(), clean.ptr() + clean.size(), both.ptr());
    std::copy(rainy.ptr(), rainy.ptr() + rainy.size(), both.ptr() + clean.size());
    return both;
  };

  for (std::int64_t it = state.iteration; it < cfg.finetune_iter; ++it) {
    const double t0 = clock();
    double d_loss = 0.0;
    double d_accuracy = 0.0;

    for (int k = 0; k < cfg.d_steps_per_g; ++k) {
      const std::uint64_t seed = batch_seed(cfg.seed, Stage::kFinetune, it, kDiscriminatorStream + k);
      const Tensor real = sample_real(seed);
      const Tensor rainy = sample_batch(real_rainy, cfg.batch, cfg.patch, derive_seed(seed, 2),
                                        {cfg.augment_flip}, &cache).rainy;
      const Tensor fake = derain(rainy, state.weights, net_cfg);
      DiscriminatorTrace real_trace, fake_trace;
      const Tensor d_real = discriminate(real, state.weights, net_cfg, &real_trace);
      const Tensor d_fake = discriminate(fake, state.weights, net_cfg, &fake_trace);
      d_loss = loss_adversarial_d<float>(d_real.data(), d_fake.data());
      if (!std::isfinite(d_loss)) {
        log.flush();
        throw NonFiniteLoss("non-finite discriminator loss at fine-tune iteration " + std::to_string(it));
      }
      std::size_t correct = 0;
      for (float p : d_real.data()) correct += p > 0.5f;
      for (float p : d_fake.data()) correct += p < 0.5f;
      d_accuracy = static_cast<double>(correct) / static_cast<double>(d_real.size() + d_fake.size());

      const AdversarialGrad g = loss_adversarial_d_grad_logits<float>(d_real.data(), d_fake.data());
      Gradients d_grads;
      discriminate_backward(real_trace, to_tensor_like(d_real, g.real, 1.0), state.weights, net_cfg, &d_grads, true);
      discriminate_backward(fake_trace, to_tensor_like(d_fake, g.fake, 1.0), state.weights, net_cfg, &d_grads, true);
      sgd_step(state.weights, d_grads, state.momentum, lr, cfg.momentum, cfg.weight_decay);
    }

    // Generator step: G(O) is the background branch.
    const Tensor rainy = sample_batch(real_rainy, cfg.batch, cfg.patch,
                                      batch_seed(cfg.seed, Stage::kFinetune, it, kGeneratorStream),
                                      {cfg.augment_flip}, &cache).rainy;
    ForwardTrace trace;
    const ForwardResult out = forward_full(rainy, state.weights, net_cfg, &trace);
    DiscriminatorTrace g_trace;
    const Tensor d_fake = discriminate(out.background, state.weights, net_cfg, &g_trace);
    LossComponents components;
    components.adversarial = loss_adversarial_g<float>(d_fake.data(), cfg.generator_loss);
    components.reconstruction = loss_reconstruction<float>(out.rainy.data(), rainy.data(),
                                                           static_cast<std::size_t>(rainy.n()), objective.reduction);
    const LossValue loss = stage_total(objective, components);
    if (!std::isfinite(loss.total)) {
      log.flush();
      throw NonFiniteLoss("non-finite fine-tune loss at iteration " + std::to_string(it));
    }

    Tensor d_background;
    if (objective.weights.adversarial != 0.0) {
      const auto g = loss_adversarial_g_grad_logits<float>(d_fake.data(), cfg.generator_loss);
      d_background = discriminate_backward(g_trace, to_tensor_like(d_fake, g, objective.weights.adversarial),
                                           state.weights, net_cfg, nullptr, true);
    }
    Gradients grads;
    decomposition_backward(trace, d_background, Tensor(),
                           quadratic_grad(out.rainy, rainy, objective.reduction, objective.weights.reconstruction),
                           state.weights, net_cfg, grads, trainable);
    sgd_step(state.weights, grads, state.momentum, lr, cfg.momentum, cfg.weight_decay);
    if (!state.weights.all_finite()) {
      log.flush();
      throw NonFiniteLoss("non-finite weights after fine-tune iteration " + std::to_string(it));
    }

    confident_streak = d_accuracy > cfg.collapse_accuracy ? confident_streak + 1 : 0;
    if (confident_streak >= cfg.collapse_window && !collapse_reported) {
      const std::string warning = "possible mode collapse: discriminator accuracy above " +
                                  std::to_string(cfg.collapse_accuracy) + " for " +
                                  std::to_string(confident_streak) + " iterations (at iteration " +
                                  std::to_string(it) + ")";
      state.warnings.push_back(warning);
      if (options.progress != nullptr) *options.progress << "warning: " << warning << "\n";
      collapse_reported = true;
    }

    state.iteration = it + 1;
    push_tail(state.loss_tail, loss.total);
    const json record = log.log_iteration(it, Stage::kFinetune, loss, lr, 1000.0 * (clock() - t0),
                                          {{"discriminator_loss", d_loss}, {"discriminator_accuracy", d_accuracy}});
    report(options, record);
    if (state.iteration % cfg.checkpoint_every == 0 && state.iteration < cfg.finetune_iter) {
      log.flush();
      write_checkpoint_files(options, state, false);
    }
  }
  log.flush();
  write_checkpoint_files(options, state, true);
  return state;
}

}  // namespace ddc
