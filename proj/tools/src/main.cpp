// ddcnet: synth / train / finetune / derain / eval / bench.
//
// Exit codes: 0 success, 1 user error (bad flags, config, inputs), 2 internal
// abort (non-finite training loss, unexpected failure).

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>

#include "ddcnet/checkpoint.hpp"
#include "ddcnet/datastore.hpp"
#include "ddcnet/errors.hpp"
#include "ddcnet/image_io.hpp"
#include "ddcnet/metrics.hpp"
#include "ddcnet/rng.hpp"
#include "ddcnet/trainer.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;
using namespace ddc;
using ddc::cli::RunConfig;

namespace {

constexpr std::size_t kSynthChunk = 256;
constexpr const char* kDerainedSuffix = "_derained";

std::vector<Image> load_backgrounds(const RunConfig& cfg) {
  std::vector<Image> images;
  if (!cfg.backgrounds.empty()) {
    const Manifest m = build_manifest(cfg.backgrounds, DatasetKind::kRealClean);
    for (const auto& w : m.warnings) std::cerr << "warning: " << w << "\n";
    for (const auto& e : m.entries) images.push_back(load_image(m.primary_path(e)));
    if (images.empty()) throw InvalidParameter("no background images in " + cfg.backgrounds.string());
    return images;
  }
  const std::size_t scenes = std::min<std::size_t>(cfg.count, 16);
  for (std::size_t i = 0; i < scenes; ++i) {
    images.push_back(procedural_background(cfg.procedural_size, cfg.procedural_size,
                                           derive_seed(cfg.seed, 0x6267 + i)));
  }
  return images;
}

int cmd_synth(const RunConfig& cfg) {
  if (fs::exists(cfg.out / kManifestFileName)) {
    throw InvalidParameter(cfg.out.string() + " already holds a dataset; choose an empty --out");
  }
  const std::vector<Image> backgrounds = load_backgrounds(cfg);
  SynthesisOptions opt = cfg.synth;
  opt.seed = cfg.seed;
  std::vector<Triplet> chunk;
  for (std::size_t first = 0; first < cfg.count; first += kSynthChunk) {
    const std::size_t n = std::min(kSynthChunk, cfg.count - first);
    chunk.clear();
    for (std::size_t i = 0; i < n; ++i) chunk.push_back(synthesize_triplet(backgrounds, first + i, opt));
    write_triplets(cfg.out, chunk, first);
  }
  std::cout << "synth: " << cfg.count << " triplets, mode " << to_string(opt.mode) << ", seed "
            << cfg.seed << ", " << backgrounds.size() << " backgrounds -> " << cfg.out.string()
            << "\n";
  return 0;
}

Manifest paired_manifest(const fs::path& root) {
  if (root.empty()) throw InvalidParameter("--paired is required");
  const fs::path file = root / kManifestFileName;
  Manifest m = fs::exists(file) ? load_manifest(file) : build_manifest(root, DatasetKind::kPairedTriplets);
  m.root = root;
  return m;
}

RunOptions run_options(const RunConfig& cfg) {
  RunOptions o;
  o.output_dir = cfg.out;
  o.progress = &std::cout;
  if (!cfg.resume.empty()) o.resume = load_checkpoint(cfg.resume);
  return o;
}

int cmd_train(RunConfig cfg) {
  cfg.train.seed = cfg.seed;
  const Manifest paired = paired_manifest(cfg.paired);
  const Checkpoint c = pretrain(paired, cfg.train, cfg.network, run_options(cfg));
  std::cout << "train: finished at iteration " << c.iteration << "; checkpoints in "
            << cfg.out.string() << "\n";
  return 0;
}

int cmd_finetune(RunConfig cfg) {
  cfg.train.seed = cfg.seed;
  if (cfg.checkpoint.empty() && cfg.resume.empty()) {
    throw InvalidParameter("--checkpoint (pre-trained model) or --resume is required");
  }
  if (cfg.real_rainy.empty() || cfg.real_clean.empty()) {
    throw InvalidParameter("--real-rainy and --real-clean are required");
  }
  const Manifest rainy = build_manifest(cfg.real_rainy, DatasetKind::kRealRainy);
  const Manifest clean = build_manifest(cfg.real_clean, DatasetKind::kRealClean);
  for (const auto* m : {&rainy, &clean}) {
    for (const auto& w : m->warnings) std::cerr << "warning: " << w << "\n";
  }
  RunOptions o = run_options(cfg);
  Checkpoint start;
  if (!cfg.checkpoint.empty()) {
    start = load_checkpoint(cfg.checkpoint);
  } else {
    start = *o.resume;
  }
  const Checkpoint c = finetune(start, rainy, clean, cfg.train, o);
  for (const auto& w : c.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "finetune: finished at iteration " << c.iteration << "; checkpoints in "
            << cfg.out.string() << "\n";
  return 0;
}

LoadedModel require_model(const RunConfig& cfg) {
  if (cfg.checkpoint.empty()) throw InvalidParameter("--checkpoint is required");
  return load_model(cfg.checkpoint);
}

int cmd_derain(const RunConfig& cfg, const fs::path& input) {
  const LoadedModel model = require_model(cfg);
  std::vector<std::pair<std::string, fs::path>> jobs;  // (name, file), sorted by name
  if (fs::is_directory(input)) {
    const Manifest m = build_manifest(input, DatasetKind::kRealRainy);
    for (const auto& e : m.entries) jobs.emplace_back(e.id, m.primary_path(e));
  } else if (fs::exists(input)) {
    jobs.emplace_back(input.stem().string(), input);
  } else {
    throw MissingFile("input " + input.string() + " not found");
  }
  for (const auto& [name, file] : jobs) {
    const Image rainy = load_image(file);
    const auto t0 = std::chrono::steady_clock::now();
    const Image clean = derain(rainy, model.weights, model.config);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const fs::path out = cfg.out / (name + kDerainedSuffix + ".png");
    save_png(out, clean);
    std::cout << name << " " << rainy.width() << "x" << rainy.height() << " " << std::fixed
              << std::setprecision(3) << seconds << " s -> " << out.string() << "\n";
  }
  return 0;
}

// Images directly under `dir`, keyed by file stem with the derain suffix removed.
std::map<std::string, Image> load_results(const fs::path& dir) {
  const Manifest m = build_manifest(dir, DatasetKind::kRealClean);
  std::map<std::string, Image> images;
  for (const auto& e : m.entries) {
    std::string id = e.id;
    if (id.ends_with(kDerainedSuffix)) id.resize(id.size() - std::string_view(kDerainedSuffix).size());
    if (!images.emplace(id, load_image(m.primary_path(e))).second) {
      throw DuplicateId("results contain '" + id + "' twice");
    }
  }
  return images;
}

int cmd_eval(const RunConfig& cfg) {
  if (cfg.results.empty() || cfg.truths.empty()) throw InvalidParameter("--results and --truths are required");
  const Manifest truth_manifest = build_manifest(cfg.truths, DatasetKind::kRealClean);
  std::map<std::string, Image> truths;
  for (const auto& e : truth_manifest.entries) truths.emplace(e.id, load_image(truth_manifest.primary_path(e)));
  const EvalReport report = evaluate_images(load_results(cfg.results), truths);
  std::cout << format_table(report);
  fs::create_directories(cfg.out);
  std::ofstream(cfg.out / "eval_report.json") << to_json(report).dump(2) << "\n";
  return 0;
}

int cmd_bench(const RunConfig& cfg, const std::string& device) {
  NetworkConfig net = cfg.network;
  Weights weights;
  std::string model = "untrained (seeded init)";
  if (!cfg.checkpoint.empty()) {
    LoadedModel m = load_model(cfg.checkpoint);
    net = m.config;
    weights = std::move(m.weights);
    model = cfg.checkpoint.string();
  } else {
    weights = init_weights(net, derive_seed(cfg.seed, 0x696e6974));
  }
  // Reference GPU timings reported for the original model, printed for context only.
  const std::map<int, double> reference_gpu{{250, 0.03}, {500, 0.12}};
  const std::map<int, double> reference_cpu{{250, 0.98}, {500, 4.04}};
  nlohmann::json records = nlohmann::json::array();
  std::cout << "bench: model " << model << ", device " << device << "\n";
  for (int size : cfg.bench_sizes) {
    const TimingRecord t = bench_inference(weights, net, size, size, cfg.bench_warmup, cfg.bench_runs, cfg.seed);
    std::cout << size << "x" << size << ": median " << std::fixed << std::setprecision(4)
              << t.median_seconds << " s, mean " << t.mean_seconds << " s over " << t.measured_runs
              << " runs [" << t.device_label << "]";
    if (reference_gpu.count(size) != 0) {
      std::cout << " (reference: " << std::setprecision(2) << reference_cpu.at(size) << " s CPU, "
                << reference_gpu.at(size) << " s GPU; not comparable hardware)";
    }
    std::cout << "\n";
    records.push_back(to_json(t));
  }
  fs::create_directories(cfg.out);
  std::ofstream(cfg.out / "bench_report.json") << records.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ddcnet: rain-streak removal with a decomposition network"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Print help for every command");

  fs::path config_file;
  fs::path derain_input;
  std::map<std::string, std::string> given;  // key name -> flag value

  struct Command {
    const char* name;
    const char* help;
    std::vector<std::string> sections;
  };
  const std::vector<Command> commands{
      {"synth", "Synthesize a rainy/background/rain triplet dataset", {"run", "synth"}},
      {"train", "Pre-train on a synthetic triplet dataset", {"run", "data", "network", "train"}},
      {"finetune", "Adversarial fine-tune on real rainy and clean images",
       {"run", "data", "network", "train", "finetune"}},
      {"derain", "Remove rain from an image or a directory of images", {"run"}},
      {"eval", "PSNR/SSIM of derained results against ground truth", {"run", "data"}},
      {"bench", "Time inference at fixed input sizes", {"run", "network", "bench"}},
  };
  std::map<std::string, CLI::App*> subs;
  for (const auto& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", config_file, "INI config file; flags override it")->check(CLI::ExistingFile);
    for (const auto& key : cli::keys()) {
      if (std::find(c.sections.begin(), c.sections.end(), key.section) == c.sections.end()) continue;
      sub->add_option_function<std::string>(
          key.flag(), [&given, name = key.name](const std::string& v) { given[name] = v; },
          key.help + " [" + key.section + "] " + key.name);
    }
    subs[c.name] = sub;
  }
  subs["derain"]->add_option("input", derain_input, "image file or directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    RunConfig cfg;
    if (!config_file.empty()) cli::apply_config_file(cfg, config_file);
    for (const auto& key : cli::keys()) {
      auto it = given.find(key.name);
      if (it != given.end()) key.set(cfg, it->second);
    }
    cfg.validate();
    std::string note;
    const std::string device = cli::resolve_device(cfg.device, note);
    if (!note.empty()) std::cerr << "warning: " << note << "\n";

    if (subs["synth"]->parsed()) return cmd_synth(cfg);
    if (subs["train"]->parsed()) return cmd_train(cfg);
    if (subs["finetune"]->parsed()) return cmd_finetune(cfg);
    if (subs["derain"]->parsed()) return cmd_derain(cfg, derain_input);
    if (subs["eval"]->parsed()) return cmd_eval(cfg);
    if (subs["bench"]->parsed()) return cmd_bench(cfg, device);
  } catch (const NonFiniteLoss& e) {
    std::cerr << "aborted: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
