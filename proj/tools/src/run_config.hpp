#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ddcnet/network.hpp"
#include "ddcnet/rainsynth.hpp"
#include "ddcnet/trainer.hpp"

namespace ddc::cli {

// Everything a command may need. Built from defaults, then the config file,
// then command-line flags.
struct RunConfig {
  NetworkConfig network;
  TrainConfig train;
  SynthesisOptions synth;
  std::size_t count = 100;
  std::filesystem::path backgrounds;  // photo directory; procedural scenes when empty
  int procedural_size = 320;

  std::filesystem::path out = ".";
  std::filesystem::path paired;       // synthetic triplet dataset
  std::filesystem::path real_rainy;
  std::filesystem::path real_clean;
  std::filesystem::path checkpoint;   // model for derain/bench/finetune
  std::filesystem::path resume;
  std::filesystem::path results;
  std::filesystem::path truths;

  std::vector<int> bench_sizes{250, 500};
  int bench_runs = 10;
  int bench_warmup = 2;

  std::string device;  // empty: $DDCNET_DEVICE, then cpu
  std::uint64_t seed = 0;

  // Cross-field checks (network/train/synthesis validity). Throws InvalidParameter.
  void validate() const;
};

// One configurable key. In a config file it appears as `key = value` under
// `[section]`; on the command line as `--key` with '_' spelled '-'.
struct Key {
  std::string section;
  std::string name;
  std::string help;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;

  std::string flag() const;
};

const std::vector<Key>& keys();

// Applies an INI file. Unknown sections or keys throw InvalidParameter.
void apply_config_file(RunConfig& cfg, const std::filesystem::path& file);

// Renders the current values in the config-file format.
std::string to_ini(const RunConfig& cfg);

// Resolves --device / DDCNET_DEVICE. Only the CPU backend exists, so any
// other request falls back with a warning in `note`.
std::string resolve_device(const std::string& requested, std::string& note);

}  // namespace ddc::cli
