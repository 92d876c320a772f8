#include "run_config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cstdlib>
#include <set>
#include <sstream>

#include "ddcnet/errors.hpp"

namespace ddc::cli {

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* first = text.data();
  const char* last = first + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last) {
    throw InvalidParameter("'" + key + "': cannot parse '" + text + "' as a number");
  }
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw InvalidParameter("'" + key + "': expected true/false, got '" + text + "'");
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::stringstream in(text);
  std::string part;
  while (std::getline(in, part, sep)) {
    if (!part.empty()) parts.push_back(part);
  }
  return parts;
}

std::vector<int> parse_int_list(const std::string& key, const std::string& text) {
  std::vector<int> out;
  for (const auto& p : split(text, ',')) out.push_back(parse_number<int>(key, p));
  if (out.empty()) throw InvalidParameter("'" + key + "': empty list");
  return out;
}

template <std::size_t N>
std::array<int, N> parse_int_array(const std::string& key, const std::string& text) {
  const auto v = parse_int_list(key, text);
  if (v.size() != N) {
    throw InvalidParameter("'" + key + "': expected " + std::to_string(N) + " values, got " +
                           std::to_string(v.size()));
  }
  std::array<int, N> out{};
  std::copy(v.begin(), v.end(), out.begin());
  return out;
}

template <typename Range>
std::string join(const Range& values) {
  std::string s;
  for (const auto& v : values) {
    if (!s.empty()) s += ",";
    s += std::to_string(v);
  }
  return s;
}

std::string fmt(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

// "0:1e-3,70000:1e-4"
std::vector<LrStep> parse_schedule(const std::string& key, const std::string& text) {
  std::vector<LrStep> steps;
  for (const auto& item : split(text, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) {
      throw InvalidParameter("'" + key + "': expected start:rate pairs, got '" + item + "'");
    }
    steps.push_back({parse_number<std::int64_t>(key, item.substr(0, colon)),
                     parse_number<double>(key, item.substr(colon + 1))});
  }
  return steps;
}

std::string format_schedule(const std::vector<LrStep>& steps) {
  std::string s;
  for (const auto& step : steps) {
    if (!s.empty()) s += ",";
    s += std::to_string(step.start) + ":" + fmt(step.rate);
  }
  return s;
}

DilationPlacement parse_placement(const std::string& key, const std::string& text) {
  if (text == "first_module_both_convs") return DilationPlacement::kFirstModuleBothConvs;
  if (text == "first_conv_of_modules_0_1") return DilationPlacement::kFirstConvOfModules01;
  throw InvalidParameter("'" + key + "': unknown placement '" + text + "'");
}

const char* placement_name(DilationPlacement p) {
  return p == DilationPlacement::kFirstModuleBothConvs ? "first_module_both_convs" : "first_conv_of_modules_0_1";
}

RealPool parse_pool(const std::string& key, const std::string& text) {
  if (text == "clean") return RealPool::kClean;
  if (text == "clean_and_rainy") return RealPool::kCleanAndRainy;
  throw InvalidParameter("'" + key + "': unknown real pool '" + text + "'");
}

// Builders for the key table.
using Setter = std::function<void(RunConfig&, const std::string&)>;
using Getter = std::function<std::string(const RunConfig&)>;

template <typename T, typename Field>
Key number(std::string section, std::string name, std::string help, Field field) {
  const std::string key = name;
  return {std::move(section), std::move(name), std::move(help),
          [field, key](RunConfig& c, const std::string& v) { field(c) = parse_number<T>(key, v); },
          [field](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<T>) {
              return fmt(field(const_cast<RunConfig&>(c)));
            } else {
              return std::to_string(field(const_cast<RunConfig&>(c)));
            }
          }};
}

template <typename Field>
Key boolean(std::string section, std::string name, std::string help, Field field) {
  const std::string key = name;
  return {std::move(section), std::move(name), std::move(help),
          [field, key](RunConfig& c, const std::string& v) { field(c) = parse_bool(key, v); },
          [field](const RunConfig& c) {
            return std::string(field(const_cast<RunConfig&>(c)) ? "true" : "false");
          }};
}

template <typename Field>
Key path(std::string section, std::string name, std::string help, Field field) {
  return {std::move(section), std::move(name), std::move(help),
          [field](RunConfig& c, const std::string& v) { field(c) = v; },
          [field](const RunConfig& c) { return field(const_cast<RunConfig&>(c)).string(); }};
}

std::vector<Key> build_keys() {
  std::vector<Key> k;
  // [run]
  k.push_back(number<std::uint64_t>("run", "seed", "master seed for every random choice",
                                    [](RunConfig& c) -> auto& { return c.seed; }));
  k.push_back({"run", "device", "compute device (cpu); falls back to $DDCNET_DEVICE, then cpu",
               [](RunConfig& c, const std::string& v) { c.device = v; },
               [](const RunConfig& c) { return c.device; }});
  k.push_back(path("run", "out", "output directory", [](RunConfig& c) -> auto& { return c.out; }));
  k.push_back(path("run", "checkpoint", "model checkpoint or weight file",
                   [](RunConfig& c) -> auto& { return c.checkpoint; }));
  k.push_back(path("run", "resume", "training checkpoint to resume from",
                   [](RunConfig& c) -> auto& { return c.resume; }));

  // [data]
  k.push_back(path("data", "paired", "synthetic triplet dataset directory",
                   [](RunConfig& c) -> auto& { return c.paired; }));
  k.push_back(path("data", "real_rainy", "real rainy image directory",
                   [](RunConfig& c) -> auto& { return c.real_rainy; }));
  k.push_back(path("data", "real_clean", "real clean image directory",
                   [](RunConfig& c) -> auto& { return c.real_clean; }));
  k.push_back(path("data", "results", "derained images to evaluate",
                   [](RunConfig& c) -> auto& { return c.results; }));
  k.push_back(path("data", "truths", "ground-truth images (or a triplet dataset)",
                   [](RunConfig& c) -> auto& { return c.truths; }));

  // [synth]
  k.push_back(number<std::size_t>("synth", "count", "number of triplets",
                                  [](RunConfig& c) -> auto& { return c.count; }));
  k.push_back({"synth", "mode", "blend mode: screen or additive",
               [](RunConfig& c, const std::string& v) { c.synth.mode = parse_blend_mode(v); },
               [](const RunConfig& c) { return std::string(to_string(c.synth.mode)); }});
  k.push_back(number<int>("synth", "crop", "triplet size in pixels",
                          [](RunConfig& c) -> auto& { return c.synth.crop; }));
  k.push_back(boolean("synth", "quantize", "snap layers to k/255 before blending",
                      [](RunConfig& c) -> auto& { return c.synth.quantize; }));
  k.push_back(path("synth", "backgrounds", "clean photo directory (procedural scenes when empty)",
                   [](RunConfig& c) -> auto& { return c.backgrounds; }));
  k.push_back(number<int>("synth", "procedural_size", "size of generated scenes",
                          [](RunConfig& c) -> auto& { return c.procedural_size; }));
  k.push_back(number<double>("synth", "density_min", "streak seed density, lower bound",
                             [](RunConfig& c) -> auto& { return c.synth.ranges.density_min; }));
  k.push_back(number<double>("synth", "density_max", "streak seed density, upper bound",
                             [](RunConfig& c) -> auto& { return c.synth.ranges.density_max; }));
  k.push_back(number<int>("synth", "length_min", "streak length, lower bound",
                          [](RunConfig& c) -> auto& { return c.synth.ranges.length_min; }));
  k.push_back(number<int>("synth", "length_max", "streak length, upper bound",
                          [](RunConfig& c) -> auto& { return c.synth.ranges.length_max; }));
  k.push_back(number<double>("synth", "angle_min", "streak angle from vertical, lower bound",
                             [](RunConfig& c) -> auto& { return c.synth.ranges.angle_min; }));
  k.push_back(number<double>("synth", "angle_max", "streak angle from vertical, upper bound",
                             [](RunConfig& c) -> auto& { return c.synth.ranges.angle_max; }));
  k.push_back(number<double>("synth", "intensity_min", "streak brightness, lower bound",
                             [](RunConfig& c) -> auto& { return c.synth.ranges.intensity_min; }));
  k.push_back(number<double>("synth", "intensity_max", "streak brightness, upper bound",
                             [](RunConfig& c) -> auto& { return c.synth.ranges.intensity_max; }));
  k.push_back(number<int>("synth", "overlays_min", "rain layers per image, lower bound",
                          [](RunConfig& c) -> auto& { return c.synth.ranges.overlays_min; }));
  k.push_back(number<int>("synth", "overlays_max", "rain layers per image, upper bound",
                          [](RunConfig& c) -> auto& { return c.synth.ranges.overlays_max; }));

  // [network]
  k.push_back({"network", "encoder_channels", "five encoder widths",
               [](RunConfig& c, const std::string& v) {
                 c.network.encoder_channels = parse_int_array<5>("encoder_channels", v);
               },
               [](const RunConfig& c) { return join(c.network.encoder_channels); }});
  k.push_back(number<int>("network", "dilation_rate", "dilation of the first encoder convs",
                          [](RunConfig& c) -> auto& { return c.network.dilation_rate; }));
  k.push_back({"network", "dilation_placement", "first_module_both_convs or first_conv_of_modules_0_1",
               [](RunConfig& c, const std::string& v) {
                 c.network.dilation_placement = parse_placement("dilation_placement", v);
               },
               [](const RunConfig& c) { return std::string(placement_name(c.network.dilation_placement)); }});
  k.push_back(number<float>("network", "leaky_slope", "discriminator LeakyReLU slope",
                            [](RunConfig& c) -> auto& { return c.network.leaky_slope; }));
  k.push_back({"network", "composition_channels", "hidden widths of the composition block",
               [](RunConfig& c, const std::string& v) {
                 c.network.composition_channels = parse_int_list("composition_channels", v);
               },
               [](const RunConfig& c) { return join(c.network.composition_channels); }});
  k.push_back({"network", "discriminator_channels", "widths of the first four discriminator convs",
               [](RunConfig& c, const std::string& v) {
                 c.network.discriminator_channels = parse_int_array<4>("discriminator_channels", v);
               },
               [](const RunConfig& c) { return join(c.network.discriminator_channels); }});

  // [train]
  k.push_back({"train", "patch", "training crop size (also the discriminator input)",
               [](RunConfig& c, const std::string& v) {
                 c.train.patch = c.network.patch = parse_number<int>("patch", v);
               },
               [](const RunConfig& c) { return std::to_string(c.train.patch); }});
  k.push_back(number<int>("train", "batch", "mini-batch size",
                          [](RunConfig& c) -> auto& { return c.train.batch; }));
  k.push_back(number<double>("train", "momentum", "SGD momentum",
                             [](RunConfig& c) -> auto& { return c.train.momentum; }));
  k.push_back(number<double>("train", "weight_decay", "L2 weight decay (weights only)",
                             [](RunConfig& c) -> auto& { return c.train.weight_decay; }));
  k.push_back({"train", "lr_schedule", "pre-training learning rates as start:rate,...",
               [](RunConfig& c, const std::string& v) { c.train.lr_schedule = parse_schedule("lr_schedule", v); },
               [](const RunConfig& c) { return format_schedule(c.train.lr_schedule); }});
  k.push_back(number<std::int64_t>("train", "max_iter", "pre-training iterations",
                                   [](RunConfig& c) -> auto& { return c.train.max_iter; }));
  k.push_back(number<std::int64_t>("train", "checkpoint_every", "iterations between checkpoints",
                                   [](RunConfig& c) -> auto& { return c.train.checkpoint_every; }));
  k.push_back(boolean("train", "augment_flip", "random horizontal flips",
                      [](RunConfig& c) -> auto& { return c.train.augment_flip; }));
  k.push_back({"train", "reduction", "quadratic loss reduction: per_pixel_mean or frobenius_sum",
               [](RunConfig& c, const std::string& v) {
                 c.train.pretrain_objective.reduction = c.train.finetune_objective.reduction =
                     parse_reduction(v);
               },
               [](const RunConfig& c) { return std::string(to_string(c.train.pretrain_objective.reduction)); }});
  k.push_back(number<double>("train", "w_background", "pre-training weight of the background loss",
                             [](RunConfig& c) -> auto& { return c.train.pretrain_objective.weights.background; }));
  k.push_back(number<double>("train", "w_rain", "pre-training weight of the rain loss",
                             [](RunConfig& c) -> auto& { return c.train.pretrain_objective.weights.rain; }));
  k.push_back(number<double>("train", "w_reconstruction", "pre-training weight of the reconstruction loss",
                             [](RunConfig& c) -> auto& { return c.train.pretrain_objective.weights.reconstruction; }));

  // [finetune]
  k.push_back(number<std::int64_t>("finetune", "finetune_iter", "fine-tune iterations",
                                   [](RunConfig& c) -> auto& { return c.train.finetune_iter; }));
  k.push_back(number<double>("finetune", "finetune_lr", "fine-tune learning rate",
                             [](RunConfig& c) -> auto& { return c.train.finetune_lr; }));
  k.push_back(number<int>("finetune", "d_steps", "discriminator steps per generator step",
                          [](RunConfig& c) -> auto& { return c.train.d_steps_per_g; }));
  k.push_back(number<double>("finetune", "ft_w_adversarial", "fine-tune weight of the adversarial loss",
                             [](RunConfig& c) -> auto& { return c.train.finetune_objective.weights.adversarial; }));
  k.push_back(number<double>("finetune", "ft_w_reconstruction", "fine-tune weight of the reconstruction loss",
                             [](RunConfig& c) -> auto& { return c.train.finetune_objective.weights.reconstruction; }));
  k.push_back({"finetune", "generator_loss", "non_saturating or minimax",
               [](RunConfig& c, const std::string& v) { c.train.generator_loss = parse_generator_loss(v); },
               [](const RunConfig& c) { return std::string(to_string(c.train.generator_loss)); }});
  k.push_back({"finetune", "real_pool", "discriminator reals: clean or clean_and_rainy",
               [](RunConfig& c, const std::string& v) { c.train.real_pool = parse_pool("real_pool", v); },
               [](const RunConfig& c) {
                 return std::string(c.train.real_pool == RealPool::kClean ? "clean" : "clean_and_rainy");
               }});
  k.push_back(boolean("finetune", "finetune_encoder", "update the encoder during fine-tune",
                      [](RunConfig& c) -> auto& { return c.train.finetune_encoder; }));
  k.push_back(number<std::int64_t>("finetune", "collapse_window", "iterations of over-confident D before warning",
                                   [](RunConfig& c) -> auto& { return c.train.collapse_window; }));
  k.push_back(number<double>("finetune", "collapse_accuracy", "D accuracy treated as over-confident",
                             [](RunConfig& c) -> auto& { return c.train.collapse_accuracy; }));

  // [bench]
  k.push_back({"bench", "size", "square input sizes to time, e.g. 250,500",
               [](RunConfig& c, const std::string& v) { c.bench_sizes = parse_int_list("size", v); },
               [](const RunConfig& c) { return join(c.bench_sizes); }});
  k.push_back(number<int>("bench", "runs", "timed runs per size",
                          [](RunConfig& c) -> auto& { return c.bench_runs; }));
  k.push_back(number<int>("bench", "warmup", "untimed warm-up runs per size",
                          [](RunConfig& c) -> auto& { return c.bench_warmup; }));
  return k;
}

}  // namespace

std::string Key::flag() const {
  std::string f = "--" + name;
  std::replace(f.begin(), f.end(), '_', '-');
  return f;
}

const std::vector<Key>& keys() {
  static const std::vector<Key> table = build_keys();
  return table;
}

void RunConfig::validate() const {
  network.validate();
  train.validate();
  synth.ranges.validate();
  if (train.patch != network.patch) throw InvalidParameter("patch: network and training disagree");
  if (synth.crop <= 0) throw InvalidParameter("crop must be positive");
  if (count == 0) throw InvalidParameter("count must be positive");
  if (procedural_size < synth.crop) throw InvalidParameter("procedural_size must be >= crop");
  if (bench_runs < 1) throw InvalidParameter("runs must be >= 1");
  if (bench_warmup < 0) throw InvalidParameter("warmup must be >= 0");
  for (int s : bench_sizes) {
    if (s < 1) throw InvalidParameter("bench sizes must be positive");
  }
}

void apply_config_file(RunConfig& cfg, const std::filesystem::path& file) {
  if (!std::filesystem::exists(file)) throw MissingFile("config file " + file.string() + " not found");
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(file.string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw InvalidParameter(std::string("config file: ") + e.what());
  }
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw InvalidParameter("config file: key '" + section + "' is outside any [section]");
    }
    if (std::none_of(keys().begin(), keys().end(), [&](const Key& k) { return k.section == section; })) {
      throw InvalidParameter("config file: unknown section [" + section + "]");
    }
    for (const auto& [name, value] : body) {
      const auto& table = keys();
      auto it = std::find_if(table.begin(), table.end(),
                             [&](const Key& k) { return k.section == section && k.name == name; });
      if (it == table.end()) {
        throw InvalidParameter("config file: unknown key '" + name + "' in [" + section + "]");
      }
      it->set(cfg, value.data());
    }
  }
}

std::string to_ini(const RunConfig& cfg) {
  std::string out;
  std::string current;
  for (const auto& k : keys()) {
    if (k.section != current) {
      if (!current.empty()) out += "\n";
      out += "[" + k.section + "]\n";
      current = k.section;
    }
    out += k.name + " = " + k.get(cfg) + "\n";
  }
  return out;
}

std::string resolve_device(const std::string& requested, std::string& note) {
  std::string device = requested;
  if (device.empty()) {
    const char* env = std::getenv("DDCNET_DEVICE");
    device = env != nullptr ? env : "";
  }
  if (device.empty() || device == "cpu") return "cpu";
  note = "device '" + device + "' is not available in this build; using cpu";
  return "cpu";
}

}  // namespace ddc::cli
