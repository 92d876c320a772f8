#include "ddcnet/network.hpp"

#include <cmath>
#include <nlohmann/json.hpp>
#include <unordered_map>

#include "ddcnet/errors.hpp"
#include "ddcnet/rng.hpp"

namespace ddc {

namespace {

using nlohmann::json;

std::atomic<std::uint64_t> g_encoder_evals{0};
std::atomic<std::uint64_t> g_background_evals{0};
std::atomic<std::uint64_t> g_rain_evals{0};
std::atomic<std::uint64_t> g_composition_evals{0};
std::atomic<std::uint64_t> g_discriminator_evals{0};

constexpr int kStages = 5;

std::string module_name(int m) { return "encoder.m" + std::to_string(m); }
std::string stage_name(const char* branch, int s) {
  return std::string(branch) + ".s" + std::to_string(s);
}

// Output channels of decoder stage s (1/16 .. 1/1).
int decoder_channels(const NetworkConfig& cfg, int s) {
  static constexpr std::array<int, kStages> kLevel{3, 2, 1, 0, 0};
  return cfg.encoder_channels[kLevel[s]];
}

nn::ConvGeometry same3x3(int dilation = 1) { return {3, 1, dilation, dilation}; }

bool is_dilated(const NetworkConfig& cfg, int module, int conv) {
  switch (cfg.dilation_placement) {
    case DilationPlacement::kFirstModuleBothConvs:
      return module == 0;
    case DilationPlacement::kFirstConvOfModules01:
      return module <= 1 && conv == 1;
  }
  return false;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Name -> spec lookup, rebuilt per call; cheap next to the convolutions.
class LayerTable {
 public:
  explicit LayerTable(const NetworkConfig& cfg) {
    for (auto& spec : conv_layers(cfg)) specs_.emplace(spec.name, spec);
  }
  const ConvSpec& operator()(const std::string& name) const { return specs_.at(name); }

 private:
  std::unordered_map<std::string, ConvSpec> specs_;
};

Tensor run_conv(const Tensor& x, const Weights& w, const ConvSpec& spec) {
  return nn::conv2d(x, w.at(spec.name + ".weight"), w.at(spec.name + ".bias"), spec.geometry);
}

// Backprop through one conv. Returns dL/dx when want_input_grad.
Tensor back_conv(const Tensor& x, const Tensor& dy, const Weights& w, const ConvSpec& spec,
                 Gradients* grads, bool want_input_grad = true) {
  Tensor dx;
  Tensor* dweight = grads != nullptr ? &(*grads)[spec.name + ".weight"] : nullptr;
  Tensor* dbias = grads != nullptr ? &(*grads)[spec.name + ".bias"] : nullptr;
  if (dweight != nullptr && dweight->empty()) *dweight = Tensor(w.at(spec.name + ".weight").shape());
  if (dbias != nullptr && dbias->empty()) *dbias = Tensor(w.at(spec.name + ".bias").shape());
  nn::conv2d_backward(x, w.at(spec.name + ".weight"), dy, spec.geometry,
                      want_input_grad ? &dx : nullptr, dweight, dbias);
  return dx;
}

void accumulate(Tensor& dst, const Tensor& src) {
  if (src.empty()) return;
  if (dst.empty()) {
    dst = src;
  } else {
    dst += src;
  }
}

void add_inplace(Tensor& dst, const Tensor& src) {
  if (!(dst.shape() == src.shape())) {
    throw ShapeMismatch("skip connection " + to_string(src.shape()) + " does not match " +
                        to_string(dst.shape()));
  }
  dst += src;
}

void check_rainy_input(const Tensor& x, const NetworkConfig& cfg) {
  if (x.n() < 1) throw ShapeMismatch("empty input batch");
  if (x.c() != cfg.image_channels) {
    throw ShapeMismatch("network expects " + std::to_string(cfg.image_channels) +
                        " channels, got " + std::to_string(x.c()));
  }
  if (x.h() < 32 || x.w() < 32 || x.h() % 32 != 0 || x.w() % 32 != 0) {
    throw NonDivisibleInput("input " + std::to_string(x.h()) + "x" + std::to_string(x.w()) +
                            " is not a positive multiple of 32");
  }
}

const char* placement_name(DilationPlacement p) {
  return p == DilationPlacement::kFirstModuleBothConvs ? "first_module_both_convs"
                                                       : "first_conv_of_modules_0_1";
}

}  // namespace

void NetworkConfig::validate() const {
  auto fail = [](const std::string& what) { throw InvalidParameter("network config: " + what); };
  if (patch < 32 || patch % 32 != 0) fail("patch must be a positive multiple of 32");
  for (int c : encoder_channels)
    if (c < 1) fail("encoder channels must be positive");
  for (int c : discriminator_channels)
    if (c < 1) fail("discriminator channels must be positive");
  if (composition_channels.empty()) fail("composition block needs at least one conv");
  for (int c : composition_channels)
    if (c < 1) fail("composition channels must be positive");
  if (dilation_rate < 1) fail("dilation rate must be >= 1");
  if (!(leaky_slope >= 0.0f && leaky_slope < 1.0f)) fail("leaky slope must be in [0,1)");
  if (image_channels != 1 && image_channels != 3) fail("image channels must be 1 or 3");
}

std::string to_json_string(const NetworkConfig& cfg) {
  json j;
  j["patch"] = cfg.patch;
  j["encoder_channels"] = cfg.encoder_channels;
  j["dilation_rate"] = cfg.dilation_rate;
  j["dilation_placement"] = placement_name(cfg.dilation_placement);
  j["leaky_slope"] = cfg.leaky_slope;
  j["composition_channels"] = cfg.composition_channels;
  j["discriminator_channels"] = cfg.discriminator_channels;
  j["image_channels"] = cfg.image_channels;
  j["upsample_mode"] = "nearest+conv";
  j["head_activation"] = "sigmoid";
  return j.dump();
}

NetworkConfig network_config_from_json(const std::string& text) {
  NetworkConfig cfg;
  try {
    const json j = json::parse(text);
    cfg.patch = j.at("patch").get<int>();
    cfg.encoder_channels = j.at("encoder_channels").get<std::array<int, 5>>();
    cfg.dilation_rate = j.at("dilation_rate").get<int>();
    const auto placement = j.at("dilation_placement").get<std::string>();
    if (placement == placement_name(DilationPlacement::kFirstModuleBothConvs)) {
      cfg.dilation_placement = DilationPlacement::kFirstModuleBothConvs;
    } else if (placement == placement_name(DilationPlacement::kFirstConvOfModules01)) {
      cfg.dilation_placement = DilationPlacement::kFirstConvOfModules01;
    } else {
      throw InvalidParameter("unknown dilation placement '" + placement + "'");
    }
    cfg.leaky_slope = j.at("leaky_slope").get<float>();
    cfg.composition_channels = j.at("composition_channels").get<std::vector<int>>();
    cfg.discriminator_channels = j.at("discriminator_channels").get<std::array<int, 4>>();
    cfg.image_channels = j.at("image_channels").get<int>();
  } catch (const json::exception& e) {
    throw InvalidParameter(std::string("malformed network config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

const char* to_string(Subnet s) {
  switch (s) {
    case Subnet::kEncoder: return "encoder";
    case Subnet::kBackgroundDecoder: return "background";
    case Subnet::kRainDecoder: return "rain";
    case Subnet::kComposition: return "composition";
    case Subnet::kDiscriminator: return "discriminator";
  }
  return "?";
}

std::vector<ConvSpec> conv_layers(const NetworkConfig& cfg) {
  std::vector<ConvSpec> layers;
  const auto& enc = cfg.encoder_channels;
  for (int m = 0; m < 5; ++m) {
    const int in = m == 0 ? cfg.image_channels : enc[m - 1];
    for (int conv = 1; conv <= 2; ++conv) {
      const int dilation = is_dilated(cfg, m, conv) ? cfg.dilation_rate : 1;
      layers.push_back({module_name(m) + ".conv" + std::to_string(conv), Subnet::kEncoder,
                        conv == 1 ? in : enc[m], enc[m], same3x3(dilation)});
    }
  }
  for (int s = 0; s < kStages; ++s) {
    const int in = s == 0 ? enc[4] : decoder_channels(cfg, s - 1);
    const int out = decoder_channels(cfg, s);
    layers.push_back({stage_name("background", s) + ".conv", Subnet::kBackgroundDecoder, in, out,
                      same3x3()});
    layers.push_back({stage_name("rain", s) + ".conv", Subnet::kRainDecoder, in + out, out,
                      same3x3()});
  }
  layers.push_back({"background.head", Subnet::kBackgroundDecoder, decoder_channels(cfg, 4),
                    cfg.image_channels, same3x3()});
  layers.push_back({"rain.head", Subnet::kRainDecoder, decoder_channels(cfg, 4),
                    cfg.image_channels, same3x3()});

  int in = 2 * cfg.image_channels;
  for (std::size_t i = 0; i < cfg.composition_channels.size(); ++i) {
    layers.push_back({"composition.conv" + std::to_string(i), Subnet::kComposition, in,
                      cfg.composition_channels[i], same3x3()});
    in = cfg.composition_channels[i];
  }
  layers.push_back({"composition.head", Subnet::kComposition, in, cfg.image_channels, same3x3()});

  in = cfg.image_channels;
  for (int l = 0; l < 5; ++l) {
    const int out = l < 4 ? cfg.discriminator_channels[l] : 1;
    const int stride = l < 3 ? 2 : 1;
    layers.push_back({"discriminator.conv" + std::to_string(l + 1), Subnet::kDiscriminator, in,
                      out, nn::ConvGeometry{4, stride, 1, 1}});
    in = out;
  }
  return layers;
}

Tensor& ParameterSet::operator[](const std::string& name) { return tensors_[name]; }

const Tensor& ParameterSet::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ConfigMismatch("missing parameter '" + name + "'");
  return it->second;
}

std::size_t ParameterSet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors_) n += t.size();
  return n;
}

bool ParameterSet::all_finite() const {
  for (const auto& [name, t] : tensors_)
    if (!t.all_finite()) return false;
  return true;
}

void ParameterSet::zero() {
  for (auto& [name, t] : tensors_) t.fill(0.0f);
}

ParameterSet ParameterSet::zeros_like() const {
  ParameterSet out;
  for (const auto& [name, t] : tensors_) out.set(name, Tensor(t.shape()));
  return out;
}

Weights zero_weights(const NetworkConfig& cfg) {
  cfg.validate();
  Weights w;
  for (const auto& spec : conv_layers(cfg)) {
    const int k = spec.geometry.kernel;
    w.set(spec.name + ".weight", Tensor(spec.out_channels, spec.in_channels, k, k));
    w.set(spec.name + ".bias", Tensor(spec.out_channels, 1, 1, 1));
  }
  return w;
}

Weights init_weights(const NetworkConfig& cfg, std::uint64_t seed) {
  Weights w = zero_weights(cfg);
  for (const auto& spec : conv_layers(cfg)) {
    const bool head = spec.name.ends_with(".head") || spec.name == "discriminator.conv5";
    const double fan_in = static_cast<double>(spec.in_channels) * spec.geometry.kernel *
                          spec.geometry.kernel;
    // He-uniform for rectifier layers; sigmoid heads start near zero so the
    // outputs begin unsaturated (skip sums make decoder features large).
    const double bound = head ? 0.01 * std::sqrt(3.0 / fan_in) : std::sqrt(6.0 / fan_in);
    Rng rng(derive_seed(seed, fnv1a(spec.name)));
    for (float& v : w[spec.name + ".weight"].data()) v = static_cast<float>(rng.uniform(-bound, bound));
  }
  return w;
}

void check_weights(const Weights& w, const NetworkConfig& cfg) {
  const Weights expected = zero_weights(cfg);
  for (const auto& [name, t] : expected) {
    if (!w.contains(name)) throw ConfigMismatch("weights lack parameter '" + name + "'");
    if (!(w.at(name).shape() == t.shape())) {
      throw ConfigMismatch("parameter '" + name + "' has shape " + to_string(w.at(name).shape()) +
                           ", config expects " + to_string(t.shape()));
    }
  }
  if (w.size() != expected.size()) throw ConfigMismatch("weights carry unexpected parameters");
}

std::size_t parameter_count(const NetworkConfig& cfg) { return zero_weights(cfg).parameter_count(); }

std::size_t parameter_count(const NetworkConfig& cfg, Subnet subnet) {
  std::size_t n = 0;
  for (const auto& spec : conv_layers(cfg)) {
    if (spec.subnet != subnet) continue;
    const auto k = static_cast<std::size_t>(spec.geometry.kernel);
    n += static_cast<std::size_t>(spec.out_channels) * (spec.in_channels * k * k + 1);
  }
  return n;
}

bool is_bias(const std::string& parameter_name) { return parameter_name.ends_with(".bias"); }

Subnet subnet_of(const std::string& parameter_name) {
  const auto prefix = parameter_name.substr(0, parameter_name.find('.'));
  if (prefix == "encoder") return Subnet::kEncoder;
  if (prefix == "background") return Subnet::kBackgroundDecoder;
  if (prefix == "rain") return Subnet::kRainDecoder;
  if (prefix == "composition") return Subnet::kComposition;
  if (prefix == "discriminator") return Subnet::kDiscriminator;
  throw InvalidParameter("unknown parameter '" + parameter_name + "'");
}

EvaluationCounters evaluation_counters() {
  return {g_encoder_evals.load(), g_background_evals.load(), g_rain_evals.load(),
          g_composition_evals.load(), g_discriminator_evals.load()};
}

void reset_evaluation_counters() {
  g_encoder_evals = 0;
  g_background_evals = 0;
  g_rain_evals = 0;
  g_composition_evals = 0;
  g_discriminator_evals = 0;
}

FeaturePyramid encode(const Tensor& rainy, const Weights& w, const NetworkConfig& cfg,
                      EncoderTrace* trace) {
  check_rainy_input(rainy, cfg);
  ++g_encoder_evals;
  const LayerTable layer(cfg);
  FeaturePyramid pyramid;
  const Tensor* x = &rainy;
  for (int m = 0; m < 5; ++m) {
    Tensor h1 = run_conv(*x, w, layer(module_name(m) + ".conv1"));
    nn::relu_inplace(h1);
    Tensor h2 = run_conv(h1, w, layer(module_name(m) + ".conv2"));
    h2 += h1;  // in-module residual
    nn::relu_inplace(h2);
    std::vector<std::uint32_t> index;
    pyramid.levels[m] = nn::max_pool2x2(h2, trace != nullptr ? &index : nullptr);
    if (m == 0) pyramid.full = h2;
    if (trace != nullptr) {
      trace->input[m] = *x;
      trace->h1[m] = std::move(h1);
      trace->h2[m] = std::move(h2);
      trace->pool_index[m] = std::move(index);
    }
    x = &pyramid.levels[m];
  }
  return pyramid;
}

namespace {

void check_pyramid(const FeaturePyramid& pyramid, const NetworkConfig& cfg) {
  const Tensor& top = pyramid.levels[0];
  for (int m = 0; m < 5; ++m) {
    const Tensor& level = pyramid.levels[m];
    const int scale = 1 << m;
    if (level.c() != cfg.encoder_channels[m] || level.n() != top.n() ||
        level.h() * scale != top.h() || level.w() * scale != top.w()) {
      throw ShapeMismatch("feature pyramid level " + std::to_string(m) + " has shape " +
                          to_string(level.shape()) + ", inconsistent with level 0 " +
                          to_string(top.shape()));
    }
  }
  if (pyramid.full.shape() != Shape{top.n(), top.c(), 2 * top.h(), 2 * top.w()}) {
    throw ShapeMismatch("full-size pyramid features have shape " + to_string(pyramid.full.shape()) +
                        ", inconsistent with level 0 " + to_string(top.shape()));
  }
}

// Decoder stage s adds the encoder features at its own resolution.
const Tensor& skip_of(const FeaturePyramid& pyramid, int s) {
  return s < 4 ? pyramid.levels[3 - s] : pyramid.full;
}
Tensor& skip_of(FeaturePyramid& pyramid, int s) {
  return s < 4 ? pyramid.levels[3 - s] : pyramid.full;
}

}  // namespace

BackgroundOutput decode_background(const FeaturePyramid& pyramid, const Weights& w,
                                   const NetworkConfig& cfg, DecoderTrace* trace) {
  check_pyramid(pyramid, cfg);
  ++g_background_evals;
  const LayerTable layer(cfg);
  BackgroundOutput out;
  const Tensor* x = &pyramid.levels[4];
  for (int s = 0; s < kStages; ++s) {
    Tensor up = nn::upsample_nearest2x(*x);
    Tensor d = run_conv(up, w, layer(stage_name("background", s) + ".conv"));
    add_inplace(d, skip_of(pyramid, s));
    nn::relu_inplace(d);
    if (trace != nullptr) trace->conv_input[s] = std::move(up);
    out.features.stages[s] = std::move(d);
    x = &out.features.stages[s];
  }
  out.image = run_conv(*x, w, layer("background.head"));
  nn::sigmoid_inplace(out.image);
  if (trace != nullptr) {
    trace->output = out.features.stages;
    trace->head_output = out.image;
  }
  return out;
}

Tensor decode_rain(const FeaturePyramid& pyramid, const DecoderFeatures& background_features,
                   const Weights& w, const NetworkConfig& cfg, DecoderTrace* trace) {
  check_pyramid(pyramid, cfg);
  for (int s = 0; s < kStages; ++s) {
    const Tensor& f = background_features.stages[s];
    const int scale = 16 >> s;
    if (f.n() != pyramid.levels[0].n() || f.c() != decoder_channels(cfg, s) ||
        f.h() * scale != 2 * pyramid.levels[0].h() || f.w() * scale != 2 * pyramid.levels[0].w()) {
      throw ShapeMismatch("background feature stage " + std::to_string(s) + " has shape " +
                          to_string(f.shape()) + ", inconsistent with the pyramid");
    }
  }
  ++g_rain_evals;
  const LayerTable layer(cfg);
  Tensor x = pyramid.levels[4];
  for (int s = 0; s < kStages; ++s) {
    Tensor in = nn::concat_channels(nn::upsample_nearest2x(x), background_features.stages[s]);
    Tensor r = run_conv(in, w, layer(stage_name("rain", s) + ".conv"));
    add_inplace(r, skip_of(pyramid, s));
    nn::relu_inplace(r);
    if (trace != nullptr) {
      trace->conv_input[s] = std::move(in);
      trace->output[s] = r;
    }
    x = std::move(r);
  }
  Tensor out = run_conv(x, w, layer("rain.head"));
  nn::sigmoid_inplace(out);
  if (trace != nullptr) trace->head_output = out;
  return out;
}

Tensor compose(const Tensor& background, const Tensor& rain, const Weights& w,
               const NetworkConfig& cfg, CompositionTrace* trace) {
  if (!(background.shape() == rain.shape())) {
    throw ShapeMismatch("compose: background " + to_string(background.shape()) + " vs rain " +
                        to_string(rain.shape()));
  }
  if (background.c() != cfg.image_channels) throw ShapeMismatch("compose: wrong channel count");
  ++g_composition_evals;
  const LayerTable layer(cfg);
  if (trace != nullptr) {
    trace->inputs.clear();
    trace->outputs.clear();
  }
  Tensor x = nn::concat_channels(background, rain);
  for (std::size_t i = 0; i < cfg.composition_channels.size(); ++i) {
    Tensor h = run_conv(x, w, layer("composition.conv" + std::to_string(i)));
    nn::relu_inplace(h);
    if (trace != nullptr) {
      trace->inputs.push_back(std::move(x));
      trace->outputs.push_back(h);
    }
    x = std::move(h);
  }
  Tensor out = run_conv(x, w, layer("composition.head"));
  nn::sigmoid_inplace(out);
  if (trace != nullptr) {
    trace->inputs.push_back(std::move(x));
    trace->head_output = out;
  }
  return out;
}

std::array<Shape, 5> discriminator_output_shapes(const NetworkConfig& cfg, int batch) {
  std::array<Shape, 5> shapes;
  int size = cfg.patch;
  int l = 0;
  for (const auto& spec : conv_layers(cfg)) {
    if (spec.subnet != Subnet::kDiscriminator) continue;
    size = nn::conv_output_size(size, spec.geometry);
    shapes[l++] = Shape{batch, spec.out_channels, size, size};
  }
  return shapes;
}

Tensor discriminate(const Tensor& image, const Weights& w, const NetworkConfig& cfg,
                    DiscriminatorTrace* trace) {
  if (image.n() < 1 || image.c() != cfg.image_channels || image.h() != cfg.patch ||
      image.w() != cfg.patch) {
    throw ShapeMismatch("discriminator expects " + std::to_string(cfg.patch) + "x" +
                        std::to_string(cfg.patch) + "x" + std::to_string(cfg.image_channels) +
                        " input, got " + to_string(image.shape()));
  }
  ++g_discriminator_evals;
  const LayerTable layer(cfg);
  Tensor x = image;
  for (int l = 0; l < 5; ++l) {
    Tensor y = run_conv(x, w, layer("discriminator.conv" + std::to_string(l + 1)));
    if (l < 4) {
      nn::leaky_relu_inplace(y, cfg.leaky_slope);
    } else {
      nn::sigmoid_inplace(y);
    }
    if (trace != nullptr) {
      trace->inputs[l] = std::move(x);
      trace->outputs[l] = y;
    }
    x = std::move(y);
  }
  return x;
}

ForwardResult forward_full(const Tensor& rainy, const Weights& w, const NetworkConfig& cfg,
                           ForwardTrace* trace) {
  FeaturePyramid pyramid = encode(rainy, w, cfg, trace != nullptr ? &trace->encoder : nullptr);
  BackgroundOutput bg =
      decode_background(pyramid, w, cfg, trace != nullptr ? &trace->background : nullptr);
  Tensor rain =
      decode_rain(pyramid, bg.features, w, cfg, trace != nullptr ? &trace->rain : nullptr);
  Tensor rainy_hat =
      compose(bg.image, rain, w, cfg, trace != nullptr ? &trace->composition : nullptr);
  if (trace != nullptr) trace->pyramid = std::move(pyramid);
  return {std::move(bg.image), std::move(rain), std::move(rainy_hat)};
}

Tensor derain(const Tensor& rainy, const Weights& w, const NetworkConfig& cfg) {
  return decode_background(encode(rainy, w, cfg), w, cfg).image;
}

Image derain(const Image& rainy, const Weights& w, const NetworkConfig& cfg) {
  const Image input =
      rainy.channels() == cfg.image_channels ? rainy : rainy.with_channels(cfg.image_channels);
  const int padded_h = (input.height() + 31) / 32 * 32;
  const int padded_w = (input.width() + 31) / 32 * 32;
  Tensor x = to_tensor(input);
  if (padded_h != x.h() || padded_w != x.w()) x = nn::reflect_pad(x, padded_h, padded_w);
  Tensor y = derain(x, w, cfg);
  if (y.h() != input.height() || y.w() != input.width()) {
    y = nn::crop(y, input.height(), input.width());
  }
  return to_image(y);
}

CompositionGrad compose_backward(const CompositionTrace& trace, const Tensor& d_output,
                                 const Weights& w, const NetworkConfig& cfg, Gradients* grads) {
  const LayerTable layer(cfg);
  Tensor d = d_output;
  nn::sigmoid_backward_inplace(trace.head_output, d);
  const std::size_t hidden = cfg.composition_channels.size();
  d = back_conv(trace.inputs[hidden], d, w, layer("composition.head"), grads);
  for (std::size_t i = hidden; i-- > 0;) {
    nn::relu_backward_inplace(trace.outputs[i], d);
    d = back_conv(trace.inputs[i], d, w, layer("composition.conv" + std::to_string(i)), grads);
  }
  CompositionGrad out;
  nn::split_channels(d, cfg.image_channels, out.background, out.rain);
  return out;
}

FeaturePyramid decode_rain_backward(const DecoderTrace& trace, const Tensor& d_output,
                                    const Weights& w, const NetworkConfig& cfg, Gradients* grads,
                                    DecoderFeatures* d_features) {
  const LayerTable layer(cfg);
  FeaturePyramid d_pyramid;
  Tensor d = d_output;
  nn::sigmoid_backward_inplace(trace.head_output, d);
  d = back_conv(trace.output[4], d, w, layer("rain.head"), grads);
  for (int s = kStages - 1; s >= 0; --s) {
    nn::relu_backward_inplace(trace.output[s], d);
    accumulate(skip_of(d_pyramid, s), d);
    Tensor d_in = back_conv(trace.conv_input[s], d, w, layer(stage_name("rain", s) + ".conv"), grads);
    const int prev_channels = s == 0 ? cfg.encoder_channels[4] : decoder_channels(cfg, s - 1);
    Tensor d_up, d_feature;
    nn::split_channels(d_in, prev_channels, d_up, d_feature);
    if (d_features != nullptr) accumulate(d_features->stages[s], d_feature);
    d = nn::upsample_nearest2x_backward(d_up);
  }
  accumulate(d_pyramid.levels[4], d);
  return d_pyramid;
}

FeaturePyramid decode_background_backward(const DecoderTrace& trace, const Tensor& d_output,
                                          const DecoderFeatures* d_features, const Weights& w,
                                          const NetworkConfig& cfg, Gradients* grads) {
  const LayerTable layer(cfg);
  FeaturePyramid d_pyramid;
  Tensor d;
  if (!d_output.empty()) {
    Tensor dh = d_output;
    nn::sigmoid_backward_inplace(trace.head_output, dh);
    d = back_conv(trace.output[4], dh, w, layer("background.head"), grads);
  } else {
    d = Tensor(trace.output[4].shape());
  }
  for (int s = kStages - 1; s >= 0; --s) {
    if (d_features != nullptr) accumulate(d, d_features->stages[s]);
    nn::relu_backward_inplace(trace.output[s], d);
    accumulate(skip_of(d_pyramid, s), d);
    Tensor d_up = back_conv(trace.conv_input[s], d, w,
                            layer(stage_name("background", s) + ".conv"), grads);
    d = nn::upsample_nearest2x_backward(d_up);
  }
  accumulate(d_pyramid.levels[4], d);
  return d_pyramid;
}

void encode_backward(const EncoderTrace& trace, FeaturePyramid d_pyramid, const Weights& w,
                     const NetworkConfig& cfg, Gradients* grads) {
  const LayerTable layer(cfg);
  Tensor carry;
  for (int m = 4; m >= 0; --m) {
    Tensor dp = std::move(d_pyramid.levels[m]);
    accumulate(dp, carry);
    if (dp.empty()) dp = Tensor(Shape{trace.h2[m].n(), trace.h2[m].c(), trace.h2[m].h() / 2,
                                      trace.h2[m].w() / 2});
    Tensor d = nn::max_pool2x2_backward(dp, trace.pool_index[m], trace.h2[m].shape());
    if (m == 0) accumulate(d, d_pyramid.full);
    nn::relu_backward_inplace(trace.h2[m], d);
    Tensor dh1 = back_conv(trace.h1[m], d, w, layer(module_name(m) + ".conv2"), grads);
    dh1 += d;  // residual path
    nn::relu_backward_inplace(trace.h1[m], dh1);
    carry = back_conv(trace.input[m], dh1, w, layer(module_name(m) + ".conv1"), grads, m > 0);
  }
}

Tensor discriminate_backward(const DiscriminatorTrace& trace, const Tensor& d_output,
                             const Weights& w, const NetworkConfig& cfg, Gradients* grads,
                             bool output_grad_is_logit) {
  const LayerTable layer(cfg);
  Tensor d = d_output;
  for (int l = 4; l >= 0; --l) {
    if (l == 4) {
      if (!output_grad_is_logit) nn::sigmoid_backward_inplace(trace.outputs[l], d);
    } else {
      nn::leaky_relu_backward_inplace(trace.outputs[l], d, cfg.leaky_slope);
    }
    d = back_conv(trace.inputs[l], d, w, layer("discriminator.conv" + std::to_string(l + 1)), grads);
  }
  return d;
}

void decomposition_backward(const ForwardTrace& trace, const Tensor& d_background,
                            const Tensor& d_rain, const Tensor& d_rainy, const Weights& w,
                            const NetworkConfig& cfg, Gradients& grads,
                            const TrainableSet& trainable) {
  Tensor db = d_background;
  Tensor dr = d_rain;
  if (!d_rainy.empty()) {
    CompositionGrad g = compose_backward(trace.composition, d_rainy, w, cfg,
                                         trainable.composition ? &grads : nullptr);
    accumulate(db, g.background);
    accumulate(dr, g.rain);
  }
  const bool need_upstream = trainable.encoder || trainable.background_decoder;
  FeaturePyramid d_pyramid;
  DecoderFeatures d_features;
  if (!dr.empty() && (trainable.rain_decoder || need_upstream)) {
    d_pyramid = decode_rain_backward(trace.rain, dr, w, cfg,
                                     trainable.rain_decoder ? &grads : nullptr, &d_features);
  }
  if (!need_upstream) return;
  auto d_bg = decode_background_backward(trace.background, db, &d_features, w, cfg,
                                         trainable.background_decoder ? &grads : nullptr);
  if (!trainable.encoder) return;
  for (int m = 0; m < 5; ++m) accumulate(d_pyramid.levels[m], d_bg.levels[m]);
  accumulate(d_pyramid.full, d_bg.full);
  encode_backward(trace.encoder, std::move(d_pyramid), w, cfg, &grads);
}

}  // namespace ddc
