#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ddcnet/image.hpp"
#include "ddcnet/layers.hpp"
#include "ddcnet/tensor.hpp"

namespace ddc {

// Which encoder convolutions are dilated.
enum class DilationPlacement {
  kFirstModuleBothConvs,   // conv1 and conv2 of encoder module 0
  kFirstConvOfModules01,   // conv1 of encoder modules 0 and 1
};

struct NetworkConfig {
  int patch = 224;
  std::array<int, 5> encoder_channels{64, 128, 256, 512, 512};
  int dilation_rate = 2;
  DilationPlacement dilation_placement = DilationPlacement::kFirstModuleBothConvs;
  float leaky_slope = 0.2f;
  std::vector<int> composition_channels{64, 64};
  // Widths of the first four discriminator convs; the fifth always has one output.
  std::array<int, 4> discriminator_channels{64, 128, 256, 512};
  int image_channels = 3;

  // Throws InvalidParameter.
  void validate() const;
  bool operator==(const NetworkConfig&) const = default;
};

std::string to_json_string(const NetworkConfig& cfg);
NetworkConfig network_config_from_json(const std::string& text);

enum class Subnet { kEncoder, kBackgroundDecoder, kRainDecoder, kComposition, kDiscriminator };
const char* to_string(Subnet s);

struct ConvSpec {
  std::string name;  // e.g. "encoder.m0.conv1"; parameters are name + ".weight"/".bias"
  Subnet subnet;
  int in_channels;
  int out_channels;
  nn::ConvGeometry geometry;
};

// Every convolution of the full model in a fixed order.
std::vector<ConvSpec> conv_layers(const NetworkConfig& cfg);

// Named parameter tensors (weights, their gradients, or optimizer buffers).
class ParameterSet {
 public:
  Tensor& operator[](const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  void set(const std::string& name, Tensor t) { tensors_[name] = std::move(t); }

  std::size_t size() const { return tensors_.size(); }
  std::size_t parameter_count() const;
  bool all_finite() const;
  void zero();
  ParameterSet zeros_like() const;

  auto begin() { return tensors_.begin(); }
  auto end() { return tensors_.end(); }
  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }

  bool operator==(const ParameterSet&) const = default;

 private:
  std::map<std::string, Tensor> tensors_;
};

using Weights = ParameterSet;
using Gradients = ParameterSet;

// Fan-in scaled uniform init (He); biases zero. Deterministic in `seed`.
Weights init_weights(const NetworkConfig& cfg, std::uint64_t seed);
// All-zero weights with correct shapes.
Weights zero_weights(const NetworkConfig& cfg);
// Throws ConfigMismatch if any tensor is missing or mis-shaped.
void check_weights(const Weights& w, const NetworkConfig& cfg);

std::size_t parameter_count(const NetworkConfig& cfg);
std::size_t parameter_count(const NetworkConfig& cfg, Subnet subnet);
bool is_bias(const std::string& parameter_name);
Subnet subnet_of(const std::string& parameter_name);

// Per-subnetwork forward-evaluation counters, shared process-wide.
struct EvaluationCounters {
  std::uint64_t encoder = 0;
  std::uint64_t background_decoder = 0;
  std::uint64_t rain_decoder = 0;
  std::uint64_t composition = 0;
  std::uint64_t discriminator = 0;
};
EvaluationCounters evaluation_counters();
void reset_evaluation_counters();

// Encoder outputs at 1/2, 1/4, 1/8, 1/16, 1/32 of the input size, plus the
// first module's pre-pool activations, which feed the decoders' full-size
// skip. Also used for gradients w.r.t. those tensors.
struct FeaturePyramid {
  std::array<Tensor, 5> levels;
  Tensor full;
};

// Background decoder stage outputs at 1/16, 1/8, 1/4, 1/2 and 1/1.
struct DecoderFeatures {
  std::array<Tensor, 5> stages;
};

// Activations retained for backpropagation.
struct EncoderTrace {
  std::array<Tensor, 5> input;
  std::array<Tensor, 5> h1;
  std::array<Tensor, 5> h2;
  std::array<std::vector<std::uint32_t>, 5> pool_index;
};

struct DecoderTrace {
  std::array<Tensor, 5> conv_input;  // upsampled (and, for rain, concatenated) input
  std::array<Tensor, 5> output;      // == DecoderFeatures
  Tensor head_output;                // after sigmoid
};

struct CompositionTrace {
  std::vector<Tensor> inputs;   // input to each conv, including the head
  std::vector<Tensor> outputs;  // ReLU outputs of the hidden convs
  Tensor head_output;
};

struct DiscriminatorTrace {
  std::array<Tensor, 5> inputs;
  std::array<Tensor, 5> outputs;  // post-activation
};

struct BackgroundOutput {
  Tensor image;
  DecoderFeatures features;
};

struct ForwardResult {
  Tensor background;
  Tensor rain;
  Tensor rainy;
};

struct ForwardTrace {
  EncoderTrace encoder;
  DecoderTrace background;
  DecoderTrace rain;
  CompositionTrace composition;
  FeaturePyramid pyramid;
};

// Throws NonDivisibleInput unless H and W are multiples of 32.
FeaturePyramid encode(const Tensor& rainy, const Weights& w, const NetworkConfig& cfg,
                      EncoderTrace* trace = nullptr);
BackgroundOutput decode_background(const FeaturePyramid& pyramid, const Weights& w,
                                   const NetworkConfig& cfg, DecoderTrace* trace = nullptr);
Tensor decode_rain(const FeaturePyramid& pyramid, const DecoderFeatures& background_features,
                   const Weights& w, const NetworkConfig& cfg, DecoderTrace* trace = nullptr);
Tensor compose(const Tensor& background, const Tensor& rain, const Weights& w,
               const NetworkConfig& cfg, CompositionTrace* trace = nullptr);
// Input must be patch x patch (224 by default); returns per-patch probabilities.
Tensor discriminate(const Tensor& image, const Weights& w, const NetworkConfig& cfg,
                    DiscriminatorTrace* trace = nullptr);
std::array<Shape, 5> discriminator_output_shapes(const NetworkConfig& cfg, int batch = 1);

ForwardResult forward_full(const Tensor& rainy, const Weights& w, const NetworkConfig& cfg,
                           ForwardTrace* trace = nullptr);

// Background branch only (encoder + background decoder).
Tensor derain(const Tensor& rainy, const Weights& w, const NetworkConfig& cfg);
// Reflect-pads to a multiple of 32, runs the background branch, crops back.
// Single-channel inputs are replicated when the network expects colour.
Image derain(const Image& rainy, const Weights& w, const NetworkConfig& cfg);

// Backward passes. Parameter gradients are accumulated into *grads when it is
// non-null; otherwise gradients only flow through (frozen parameters).
struct CompositionGrad {
  Tensor background;
  Tensor rain;
};
CompositionGrad compose_backward(const CompositionTrace& trace, const Tensor& d_output,
                                 const Weights& w, const NetworkConfig& cfg, Gradients* grads);

// Returns the gradient w.r.t. the encoder pyramid. `d_features` receives the
// gradient flowing into the background decoder's stage outputs.
FeaturePyramid decode_rain_backward(const DecoderTrace& trace, const Tensor& d_output,
                                    const Weights& w, const NetworkConfig& cfg, Gradients* grads,
                                    DecoderFeatures* d_features);

// `d_features` may carry extra gradient for the stage outputs (from the rain
// branch); entries may be empty tensors.
FeaturePyramid decode_background_backward(const DecoderTrace& trace, const Tensor& d_output,
                                          const DecoderFeatures* d_features, const Weights& w,
                                          const NetworkConfig& cfg, Gradients* grads);

void encode_backward(const EncoderTrace& trace, FeaturePyramid d_pyramid, const Weights& w,
                     const NetworkConfig& cfg, Gradients* grads);

// Returns the gradient w.r.t. the discriminator input. With
// `output_grad_is_logit` the incoming gradient is taken w.r.t. the
// pre-sigmoid logits and the sigmoid derivative is skipped.
Tensor discriminate_backward(const DiscriminatorTrace& trace, const Tensor& d_output,
                             const Weights& w, const NetworkConfig& cfg, Gradients* grads,
                             bool output_grad_is_logit = false);

// Which parameter groups receive gradients in decomposition_backward.
struct TrainableSet {
  bool encoder = true;
  bool background_decoder = true;
  bool rain_decoder = true;
  bool composition = true;
};

// Full decomposition + composition backward. Any of the three output
// gradients may be empty (treated as zero).
void decomposition_backward(const ForwardTrace& trace, const Tensor& d_background,
                            const Tensor& d_rain, const Tensor& d_rainy, const Weights& w,
                            const NetworkConfig& cfg, Gradients& grads,
                            const TrainableSet& trainable = {});

}  // namespace ddc
