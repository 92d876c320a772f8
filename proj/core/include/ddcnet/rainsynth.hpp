#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ddcnet/image.hpp"

namespace ddc {

// Parameters of one synthetic rain layer.
struct RainParams {
  double density = 0.01;     // fraction of seeded pixels, (0, 0.2]
  int streak_length = 20;    // pixels, [5, 80]
  double angle_deg = 0.0;    // from vertical, [-30, 30]; positive leans the top to the right
  double intensity = 0.9;    // peak brightness, (0, 1]
  int num_overlays = 1;      // [1, 3], screen-blended together
  std::uint64_t seed = 0;

  // Throws InvalidParameter naming the offending field.
  void validate() const;
};

// Closed ranges from which synthesize_dataset draws per-triplet RainParams.
struct RainParamRanges {
  double density_min = 0.004, density_max = 0.02;
  int length_min = 10, length_max = 40;
  double angle_min = -20.0, angle_max = 20.0;
  double intensity_min = 0.5, intensity_max = 1.0;
  int overlays_min = 1, overlays_max = 3;

  void validate() const;
  RainParams sample(std::uint64_t seed) const;
};

enum class BlendMode { kAdditive, kScreen };

const char* to_string(BlendMode mode);
BlendMode parse_blend_mode(const std::string& text);

struct Triplet {
  Image rainy;
  Image background;
  Image rain;
  BlendMode mode = BlendMode::kScreen;
  std::uint64_t seed = 0;
};

// Single-channel rain layer, replicated to `channels`. Pure in (h, w, params).
// Requires h, w >= streak_length.
Image generate_rain_layer(int height, int width, const RainParams& params, int channels = 1);

// Per-sample screen blend: B + R - B*R, evaluated so that the identities
// screen(B,0)=B, screen(B,1)=1 and commutativity hold exactly in float.
inline float screen(float b, float r) {
  const float hi = b > r ? b : r;
  const float lo = b > r ? r : b;
  return hi + lo * (1.0f - hi);
}

inline float additive(float b, float r) {
  const float s = b + r;
  return s < 0.0f ? 0.0f : (s > 1.0f ? 1.0f : s);
}

// Throws ShapeMismatch when shapes differ.
Image blend(const Image& background, const Image& rain, BlendMode mode);

struct SynthesisOptions {
  int crop = 224;
  RainParamRanges ranges;
  BlendMode mode = BlendMode::kScreen;
  std::uint64_t seed = 0;
  // Snap background and rain to k/255 before blending so the triplet
  // invariant survives 8-bit storage.
  bool quantize = true;
};

// Triplet `index` of a synthesis run; backgrounds are cycled and randomly
// cropped. Exposed so callers can stream large datasets.
Triplet synthesize_triplet(std::span<const Image> backgrounds, std::size_t index,
                           const SynthesisOptions& options);

// Emits exactly `count` triplets. Throws InvalidParameter on an empty
// background collection and ImageTooSmall if a background is smaller than
// the crop.
std::vector<Triplet> synthesize_dataset(std::span<const Image> backgrounds, std::size_t count,
                                        const SynthesisOptions& options);

// Deterministic smooth-plus-shapes test scene for when no photo corpus is
// available.
Image procedural_background(int height, int width, std::uint64_t seed, int channels = 3);

}  // namespace ddc
