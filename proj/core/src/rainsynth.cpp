#include "ddcnet/rainsynth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "ddcnet/errors.hpp"
#include "ddcnet/rng.hpp"

namespace ddc {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw InvalidParameter(what);
}

// Anti-aliased line of length `length` through the kernel centre, rotated by
// `angle_deg` from vertical. Weights sum to one.
struct LineKernel {
  int radius = 0;
  std::vector<float> taps;  // (2r+1)^2, row-major

  LineKernel(int length, double angle_deg) {
    radius = (length + 1) / 2 + 1;
    const int size = 2 * radius + 1;
    taps.assign(static_cast<std::size_t>(size) * size, 0.0f);
    const double theta = angle_deg * std::numbers::pi / 180.0;
    const double dx = std::sin(theta);
    const double dy = -std::cos(theta);  // image rows grow downwards
    const int samples = 4 * length + 1;
    for (int i = 0; i < samples; ++i) {
      const double t = -0.5 * (length - 1) + (length - 1) * static_cast<double>(i) / (samples - 1);
      const double x = radius + t * dx;
      const double y = radius + t * dy;
      const int x0 = static_cast<int>(std::floor(x));
      const int y0 = static_cast<int>(std::floor(y));
      const double fx = x - x0;
      const double fy = y - y0;
      splat(x0, y0, (1 - fx) * (1 - fy));
      splat(x0 + 1, y0, fx * (1 - fy));
      splat(x0, y0 + 1, (1 - fx) * fy);
      splat(x0 + 1, y0 + 1, fx * fy);
    }
    double sum = 0.0;
    for (float v : taps) sum += v;
    for (float& v : taps) v = static_cast<float>(v / sum);
  }

  void splat(int x, int y, double weight) {
    const int size = 2 * radius + 1;
    if (x < 0 || y < 0 || x >= size || y >= size) return;
    taps[static_cast<std::size_t>(y) * size + x] += static_cast<float>(weight);
  }
};

// One overlay: sparse seeds convolved with the streak kernel, stretched so
// the brightest sample equals `intensity`.
std::vector<float> streak_overlay(int height, int width, const RainParams& p, std::uint64_t seed) {
  Rng rng(seed);
  const LineKernel kernel(p.streak_length, p.angle_deg);
  const int size = 2 * kernel.radius + 1;
  std::vector<float> layer(static_cast<std::size_t>(height) * width, 0.0f);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double u = rng.uniform();
      const double brightness = rng.uniform(0.5, 1.0);
      if (u >= p.density) continue;
      // Convolution of a sparse seed map == splatting the kernel per seed.
      for (int ky = 0; ky < size; ++ky) {
        const int yy = y + ky - kernel.radius;
        if (yy < 0 || yy >= height) continue;
        for (int kx = 0; kx < size; ++kx) {
          const int xx = x + kx - kernel.radius;
          if (xx < 0 || xx >= width) continue;
          layer[static_cast<std::size_t>(yy) * width + xx] +=
              static_cast<float>(brightness) * kernel.taps[static_cast<std::size_t>(ky) * size + kx];
        }
      }
    }
  }
  const float peak = *std::max_element(layer.begin(), layer.end());
  if (peak > 0.0f) {
    const float gain = static_cast<float>(p.intensity) / peak;
    for (float& v : layer) v = std::min(1.0f, v * gain);
  }
  return layer;
}

}  // namespace

void RainParams::validate() const {
  require(density > 0.0 && density <= 0.2, "rain density must be in (0, 0.2], got " + std::to_string(density));
  require(streak_length >= 5 && streak_length <= 80,
          "streak length must be in [5, 80], got " + std::to_string(streak_length));
  require(angle_deg >= -30.0 && angle_deg <= 30.0,
          "streak angle must be in [-30, 30] degrees, got " + std::to_string(angle_deg));
  require(intensity > 0.0 && intensity <= 1.0,
          "rain intensity must be in (0, 1], got " + std::to_string(intensity));
  require(num_overlays >= 1 && num_overlays <= 3,
          "overlay count must be in [1, 3], got " + std::to_string(num_overlays));
}

void RainParamRanges::validate() const {
  require(density_min <= density_max && length_min <= length_max && angle_min <= angle_max &&
              intensity_min <= intensity_max && overlays_min <= overlays_max,
          "rain parameter ranges must satisfy min <= max");
  RainParams lo{density_min, length_min, angle_min, intensity_min, overlays_min, 0};
  RainParams hi{density_max, length_max, angle_max, intensity_max, overlays_max, 0};
  lo.validate();
  hi.validate();
}

RainParams RainParamRanges::sample(std::uint64_t seed) const {
  Rng rng(seed);
  RainParams p;
  p.density = rng.uniform(density_min, density_max);
  p.streak_length = static_cast<int>(rng.between(length_min, length_max));
  p.angle_deg = rng.uniform(angle_min, angle_max);
  p.intensity = rng.uniform(intensity_min, intensity_max);
  p.num_overlays = static_cast<int>(rng.between(overlays_min, overlays_max));
  // uniform() is half-open; keep the closed upper bounds reachable but never
  // step below a strictly positive lower bound.
  p.density = std::max(p.density, density_min);
  p.intensity = std::max(p.intensity, intensity_min);
  p.seed = derive_seed(seed, 0x7261696e);
  return p;
}

const char* to_string(BlendMode mode) { return mode == BlendMode::kScreen ? "screen" : "additive"; }

BlendMode parse_blend_mode(const std::string& text) {
  if (text == "screen" || text == "SCREEN") return BlendMode::kScreen;
  if (text == "additive" || text == "ADDITIVE") return BlendMode::kAdditive;
  throw InvalidParameter("unknown blend mode '" + text + "' (expected screen or additive)");
}

Image generate_rain_layer(int height, int width, const RainParams& params, int channels) {
  params.validate();
  if (height < params.streak_length || width < params.streak_length) {
    throw InvalidParameter("rain layer " + std::to_string(height) + "x" + std::to_string(width) +
                           " is smaller than the streak length " +
                           std::to_string(params.streak_length));
  }
  if (channels != 1 && channels != 3) throw InvalidParameter("channels must be 1 or 3");
  Image layer(height, width, 1);
  auto out = layer.data();
  for (int o = 0; o < params.num_overlays; ++o) {
    const auto overlay = streak_overlay(height, width, params, derive_seed(params.seed, o));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = screen(out[i], overlay[i]);
  }
  return layer.with_channels(channels);
}

Image blend(const Image& background, const Image& rain, BlendMode mode) {
  if (!background.same_shape(rain)) {
    throw ShapeMismatch("blend: background " + shape_string(background) + " vs rain " +
                        shape_string(rain));
  }
  Image out(background.height(), background.width(), background.channels());
  auto b = background.data();
  auto r = rain.data();
  auto o = out.data();
  if (mode == BlendMode::kScreen) {
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = screen(b[i], r[i]);
  } else {
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = additive(b[i], r[i]);
  }
  return out;
}

Triplet synthesize_triplet(std::span<const Image> backgrounds, std::size_t index,
                           const SynthesisOptions& options) {
  if (backgrounds.empty()) throw InvalidParameter("synthesis needs at least one background image");
  const std::uint64_t seed = derive_seed(options.seed, index);
  const Image& source = backgrounds[index % backgrounds.size()];
  if (source.height() < options.crop || source.width() < options.crop) {
    throw ImageTooSmall("background " + std::to_string(index % backgrounds.size()) + " (" +
                        shape_string(source) + ") is smaller than the " +
                        std::to_string(options.crop) + "px crop");
  }
  Rng rng(seed);
  const int top = static_cast<int>(rng.below(static_cast<std::uint64_t>(source.height() - options.crop) + 1));
  const int left = static_cast<int>(rng.below(static_cast<std::uint64_t>(source.width() - options.crop) + 1));

  Triplet t;
  t.mode = options.mode;
  t.seed = seed;
  t.background = source.crop(top, left, options.crop, options.crop);
  const RainParams params = options.ranges.sample(derive_seed(seed, 1));
  t.rain = generate_rain_layer(options.crop, options.crop, params, source.channels());
  if (options.quantize) {
    t.background = quantize_8bit(t.background);
    t.rain = quantize_8bit(t.rain);
  }
  t.rainy = blend(t.background, t.rain, options.mode);
  return t;
}

std::vector<Triplet> synthesize_dataset(std::span<const Image> backgrounds, std::size_t count,
                                        const SynthesisOptions& options) {
  if (backgrounds.empty()) throw InvalidParameter("synthesis needs at least one background image");
  if (count < 1) throw InvalidParameter("triplet count must be >= 1");
  options.ranges.validate();
  std::vector<Triplet> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(synthesize_triplet(backgrounds, i, options));
  return out;
}

Image procedural_background(int height, int width, std::uint64_t seed, int channels) {
  Rng rng(seed);
  Image img(height, width, channels);
  // Per-channel smooth field: a tilted gradient plus a few low-frequency waves.
  struct Wave {
    double fx, fy, phase, amp;
  };
  for (int c = 0; c < channels; ++c) {
    const double base = rng.uniform(0.25, 0.65);
    const double gx = rng.uniform(-0.2, 0.2);
    const double gy = rng.uniform(-0.2, 0.2);
    std::vector<Wave> waves(4);
    for (auto& w : waves) {
      w = {rng.uniform(0.5, 4.0) / width, rng.uniform(0.5, 4.0) / height,
           rng.uniform(0.0, 2.0 * std::numbers::pi), rng.uniform(0.02, 0.08)};
    }
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        double v = base + gx * (x / static_cast<double>(width) - 0.5) +
                   gy * (y / static_cast<double>(height) - 0.5);
        for (const auto& w : waves) {
          v += w.amp * std::sin(2.0 * std::numbers::pi * (w.fx * x + w.fy * y) + w.phase);
        }
        img.at(y, x, c) = static_cast<float>(v);
      }
    }
  }
  // Flat-coloured rectangles and discs give edges for the network to keep.
  const int shapes = 6 + static_cast<int>(rng.below(6));
  for (int s = 0; s < shapes; ++s) {
    const bool disc = rng.uniform() < 0.5;
    const double cx = rng.uniform(0.0, width);
    const double cy = rng.uniform(0.0, height);
    const double rx = rng.uniform(0.05, 0.25) * width;
    const double ry = rng.uniform(0.05, 0.25) * height;
    std::array<double, 3> colour{};
    for (auto& v : colour) v = rng.uniform(0.1, 0.85);
    const double alpha = rng.uniform(0.4, 0.9);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const double u = (x - cx) / rx;
        const double v = (y - cy) / ry;
        const bool inside = disc ? (u * u + v * v <= 1.0) : (std::abs(u) <= 1.0 && std::abs(v) <= 1.0);
        if (!inside) continue;
        for (int c = 0; c < channels; ++c) {
          float& p = img.at(y, x, c);
          p = static_cast<float>((1.0 - alpha) * p + alpha * colour[c]);
        }
      }
    }
  }
  for (float& v : img.data()) v = std::clamp(v, 0.05f, 0.95f);
  return img;
}

}  // namespace ddc
