#pragma once

#include <cstdint>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "ddcnet/datastore.hpp"
#include "ddcnet/image.hpp"
#include "ddcnet/network.hpp"

namespace ddc {

// 10 log10(1 / MSE) with MAX = 1; +inf when the images are identical.
// Throws ShapeMismatch.
double psnr(const Image& x, const Image& y);

// Mean SSIM over the valid region of an 11x11 Gaussian window (sigma 1.5,
// K1 = 0.01, K2 = 0.03, L = 1), computed per channel and averaged.
// Throws ShapeMismatch, ImageTooSmall.
double ssim(const Image& x, const Image& y);

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

struct ImageScore {
  std::string id;
  double psnr_db = 0.0;
  double ssim = 0.0;
};

struct TimingRecord {
  int height = 0;
  int width = 0;
  int warmup_runs = 0;
  int measured_runs = 0;
  std::vector<double> seconds;
  double median_seconds = 0.0;
  double mean_seconds = 0.0;
  std::string device_label;
};

struct EvalReport {
  std::vector<ImageScore> per_image;  // sorted by id
  double mean_psnr = 0.0;             // +inf if any pair is identical
  double mean_ssim = 0.0;
  std::optional<TimingRecord> timing;
};

// Pairs images by id. Throws IdMismatch listing ids present on one side only.
EvalReport evaluate_images(const std::map<std::string, Image>& results,
                           const std::map<std::string, Image>& truths);
// Loads each manifest's primary image per entry, then as evaluate_images.
EvalReport evaluate_corpus(const Manifest& results, const Manifest& truths);

// Infinite PSNR is written as the string "inf".
nlohmann::json to_json(const EvalReport& report);
nlohmann::json to_json(const TimingRecord& timing);
std::string format_table(const EvalReport& report);

// "cpu: <model name>" from the host.
std::string cpu_device_label();

// Times derain() on seeded random inputs of the given size: `warmup`
// untimed runs, then `runs` timed ones. Throws InvalidParameter if runs < 1.
TimingRecord bench_inference(const Weights& w, const NetworkConfig& cfg, int height, int width,
                             int warmup, int runs, std::uint64_t seed = 0);

}  // namespace ddc
