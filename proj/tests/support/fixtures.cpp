#include "fixtures.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <iterator>

#include <unistd.h>

#include "ddcnet/rng.hpp"

namespace ddc::testing {

NetworkConfig tiny_network_config() {
  NetworkConfig cfg;
  cfg.patch = 32;
  cfg.encoder_channels = {4, 4, 6, 6, 8};
  cfg.composition_channels = {4};
  cfg.discriminator_channels = {4, 4, 4, 4};
  return cfg;
}

NetworkConfig overfit_network_config() {
  NetworkConfig cfg;
  cfg.patch = 64;
  cfg.encoder_channels = {16, 32, 32, 64, 64};
  cfg.composition_channels = {16};
  cfg.discriminator_channels = {8, 8, 8, 8};
  return cfg;
}

TrainConfig overfit_train_config() {
  TrainConfig cfg;
  cfg.batch = 2 * kOverfitTriplets;
  cfg.patch = 64;
  cfg.lr_schedule = {{0, 0.065}};
  cfg.max_iter = 2000;
  cfg.seed = kOverfitSeed;
  cfg.checkpoint_every = 1000;
  return cfg;
}

std::vector<Triplet> overfit_triplets() {
  std::vector<Image> backgrounds;
  for (int i = 0; i < kOverfitTriplets; ++i) {
    // 64-pixel crops of larger scenes keep texture at a learnable scale.
    backgrounds.push_back(procedural_background(320, 320, derive_seed(kOverfitSeed, i)));
  }
  SynthesisOptions opt;
  opt.crop = 64;
  opt.seed = kOverfitSeed;
  return synthesize_dataset(backgrounds, kOverfitTriplets, opt);
}

Image random_image(int height, int width, int channels, std::uint64_t seed, float lo, float hi) {
  Rng rng(seed);
  Image img(height, width, channels);
  for (float& v : img.data()) v = static_cast<float>(rng.uniform(lo, hi));
  return img;
}

Tensor random_tensor(Shape shape, std::uint64_t seed, float lo, float hi) {
  Rng rng(seed);
  Tensor t(shape);
  for (float& v : t.data()) v = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = std::filesystem::temp_directory_path() /
          (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  std::filesystem::remove_all(path_);
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

bool files_identical(const std::filesystem::path& a, const std::filesystem::path& b) {
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  if (!fa || !fb) return false;
  return std::equal(std::istreambuf_iterator<char>(fa), std::istreambuf_iterator<char>(),
                    std::istreambuf_iterator<char>(fb), std::istreambuf_iterator<char>());
}

}  // namespace ddc::testing
