#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ddcnet/image.hpp"
#include "ddcnet/network.hpp"
#include "ddcnet/rainsynth.hpp"
#include "ddcnet/tensor.hpp"
#include "ddcnet/trainer.hpp"

namespace ddc::testing {

// Narrow network on 32x32 patches; cheap enough for finite differences.
NetworkConfig tiny_network_config();

// Scaled-down network and schedule used by the tiny-overfit experiment.
NetworkConfig overfit_network_config();
TrainConfig overfit_train_config();
inline constexpr int kOverfitTriplets = 4;
inline constexpr std::uint64_t kOverfitSeed = 2024;
// The seeded triplets (64x64 procedural scenes with synthetic rain).
std::vector<Triplet> overfit_triplets();

Image random_image(int height, int width, int channels, std::uint64_t seed, float lo = 0.0f,
                   float hi = 1.0f);
Tensor random_tensor(Shape shape, std::uint64_t seed, float lo = -1.0f, float hi = 1.0f);

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "ddcnet");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

bool files_identical(const std::filesystem::path& a, const std::filesystem::path& b);

}  // namespace ddc::testing
