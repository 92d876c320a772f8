#pragma once

#include <filesystem>
#include <map>
#include <nlohmann/json.hpp>
#include <string>

#include "ddcnet/network.hpp"
#include "ddcnet/tensor.hpp"

namespace ddc {

// On-disk container shared by weight files and training checkpoints:
//
//   "DDCNETCK"            8-byte magic
//   u32 version           kArchiveVersion
//   u64 length, bytes     JSON metadata
//   u64 count             number of tensors
//   count x { u32 length, name bytes, i32 n, c, h, w, f32 data[n*c*h*w] }
//
// Integers and floats are little-endian.
inline constexpr std::uint32_t kArchiveVersion = 1;

struct Archive {
  nlohmann::json metadata = nlohmann::json::object();
  std::map<std::string, Tensor> tensors;
};

// Writes to a temporary file and renames it into place.
void write_archive(const std::filesystem::path& path, const Archive& archive);
// Throws MissingFile, DecodeError (bad magic, truncated) or ConfigMismatch
// (unsupported version).
Archive read_archive(const std::filesystem::path& path);

inline constexpr const char* kParameterPrefix = "param/";

// Stores NetworkConfig in the metadata and every weight as "param/<name>".
void save_weights(const std::filesystem::path& path, const NetworkConfig& cfg, const Weights& weights);

struct LoadedModel {
  NetworkConfig config;
  Weights weights;
};

// Accepts both weight files and training checkpoints.
LoadedModel load_model(const std::filesystem::path& path);
// Throws ConfigMismatch when the stored config differs from `expected`.
Weights load_weights(const std::filesystem::path& path, const NetworkConfig& expected);

Archive weights_archive(const NetworkConfig& cfg, const Weights& weights);
LoadedModel model_from_archive(const Archive& archive);

}  // namespace ddc
