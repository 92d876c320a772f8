#include "ddcnet/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>

#include "ddcnet/errors.hpp"

namespace ddc {

namespace fs = std::filesystem;

namespace {

constexpr std::array<char, 8> kMagic{'D', 'D', 'C', 'N', 'E', 'T', 'C', 'K'};

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof value);
}

template <typename T>
T get(std::istream& in, const fs::path& path) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof value);
  if (!in) throw DecodeError("truncated archive " + path.string());
  return value;
}

}  // namespace

void write_archive(const fs::path& path, const Archive& archive) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(kMagic.data(), kMagic.size());
    put<std::uint32_t>(out, kArchiveVersion);
    const std::string meta = archive.metadata.dump();
    put<std::uint64_t>(out, meta.size());
    out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
    put<std::uint64_t>(out, archive.tensors.size());
    for (const auto& [name, t] : archive.tensors) {
      put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      for (int d : {t.n(), t.c(), t.h(), t.w()}) put<std::int32_t>(out, d);
      out.write(reinterpret_cast<const char*>(t.ptr()),
                static_cast<std::streamsize>(t.size() * sizeof(float)));
    }
    out.flush();
    if (!out) throw IoError("failed writing " + tmp.string() + " (disk full?)");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " into place: " + ec.message());
}

Archive read_archive(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingFile("cannot open checkpoint " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw DecodeError(path.string() + " is not a ddcnet archive");
  const auto version = get<std::uint32_t>(in, path);
  if (version != kArchiveVersion) {
    throw ConfigMismatch(path.string() + " has archive version " + std::to_string(version) +
                         ", expected " + std::to_string(kArchiveVersion));
  }
  Archive archive;
  const auto meta_len = get<std::uint64_t>(in, path);
  if (meta_len > (std::uint64_t{1} << 30)) throw DecodeError("corrupt metadata length in " + path.string());
  std::string meta(meta_len, '\0');
  in.read(meta.data(), static_cast<std::streamsize>(meta_len));
  if (!in) throw DecodeError("truncated archive " + path.string());
  try {
    archive.metadata = nlohmann::json::parse(meta);
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError("corrupt metadata in " + path.string() + ": " + e.what());
  }
  const auto count = get<std::uint64_t>(in, path);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = get<std::uint32_t>(in, path);
    if (name_len > 4096) throw DecodeError("corrupt tensor name in " + path.string());
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    Shape s;
    s.n = get<std::int32_t>(in, path);
    s.c = get<std::int32_t>(in, path);
    s.h = get<std::int32_t>(in, path);
    s.w = get<std::int32_t>(in, path);
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0 || s.count() > (std::size_t{1} << 32)) {
      throw DecodeError("corrupt tensor shape for '" + name + "' in " + path.string());
    }
    Tensor t(s);
    in.read(reinterpret_cast<char*>(t.ptr()), static_cast<std::streamsize>(t.size() * sizeof(float)));
    if (!in) throw DecodeError("truncated tensor '" + name + "' in " + path.string());
    archive.tensors.emplace(std::move(name), std::move(t));
  }
  return archive;
}

Archive weights_archive(const NetworkConfig& cfg, const Weights& weights) {
  check_weights(weights, cfg);
  Archive archive;
  archive.metadata["format"] = "ddcnet";
  archive.metadata["network_config"] = nlohmann::json::parse(to_json_string(cfg));
  archive.metadata["parameter_count"] = weights.parameter_count();
  for (const auto& [name, t] : weights) archive.tensors.emplace(kParameterPrefix + name, t);
  return archive;
}

void save_weights(const fs::path& path, const NetworkConfig& cfg, const Weights& weights) {
  write_archive(path, weights_archive(cfg, weights));
}

LoadedModel model_from_archive(const Archive& archive) {
  if (!archive.metadata.contains("network_config")) {
    throw DecodeError("archive lacks a network configuration");
  }
  LoadedModel model;
  model.config = network_config_from_json(archive.metadata.at("network_config").dump());
  const std::string prefix = kParameterPrefix;
  for (const auto& [name, t] : archive.tensors) {
    if (name.starts_with(prefix)) model.weights.set(name.substr(prefix.size()), t);
  }
  check_weights(model.weights, model.config);
  if (!model.weights.all_finite()) throw DecodeError("archive holds non-finite weights");
  return model;
}

LoadedModel load_model(const fs::path& path) { return model_from_archive(read_archive(path)); }

Weights load_weights(const fs::path& path, const NetworkConfig& expected) {
  LoadedModel model = load_model(path);
  if (!(model.config == expected)) {
    throw ConfigMismatch("checkpoint " + path.string() + " was saved with network config " +
                         to_json_string(model.config) + ", expected " + to_json_string(expected));
  }
  return std::move(model.weights);
}

}  // namespace ddc
