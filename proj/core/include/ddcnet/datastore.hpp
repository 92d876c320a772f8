#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ddcnet/image.hpp"
#include "ddcnet/rainsynth.hpp"
#include "ddcnet/tensor.hpp"

namespace ddc {

enum class DatasetKind { kPairedTriplets, kRealClean, kRealRainy };

const char* to_string(DatasetKind kind);
DatasetKind parse_dataset_kind(const std::string& text);

// Paths are stored relative to Manifest::root. Real-clean images live in the
// `background` role, real-rainy images in the `rainy` role.
struct ManifestEntry {
  std::string id;
  std::optional<std::filesystem::path> rainy;
  std::optional<std::filesystem::path> background;
  std::optional<std::filesystem::path> rain;
  std::optional<BlendMode> mode;
  std::optional<std::uint64_t> seed;

  bool operator==(const ManifestEntry&) const = default;
};

struct Manifest {
  DatasetKind kind = DatasetKind::kPairedTriplets;
  std::filesystem::path root;
  std::vector<ManifestEntry> entries;  // sorted by id
  std::vector<std::string> warnings;

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }

  std::filesystem::path resolve(const std::filesystem::path& relative) const {
    return relative.is_absolute() ? relative : root / relative;
  }
  // The image evaluation and real-image sampling use: background for
  // paired/clean sets, rainy for rainy sets.
  std::filesystem::path primary_path(const ManifestEntry& e) const;
};

inline constexpr const char* kManifestFileName = "manifest.jsonl";
inline constexpr const char* kRainyDir = "rainy";
inline constexpr const char* kBackgroundDir = "background";
inline constexpr const char* kRainDir = "rain";

// Scans `root` for the layout of `kind`:
//   paired:      root/{rainy,background,rain}/<id>.png
//   real-rainy:  root/rainy/<id>.* (or images directly under root)
//   real-clean:  root/background/<id>.* (or images directly under root)
// Every file is decoded. Mode/seed metadata is merged from an existing
// root/manifest.jsonl when present. Throws MissingFile, DecodeError, DuplicateId.
Manifest build_manifest(const std::filesystem::path& root, DatasetKind kind);

// Newline-delimited JSON, one record per entry:
// {"id","rainy","background","rain","mode","seed"} with null for absent roles.
void save_manifest(const Manifest& manifest, const std::filesystem::path& file);
// Kind is inferred from which roles are present. Throws DuplicateId, DecodeError.
Manifest load_manifest(const std::filesystem::path& file);

// Writes triplets under root/{rainy,background,rain}/<id>.png and returns the
// manifest (also saved to root/manifest.jsonl). ids are zero-padded indices
// starting at `first_index`.
Manifest write_triplets(const std::filesystem::path& root, std::span<const Triplet> triplets,
                        std::size_t first_index = 0);

std::string format_id(std::size_t index);

// Thread-safe decoded-image cache keyed by absolute path.
class ImageCache {
 public:
  explicit ImageCache(std::size_t max_bytes = std::size_t{1} << 30) : max_bytes_(max_bytes) {}
  Image load(const std::filesystem::path& path);

 private:
  std::mutex mutex_;
  std::map<std::filesystem::path, Image> images_;
  std::size_t bytes_ = 0;
  std::size_t max_bytes_;
};

struct AugmentFlags {
  bool horizontal_flip = false;
};

// NCHW tensors. For paired manifests all three are filled; for real sets only
// `rainy` (real-rainy) or only `background` (real-clean).
struct Batch {
  Tensor rainy;
  Tensor background;
  Tensor rain;
  int size = 0;
};

// n independent crops sampled with replacement; the same crop (and flip) is
// applied to every role of an entry. Deterministic in `seed`.
// Throws ImageTooSmall, InvalidParameter.
Batch sample_batch(const Manifest& manifest, int n, int patch, std::uint64_t seed,
                   AugmentFlags augment = {}, ImageCache* cache = nullptr);

// Cuts `count` random patch x patch crops from `images`, writes them to
// out_root/rainy/<id>.png and returns (and saves) the real-rainy manifest.
Manifest crop_real_finetune_set(std::span<const Image> images, std::size_t count, int patch,
                                std::uint64_t seed, const std::filesystem::path& out_root);

}  // namespace ddc
