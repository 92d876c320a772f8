#include "ddcnet/datastore.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>

#include "ddcnet/errors.hpp"
#include "ddcnet/image_io.hpp"
#include "ddcnet/rng.hpp"

namespace ddc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// id -> file for every image directly inside `dir`.
std::map<std::string, fs::path> list_images(const fs::path& dir) {
  std::map<std::string, fs::path> files;
  if (!fs::is_directory(dir)) return files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || !is_image_file(entry.path())) continue;
    const std::string id = entry.path().stem().string();
    auto [it, inserted] = files.emplace(id, entry.path());
    if (!inserted) {
      throw DuplicateId("duplicate id '" + id + "': " + it->second.string() + " and " +
                        entry.path().string());
    }
  }
  return files;
}

fs::path relative_to(const fs::path& p, const fs::path& root) {
  return p.lexically_relative(root).empty() ? p : p.lexically_relative(root);
}

json optional_path(const std::optional<fs::path>& p) {
  return p ? json(p->generic_string()) : json(nullptr);
}

std::optional<fs::path> read_path(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return fs::path(j.at(key).get<std::string>());
}

void write_atomically(const fs::path& file, const std::string& contents) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  const fs::path tmp = file.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << contents;
    out.flush();
    if (!out) throw IoError("cannot write " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, file, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + file.string() + ": " + ec.message());
}

fs::path role_dir(const fs::path& root, const char* role) {
  const fs::path sub = root / role;
  return fs::is_directory(sub) ? sub : root;
}

}  // namespace

const char* to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::kPairedTriplets: return "paired";
    case DatasetKind::kRealClean: return "real-clean";
    case DatasetKind::kRealRainy: return "real-rainy";
  }
  return "?";
}

DatasetKind parse_dataset_kind(const std::string& text) {
  if (text == "paired" || text == "PAIRED_TRIPLETS") return DatasetKind::kPairedTriplets;
  if (text == "real-clean" || text == "REAL_CLEAN") return DatasetKind::kRealClean;
  if (text == "real-rainy" || text == "REAL_RAINY") return DatasetKind::kRealRainy;
  throw InvalidParameter("unknown dataset kind '" + text + "'");
}

fs::path Manifest::primary_path(const ManifestEntry& e) const {
  const auto& chosen = kind == DatasetKind::kRealRainy ? e.rainy : e.background;
  if (!chosen) throw InvalidParameter("manifest entry '" + e.id + "' lacks its primary image");
  return resolve(*chosen);
}

std::string format_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu", index);
  return buf;
}

Manifest build_manifest(const fs::path& root, DatasetKind kind) {
  if (!fs::is_directory(root)) throw MissingFile("dataset root does not exist: " + root.string());
  Manifest manifest;
  manifest.kind = kind;
  manifest.root = root;

  if (kind == DatasetKind::kPairedTriplets) {
    const auto rainy = list_images(root / kRainyDir);
    const auto background = list_images(root / kBackgroundDir);
    const auto rain = list_images(root / kRainDir);
    std::set<std::string> ids;
    for (const auto* role : {&rainy, &background, &rain})
      for (const auto& [id, path] : *role) ids.insert(id);
    for (const auto& id : ids) {
      ManifestEntry e;
      e.id = id;
      auto pick = [&](const std::map<std::string, fs::path>& role, const char* dir) {
        auto it = role.find(id);
        if (it == role.end()) {
          throw MissingFile("missing file for id '" + id + "': " + (root / dir / (id + ".png")).string());
        }
        return relative_to(it->second, root);
      };
      e.rainy = pick(rainy, kRainyDir);
      e.background = pick(background, kBackgroundDir);
      e.rain = pick(rain, kRainDir);
      manifest.entries.push_back(std::move(e));
    }
  } else {
    const char* role = kind == DatasetKind::kRealRainy ? kRainyDir : kBackgroundDir;
    for (const auto& [id, path] : list_images(role_dir(root, role))) {
      ManifestEntry e;
      e.id = id;
      (kind == DatasetKind::kRealRainy ? e.rainy : e.background) = relative_to(path, root);
      manifest.entries.push_back(std::move(e));
    }
  }

  // Every referenced file must decode; paired roles must agree in shape.
  for (const auto& e : manifest.entries) {
    std::optional<Image> first;
    for (const auto* p : {&e.rainy, &e.background, &e.rain}) {
      if (!*p) continue;
      Image img = load_image(manifest.resolve(**p));
      if (first && !first->same_shape(img)) {
        throw ShapeMismatch("triplet '" + e.id + "' has roles of different shapes");
      }
      if (!first) first = std::move(img);
    }
  }

  const fs::path existing = root / kManifestFileName;
  if (fs::exists(existing)) {
    const Manifest meta = load_manifest(existing);
    std::map<std::string, const ManifestEntry*> by_id;
    for (const auto& e : meta.entries) by_id[e.id] = &e;
    for (auto& e : manifest.entries) {
      auto it = by_id.find(e.id);
      if (it == by_id.end()) continue;
      e.mode = it->second->mode;
      e.seed = it->second->seed;
    }
  }

  if (manifest.entries.empty()) {
    manifest.warnings.push_back("no images found under " + root.string() + " for a " +
                                to_string(kind) + " dataset");
  }
  return manifest;
}

void save_manifest(const Manifest& manifest, const fs::path& file) {
  std::string out;
  for (const auto& e : manifest.entries) {
    json j;
    j["id"] = e.id;
    j["rainy"] = optional_path(e.rainy);
    j["background"] = optional_path(e.background);
    j["rain"] = optional_path(e.rain);
    j["mode"] = e.mode ? json(to_string(*e.mode)) : json(nullptr);
    j["seed"] = e.seed ? json(*e.seed) : json(nullptr);
    out += j.dump();
    out += '\n';
  }
  write_atomically(file, out);
}

Manifest load_manifest(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw MissingFile("cannot open manifest " + file.string());
  Manifest manifest;
  manifest.root = file.parent_path();
  std::set<std::string> seen;
  std::optional<DatasetKind> kind;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ManifestEntry e;
    try {
      const json j = json::parse(line);
      e.id = j.at("id").get<std::string>();
      e.rainy = read_path(j, "rainy");
      e.background = read_path(j, "background");
      e.rain = read_path(j, "rain");
      if (j.contains("mode") && !j.at("mode").is_null()) e.mode = parse_blend_mode(j.at("mode").get<std::string>());
      if (j.contains("seed") && !j.at("seed").is_null()) e.seed = j.at("seed").get<std::uint64_t>();
    } catch (const json::exception& ex) {
      throw DecodeError(file.string() + ":" + std::to_string(line_no) + ": " + ex.what());
    }
    DatasetKind entry_kind;
    if (e.rainy && e.background && e.rain) {
      entry_kind = DatasetKind::kPairedTriplets;
    } else if (e.rainy && !e.background && !e.rain) {
      entry_kind = DatasetKind::kRealRainy;
    } else if (e.background && !e.rainy && !e.rain) {
      entry_kind = DatasetKind::kRealClean;
    } else {
      throw DecodeError(file.string() + ":" + std::to_string(line_no) +
                        ": record has an unsupported combination of roles");
    }
    if (kind && *kind != entry_kind) {
      throw DecodeError(file.string() + ":" + std::to_string(line_no) + ": mixes dataset kinds");
    }
    kind = entry_kind;
    if (!seen.insert(e.id).second) throw DuplicateId("duplicate id '" + e.id + "' in " + file.string());
    manifest.entries.push_back(std::move(e));
  }
  manifest.kind = kind.value_or(DatasetKind::kPairedTriplets);
  std::sort(manifest.entries.begin(), manifest.entries.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });
  return manifest;
}

Manifest write_triplets(const fs::path& root, std::span<const Triplet> triplets,
                        std::size_t first_index) {
  Manifest manifest;
  manifest.root = root;
  const fs::path file = root / kManifestFileName;
  if (fs::exists(file)) manifest = load_manifest(file);
  manifest.root = root;
  manifest.kind = DatasetKind::kPairedTriplets;

  std::map<std::string, ManifestEntry> merged;
  for (auto& e : manifest.entries) merged[e.id] = std::move(e);
  for (std::size_t i = 0; i < triplets.size(); ++i) {
    const Triplet& t = triplets[i];
    const std::string id = format_id(first_index + i);
    ManifestEntry e;
    e.id = id;
    e.rainy = fs::path(kRainyDir) / (id + ".png");
    e.background = fs::path(kBackgroundDir) / (id + ".png");
    e.rain = fs::path(kRainDir) / (id + ".png");
    e.mode = t.mode;
    e.seed = t.seed;
    save_png(root / *e.rainy, t.rainy);
    save_png(root / *e.background, t.background);
    save_png(root / *e.rain, t.rain);
    merged[id] = std::move(e);
  }
  manifest.entries.clear();
  for (auto& [id, e] : merged) manifest.entries.push_back(std::move(e));
  save_manifest(manifest, file);
  return manifest;
}

Image ImageCache::load(const fs::path& path) {
  {
    std::lock_guard lock(mutex_);
    auto it = images_.find(path);
    if (it != images_.end()) return it->second;
  }
  Image img = load_image(path);
  std::lock_guard lock(mutex_);
  const std::size_t bytes = img.size() * sizeof(float);
  if (bytes_ + bytes <= max_bytes_) {
    images_.emplace(path, img);
    bytes_ += bytes;
  }
  return img;
}

Batch sample_batch(const Manifest& manifest, int n, int patch, std::uint64_t seed,
                   AugmentFlags augment, ImageCache* cache) {
  if (n < 1) throw InvalidParameter("batch size must be >= 1");
  if (patch < 1) throw InvalidParameter("patch size must be >= 1");
  if (manifest.empty()) throw InvalidParameter("cannot sample from an empty manifest");

  auto load = [&](const fs::path& rel) {
    const fs::path p = manifest.resolve(rel);
    return cache != nullptr ? cache->load(p) : load_image(p);
  };

  Rng rng(seed);
  std::vector<Image> rainy, background, rain;
  for (int j = 0; j < n; ++j) {
    const ManifestEntry& e = manifest.entries[rng.below(manifest.size())];
    std::array<std::optional<Image>, 3> roles;
    if (e.rainy) roles[0] = load(*e.rainy);
    if (e.background) roles[1] = load(*e.background);
    if (e.rain) roles[2] = load(*e.rain);
    const Image* ref = nullptr;
    for (auto& r : roles) {
      if (!r) continue;
      if (ref != nullptr && (ref->height() != r->height() || ref->width() != r->width())) {
        throw ShapeMismatch("entry '" + e.id + "' has roles of different sizes");
      }
      ref = &*r;
    }
    if (ref->height() < patch || ref->width() < patch) {
      throw ImageTooSmall("image '" + e.id + "' (" + shape_string(*ref) + ") is smaller than the " +
                          std::to_string(patch) + "px patch");
    }
    const int top = static_cast<int>(rng.below(static_cast<std::uint64_t>(ref->height() - patch) + 1));
    const int left = static_cast<int>(rng.below(static_cast<std::uint64_t>(ref->width() - patch) + 1));
    // Drawn unconditionally so toggling augmentation keeps crop positions.
    const bool flip = rng.uniform() < 0.5 && augment.horizontal_flip;
    std::array<std::vector<Image>*, 3> sinks{&rainy, &background, &rain};
    for (std::size_t r = 0; r < roles.size(); ++r) {
      if (!roles[r]) continue;
      Image c = roles[r]->crop(top, left, patch, patch);
      if (flip) c = c.flipped_horizontally();
      sinks[r]->push_back(std::move(c));
    }
  }

  // Mixed grey/colour inputs are promoted to colour.
  int channels = 1;
  for (const auto* v : {&rainy, &background, &rain})
    for (const auto& img : *v) channels = std::max(channels, img.channels());
  Batch batch;
  batch.size = n;
  auto stack = [&](std::vector<Image>& v, Tensor& out) {
    if (v.empty()) return;
    for (auto& img : v) img = img.with_channels(channels);
    out = to_tensor(v);
  };
  stack(rainy, batch.rainy);
  stack(background, batch.background);
  stack(rain, batch.rain);
  return batch;
}

Manifest crop_real_finetune_set(std::span<const Image> images, std::size_t count, int patch,
                                std::uint64_t seed, const fs::path& out_root) {
  if (images.empty()) throw InvalidParameter("need at least one real image");
  if (count < 1) throw InvalidParameter("crop count must be >= 1");
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].height() < patch || images[i].width() < patch) {
      throw ImageTooSmall("real image " + std::to_string(i) + " (" + shape_string(images[i]) +
                          ") is smaller than the " + std::to_string(patch) + "px patch");
    }
  }
  Manifest manifest;
  manifest.kind = DatasetKind::kRealRainy;
  manifest.root = out_root;
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t crop_seed = derive_seed(seed, i);
    Rng rng(crop_seed);
    const Image& src = images[i % images.size()];
    const int top = static_cast<int>(rng.below(static_cast<std::uint64_t>(src.height() - patch) + 1));
    const int left = static_cast<int>(rng.below(static_cast<std::uint64_t>(src.width() - patch) + 1));
    ManifestEntry e;
    e.id = format_id(i);
    e.rainy = fs::path(kRainyDir) / (e.id + ".png");
    e.seed = crop_seed;
    save_png(out_root / *e.rainy, src.crop(top, left, patch, patch));
    manifest.entries.push_back(std::move(e));
  }
  save_manifest(manifest, out_root / kManifestFileName);
  return manifest;
}

}  // namespace ddc
