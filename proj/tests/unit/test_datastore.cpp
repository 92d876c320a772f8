#include <gtest/gtest.h>

#include <fstream>

#include "ddcnet/datastore.hpp"
#include "ddcnet/errors.hpp"
#include "ddcnet/image_io.hpp"
#include "fixtures.hpp"

namespace ddc {
namespace {

namespace fs = std::filesystem;
using testing::TempDir;

std::vector<Triplet> small_triplets(std::size_t count, int size = 48, std::uint64_t seed = 1) {
  std::vector<Image> bgs{procedural_background(size + 16, size + 8, seed)};
  SynthesisOptions opt;
  opt.crop = size;
  opt.seed = seed;
  return synthesize_dataset(bgs, count, opt);
}

TEST(ImageIo, PngRoundTripIsExactForQuantizedImages) {
  TempDir dir;
  const Image img = quantize_8bit(testing::random_image(9, 7, 3, 1));
  save_png(dir / "a.png", img);
  EXPECT_EQ(load_image(dir / "a.png"), img);
  const Image gray = quantize_8bit(testing::random_image(5, 6, 1, 2));
  save_png(dir / "g.png", gray);
  EXPECT_EQ(load_image(dir / "g.png"), gray);
}

TEST(ImageIo, Errors) {
  TempDir dir;
  EXPECT_THROW(load_image(dir / "missing.png"), MissingFile);
  std::ofstream(dir / "bad.png") << "not a png";
  try {
    load_image(dir / "bad.png");
    FAIL();
  } catch (const DecodeError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.png"), std::string::npos);
  }
}

TEST(Manifest, WriteBuildLoadAgree) {
  TempDir dir;
  const auto triplets = small_triplets(5);
  const Manifest written = write_triplets(dir.path(), triplets);
  ASSERT_EQ(written.size(), 5u);
  const Manifest built = build_manifest(dir.path(), DatasetKind::kPairedTriplets);
  const Manifest loaded = load_manifest(dir / kManifestFileName);
  EXPECT_EQ(built.entries, written.entries);
  EXPECT_EQ(loaded.entries, written.entries);
  EXPECT_EQ(loaded.kind, DatasetKind::kPairedTriplets);
  EXPECT_EQ(built.entries[0].mode, BlendMode::kScreen);
  EXPECT_EQ(built.entries[3].seed, triplets[3].seed);
  for (std::size_t i = 1; i < built.size(); ++i) EXPECT_LT(built.entries[i - 1].id, built.entries[i].id);
}

TEST(Manifest, RecordsHaveTheDocumentedFields) {
  TempDir dir;
  write_triplets(dir.path(), small_triplets(1));
  std::ifstream in(dir / kManifestFileName);
  std::string line;
  std::getline(in, line);
  const auto j = nlohmann::json::parse(line);
  for (const char* key : {"id", "rainy", "background", "rain", "mode", "seed"}) EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_EQ(j["rainy"], "rainy/000000.png");
}

TEST(Manifest, EmptyDirectoryWarns) {
  TempDir dir;
  const Manifest m = build_manifest(dir.path(), DatasetKind::kPairedTriplets);
  EXPECT_TRUE(m.empty());
  EXPECT_EQ(m.warnings.size(), 1u);
}

TEST(Manifest, CorruptImageIsNamed) {
  TempDir dir;
  write_triplets(dir.path(), small_triplets(2));
  std::ofstream(dir / "rain" / "000001.png", std::ios::trunc) << "garbage";
  try {
    build_manifest(dir.path(), DatasetKind::kPairedTriplets);
    FAIL();
  } catch (const DecodeError& e) {
    EXPECT_NE(std::string(e.what()).find("000001.png"), std::string::npos);
  }
}

TEST(Manifest, MissingRoleAndDuplicateIds) {
  TempDir dir;
  write_triplets(dir.path(), small_triplets(2));
  fs::remove(dir / "background" / "000000.png");
  EXPECT_THROW(build_manifest(dir.path(), DatasetKind::kPairedTriplets), MissingFile);

  TempDir dup;
  const Image img = quantize_8bit(testing::random_image(8, 8, 3, 3));
  save_png(dup / "x.png", img);
  save_png(dup / "x.jpg", img);
  EXPECT_THROW(build_manifest(dup.path(), DatasetKind::kRealClean), DuplicateId);

  TempDir lines;
  std::ofstream(lines / "m.jsonl") << R"({"id":"a","rainy":"a.png","background":null,"rain":null})" << "\n"
                                   << R"({"id":"a","rainy":"b.png","background":null,"rain":null})" << "\n";
  EXPECT_THROW(load_manifest(lines / "m.jsonl"), DuplicateId);
  EXPECT_THROW(build_manifest(lines / "nope", DatasetKind::kRealRainy), MissingFile);
}

TEST(Manifest, RealSetsUseRoleDirectoryOrRoot) {
  TempDir flat, nested;
  const Image img = quantize_8bit(testing::random_image(40, 40, 3, 4));
  save_png(flat / "b.png", img);
  save_png(flat / "a.png", img);
  save_png(nested / "rainy" / "c.png", img);
  const Manifest clean = build_manifest(flat.path(), DatasetKind::kRealClean);
  ASSERT_EQ(clean.size(), 2u);
  EXPECT_EQ(clean.entries[0].id, "a");
  EXPECT_TRUE(clean.entries[0].background.has_value());
  const Manifest rainy = build_manifest(nested.path(), DatasetKind::kRealRainy);
  ASSERT_EQ(rainy.size(), 1u);
  EXPECT_EQ(rainy.primary_path(rainy.entries[0]), nested / "rainy" / "c.png");
  save_manifest(rainy, nested / "m.jsonl");
  EXPECT_EQ(load_manifest(nested / "m.jsonl").kind, DatasetKind::kRealRainy);
}

TEST(Batch, PairedShapesAndDeterminism) {
  TempDir dir;
  const Manifest m = write_triplets(dir.path(), small_triplets(6, 64));
  const Batch a = sample_batch(m, 8, 32, 5);
  EXPECT_EQ(a.size, 8);
  for (const Tensor* t : {&a.rainy, &a.background, &a.rain}) EXPECT_EQ(t->shape(), (Shape{8, 3, 32, 32}));
  const Batch b = sample_batch(m, 8, 32, 5);
  EXPECT_EQ(a.rainy, b.rainy);
  EXPECT_EQ(a.rain, b.rain);
  EXPECT_FALSE(sample_batch(m, 8, 32, 6).rainy == a.rainy);
}

TEST(Batch, CropsStayAlignedAcrossRoles) {
  TempDir dir;
  const Manifest m = write_triplets(dir.path(), small_triplets(4, 64));
  ImageCache cache;
  for (bool flip : {false, true}) {
    const Batch batch = sample_batch(m, 6, 40, 9, {flip}, &cache);
    for (std::size_t i = 0; i < batch.rainy.size(); ++i) {
      const float expected = screen(batch.background.ptr()[i], batch.rain.ptr()[i]);
      ASSERT_NEAR(batch.rainy.ptr()[i], expected, 1.0 / 255 + 1e-6);
    }
  }
}

TEST(Batch, FlipKeepsCropPositions) {
  TempDir dir;
  const Manifest m = write_triplets(dir.path(), small_triplets(3, 64));
  const Batch plain = sample_batch(m, 4, 32, 3, {false});
  const Batch flipped = sample_batch(m, 4, 32, 3, {true});
  for (int n = 0; n < 4; ++n) {
    bool same = true, mirrored = true;
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) {
        same &= plain.rainy.at(n, 0, y, x) == flipped.rainy.at(n, 0, y, x);
        mirrored &= plain.rainy.at(n, 0, y, x) == flipped.rainy.at(n, 0, y, 31 - x);
      }
    EXPECT_TRUE(same || mirrored) << n;
  }
}

TEST(Batch, RealSetsFillOneRole) {
  TempDir dir;
  const Image img = quantize_8bit(testing::random_image(48, 48, 3, 5));
  save_png(dir / "rainy" / "r.png", img);
  const Batch b = sample_batch(build_manifest(dir.path(), DatasetKind::kRealRainy), 3, 32, 1);
  EXPECT_EQ(b.rainy.shape(), (Shape{3, 3, 32, 32}));
  EXPECT_TRUE(b.background.empty());
  EXPECT_TRUE(b.rain.empty());
}

TEST(Batch, Errors) {
  TempDir dir;
  const Manifest m = write_triplets(dir.path(), small_triplets(1, 32));
  EXPECT_THROW(sample_batch(m, 1, 64, 0), ImageTooSmall);
  EXPECT_THROW(sample_batch(m, 0, 16, 0), InvalidParameter);
  EXPECT_THROW(sample_batch(Manifest{}, 1, 16, 0), InvalidParameter);
}

TEST(FinetuneCrops, CountsIdentityAndErrors) {
  TempDir dir;
  std::vector<Image> images;
  for (int i = 0; i < 3; ++i) images.push_back(quantize_8bit(testing::random_image(60, 70, 3, 10 + i)));
  const Manifest m = crop_real_finetune_set(images, 10, 32, 4, dir.path());
  EXPECT_EQ(m.size(), 10u);
  EXPECT_EQ(m.kind, DatasetKind::kRealRainy);
  EXPECT_EQ(load_manifest(dir / kManifestFileName).size(), 10u);

  TempDir one;
  const Image exact = quantize_8bit(testing::random_image(32, 32, 3, 20));
  const Manifest single = crop_real_finetune_set(std::span(&exact, 1), 1, 32, 0, one.path());
  EXPECT_EQ(load_image(single.primary_path(single.entries[0])), exact);

  const Image small = testing::random_image(20, 20, 3, 21);
  EXPECT_THROW(crop_real_finetune_set(std::span(&small, 1), 1, 32, 0, one.path()), ImageTooSmall);
}

}  // namespace
}  // namespace ddc
