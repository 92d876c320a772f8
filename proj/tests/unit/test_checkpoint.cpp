#include <gtest/gtest.h>

#include <fstream>

#include "ddcnet/checkpoint.hpp"
#include "ddcnet/errors.hpp"
#include "ddcnet/trainer.hpp"
#include "fixtures.hpp"

namespace ddc {
namespace {

using testing::TempDir;
using testing::tiny_network_config;

TEST(Archive, WeightsRoundTripBitwise) {
  TempDir dir;
  const NetworkConfig cfg = tiny_network_config();
  const Weights w = init_weights(cfg, 3);
  save_weights(dir / "w.ckpt", cfg, w);
  EXPECT_EQ(load_weights(dir / "w.ckpt", cfg), w);
  const LoadedModel m = load_model(dir / "w.ckpt");
  EXPECT_EQ(m.config, cfg);
  EXPECT_EQ(m.weights, w);
  EXPECT_FALSE(std::filesystem::exists(dir.path() / "w.ckpt.tmp"));
}

TEST(Archive, RejectsConfigMismatchAndCorruption) {
  TempDir dir;
  const NetworkConfig cfg = tiny_network_config();
  save_weights(dir / "w.ckpt", cfg, zero_weights(cfg));
  NetworkConfig other = cfg;
  other.composition_channels = {4, 4};
  EXPECT_THROW(load_weights(dir / "w.ckpt", other), ConfigMismatch);
  EXPECT_THROW(load_model(dir / "missing.ckpt"), MissingFile);

  std::ofstream(dir / "junk.ckpt") << "definitely not an archive";
  EXPECT_THROW(load_model(dir / "junk.ckpt"), DecodeError);

  // Truncate a valid file.
  const auto size = std::filesystem::file_size(dir / "w.ckpt");
  std::filesystem::copy_file(dir / "w.ckpt", dir / "cut.ckpt");
  std::filesystem::resize_file(dir / "cut.ckpt", size / 2);
  EXPECT_THROW(load_model(dir / "cut.ckpt"), DecodeError);
}

TEST(Archive, RejectsUnknownVersion) {
  TempDir dir;
  const NetworkConfig cfg = tiny_network_config();
  save_weights(dir / "w.ckpt", cfg, zero_weights(cfg));
  std::fstream f(dir / "w.ckpt", std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(8);
  const char v[4] = {99, 0, 0, 0};
  f.write(v, 4);
  f.close();
  EXPECT_THROW(load_model(dir / "w.ckpt"), ConfigMismatch);
}

TEST(TrainingCheckpoint, RoundTripsOptimizerAndTrainerState) {
  TempDir dir;
  Checkpoint c;
  c.stage = Stage::kFinetune;
  c.iteration = 1234;
  c.network = tiny_network_config();
  c.weights = init_weights(c.network, 5);
  c.momentum.set("rain.head.weight", testing::random_tensor(c.weights.at("rain.head.weight").shape(), 1));
  c.seed = 42;
  c.train_config_hash = config_hash(TrainConfig{});
  c.loss_tail = {0.5, 0.25};
  c.warnings = {"something odd"};
  save_checkpoint(dir / "c.ckpt", c);
  const Checkpoint r = load_checkpoint(dir / "c.ckpt");
  EXPECT_EQ(r.stage, c.stage);
  EXPECT_EQ(r.iteration, c.iteration);
  EXPECT_EQ(r.network, c.network);
  EXPECT_EQ(r.weights, c.weights);
  EXPECT_EQ(r.momentum, c.momentum);
  EXPECT_EQ(r.seed, c.seed);
  EXPECT_EQ(r.train_config_hash, c.train_config_hash);
  EXPECT_EQ(r.loss_tail, c.loss_tail);
  EXPECT_EQ(r.warnings, c.warnings);
  // A training checkpoint is also a usable weight file.
  EXPECT_EQ(load_model(dir / "c.ckpt").weights, c.weights);
}

}  // namespace
}  // namespace ddc
