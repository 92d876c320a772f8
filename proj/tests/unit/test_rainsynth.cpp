#include <gtest/gtest.h>

#include <cmath>

#include "ddcnet/errors.hpp"
#include "ddcnet/rainsynth.hpp"
#include "ddcnet/rng.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

namespace ddc {
namespace {

using testing::random_image;

RainParams streak_params(double angle, std::uint64_t seed = 3) {
  RainParams p;
  p.density = 0.05;
  p.streak_length = 20;
  p.angle_deg = angle;
  p.intensity = 1.0;
  p.num_overlays = 1;
  p.seed = seed;
  return p;
}

TEST(RainLayer, RejectsOutOfRangeParameters) {
  RainParams p;
  p.density = 0.0;
  EXPECT_THROW(generate_rain_layer(64, 64, p), InvalidParameter);
  p = {};
  p.streak_length = 81;
  EXPECT_THROW(generate_rain_layer(128, 128, p), InvalidParameter);
  p = {};
  p.angle_deg = 31;
  EXPECT_THROW(generate_rain_layer(64, 64, p), InvalidParameter);
  p = {};
  p.num_overlays = 4;
  EXPECT_THROW(generate_rain_layer(64, 64, p), InvalidParameter);
  p = {};
  p.intensity = 0.0;
  EXPECT_THROW(generate_rain_layer(64, 64, p), InvalidParameter);
  p = {};
  p.streak_length = 40;
  EXPECT_THROW(generate_rain_layer(32, 64, p), InvalidParameter);
}

TEST(RainLayer, DeterministicInSeedAndRange) {
  RainParams p;
  p.seed = 7;
  const Image a = generate_rain_layer(64, 64, p);
  EXPECT_EQ(a, generate_rain_layer(64, 64, p));
  p.seed = 8;
  EXPECT_FALSE(a == generate_rain_layer(64, 64, p));
  EXPECT_NO_THROW(a.validate());
  float peak = 0.0f;
  for (float v : a.data()) peak = std::max(peak, v);
  EXPECT_NEAR(peak, p.intensity, 1e-6);
}

TEST(RainLayer, ReplicatesToColour) {
  RainParams p;
  const Image gray = generate_rain_layer(40, 48, p, 1);
  const Image rgb = generate_rain_layer(40, 48, p, 3);
  ASSERT_EQ(rgb.channels(), 3);
  for (int y = 0; y < 40; ++y)
    for (int x = 0; x < 48; ++x)
      for (int c = 0; c < 3; ++c) ASSERT_EQ(rgb.at(y, x, c), gray.at(y, x, 0));
}

TEST(RainLayer, VerticalStreaksAreVertical) {
  const Image layer = generate_rain_layer(128, 128, streak_params(0.0));
  EXPECT_NEAR(testing::streak_orientation_deg(layer), 0.0, 5.0);
}

class StreakAngle : public ::testing::TestWithParam<double> {};

TEST_P(StreakAngle, OrientationFollowsAngle) {
  // Pick the first seed that yields exactly one streak clear of the border.
  RainParams p = streak_params(GetParam());
  p.density = 1.0 / 4096.0;
  p.streak_length = 30;
  for (p.seed = 0; p.seed < 500; ++p.seed) {
    const Image layer = generate_rain_layer(64, 64, p);
    bool border = false;
    if (testing::count_blobs(layer, &border) != 1 || border) continue;
    EXPECT_NEAR(testing::streak_axis_deg(layer), GetParam(), 1.0);
    return;
  }
  FAIL() << "no single-streak layer found";
}

INSTANTIATE_TEST_SUITE_P(Angles, StreakAngle, ::testing::Values(-25.0, -10.0, 15.0, 30.0));

TEST(RainLayer, OverlaysAddCoverage) {
  RainParams p;
  p.seed = 4;
  auto coverage = [](const Image& img) {
    std::size_t n = 0;
    for (float v : img.data()) n += v > 0.05f;
    return n;
  };
  p.num_overlays = 1;
  const auto one = coverage(generate_rain_layer(96, 96, p));
  p.num_overlays = 3;
  EXPECT_GT(coverage(generate_rain_layer(96, 96, p)), one);
}

TEST(Blend, ScreenHandValues) {
  const Image half = Image::constant(4, 4, 3, 0.5f);
  const Image quarter_up = blend(half, half, BlendMode::kScreen);
  for (float v : quarter_up.data()) EXPECT_EQ(v, 0.75f);
  const Image b = random_image(8, 8, 3, 1);
  EXPECT_EQ(blend(b, Image::constant(8, 8, 3, 0.0f), BlendMode::kScreen), b);
  const Image white = blend(b, Image::constant(8, 8, 3, 1.0f), BlendMode::kScreen);
  for (float v : white.data()) EXPECT_EQ(v, 1.0f);
}

TEST(Blend, AdditiveClamps) {
  const Image out = blend(Image::constant(2, 2, 1, 0.9f), Image::constant(2, 2, 1, 0.3f), BlendMode::kAdditive);
  for (float v : out.data()) EXPECT_EQ(v, 1.0f);
  const Image small = blend(Image::constant(2, 2, 1, 0.25f), Image::constant(2, 2, 1, 0.5f), BlendMode::kAdditive);
  for (float v : small.data()) EXPECT_EQ(v, 0.75f);
}

TEST(Blend, ShapeMismatch) {
  EXPECT_THROW(blend(Image(4, 4, 3), Image(4, 5, 3), BlendMode::kScreen), ShapeMismatch);
  EXPECT_THROW(blend(Image(4, 4, 3), Image(4, 4, 1), BlendMode::kAdditive), ShapeMismatch);
}

// Randomised screen-blend algebra, including values at the ends of [0, 1].
TEST(Blend, ScreenAlgebraProperties) {
  Rng rng(12345);
  for (int trial = 0; trial < 1000; ++trial) {
    const Image b = random_image(4, 4, 3, rng.next_u64());
    Image r = random_image(4, 4, 3, rng.next_u64());
    if (trial % 10 == 0) r.at(0, 0, 0) = 0.0f;
    if (trial % 10 == 1) r.at(1, 1, 1) = 1.0f;
    const Image s = blend(b, r, BlendMode::kScreen);
    ASSERT_EQ(s, blend(r, b, BlendMode::kScreen));
    for (std::size_t i = 0; i < s.size(); ++i) {
      const float bv = b.data()[i], rv = r.data()[i], sv = s.data()[i];
      ASSERT_GE(sv, 0.0f);
      ASSERT_LE(sv, 1.0f);
      ASSERT_GE(sv, std::max(bv, rv));
      const double exact = static_cast<double>(bv) + rv - static_cast<double>(bv) * rv;
      const double ulp = std::nextafter(static_cast<float>(exact), 2.0f) - static_cast<float>(exact);
      ASSERT_LE(std::abs(sv - exact), 4 * ulp);
    }
  }
}

TEST(Synthesis, SingleTripletSatisfiesTheBlend) {
  const Image bg = procedural_background(224, 224, 0);
  SynthesisOptions opt;
  opt.seed = 0;
  const auto t = synthesize_dataset(std::span(&bg, 1), 1, opt);
  ASSERT_EQ(t.size(), 1u);
  EXPECT_EQ(t[0].rainy, blend(t[0].background, t[0].rain, BlendMode::kScreen));
  EXPECT_EQ(t[0].mode, BlendMode::kScreen);
}

TEST(Synthesis, CountCyclingAndDeterminism) {
  std::vector<Image> bgs{procedural_background(80, 96, 1), procedural_background(64, 64, 2)};
  SynthesisOptions opt;
  opt.crop = 48;
  opt.seed = 9;
  opt.mode = BlendMode::kAdditive;
  const auto a = synthesize_dataset(bgs, 7, opt);
  const auto b = synthesize_dataset(bgs, 7, opt);
  ASSERT_EQ(a.size(), 7u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].rainy, b[i].rainy);
    EXPECT_EQ(a[i].seed, b[i].seed);
    EXPECT_EQ(a[i].rainy.height(), 48);
    EXPECT_EQ(a[i].rainy, blend(a[i].background, a[i].rain, BlendMode::kAdditive));
  }
  opt.seed = 10;
  EXPECT_FALSE(synthesize_dataset(bgs, 7, opt)[0].rainy == a[0].rainy);
}

TEST(Synthesis, QuantizedInputsSurviveEightBitStorage) {
  const Image bg = procedural_background(64, 64, 3);
  SynthesisOptions opt;
  opt.crop = 64;
  for (const auto& t : synthesize_dataset(std::span(&bg, 1), 3, opt)) {
    EXPECT_EQ(t.background, quantize_8bit(t.background));
    EXPECT_EQ(t.rain, quantize_8bit(t.rain));
  }
}

TEST(Synthesis, Errors) {
  SynthesisOptions opt;
  EXPECT_THROW(synthesize_dataset({}, 3, opt), InvalidParameter);
  const Image small = procedural_background(100, 100, 0);
  EXPECT_THROW(synthesize_dataset(std::span(&small, 1), 1, opt), ImageTooSmall);
  opt.ranges.density_max = 0.5;
  const Image bg = procedural_background(224, 224, 0);
  EXPECT_THROW(synthesize_dataset(std::span(&bg, 1), 1, opt), InvalidParameter);
}

TEST(Synthesis, SampledParametersStayInRange) {
  const RainParamRanges ranges;
  for (std::uint64_t s = 0; s < 200; ++s) {
    const RainParams p = ranges.sample(s);
    EXPECT_NO_THROW(p.validate());
    EXPECT_GE(p.density, ranges.density_min);
    EXPECT_LE(p.density, ranges.density_max);
    EXPECT_GE(p.streak_length, ranges.length_min);
    EXPECT_LE(p.streak_length, ranges.length_max);
    EXPECT_GE(p.num_overlays, ranges.overlays_min);
    EXPECT_LE(p.num_overlays, ranges.overlays_max);
  }
}

TEST(BlendModeNames, RoundTrip) {
  for (BlendMode m : {BlendMode::kScreen, BlendMode::kAdditive}) EXPECT_EQ(parse_blend_mode(to_string(m)), m);
  EXPECT_THROW(parse_blend_mode("multiply"), InvalidParameter);
}

}  // namespace
}  // namespace ddc
