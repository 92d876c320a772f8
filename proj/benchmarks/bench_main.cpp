#include <benchmark/benchmark.h>

#include "ddcnet/layers.hpp"
#include "ddcnet/metrics.hpp"
#include "ddcnet/network.hpp"
#include "ddcnet/rainsynth.hpp"
#include "ddcnet/rng.hpp"

namespace {

using namespace ddc;

Tensor filled(Shape s, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(s);
  for (float& v : t.data()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return t;
}

Image noise_image(int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  Image img(h, w, 3);
  for (float& v : img.data()) v = static_cast<float>(rng.uniform());
  return img;
}

// 3x3 same-size conv; args: spatial size, channels.
void BM_Conv3x3(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const int ch = static_cast<int>(state.range(1));
  const Tensor x = filled(Shape{1, ch, size, size}, 1);
  const Tensor w = filled(Shape{ch, ch, 3, 3}, 2);
  const Tensor b(Shape{ch, 1, 1, 1});
  for (auto _ : state) benchmark::DoNotOptimize(nn::conv2d(x, w, b, {3, 1, 1, 1}));
  state.SetItemsProcessed(state.iterations() * 2LL * size * size * ch * ch * 9);
}
BENCHMARK(BM_Conv3x3)->Args({112, 64})->Args({56, 128})->Args({28, 256})->Unit(benchmark::kMillisecond);

void BM_Conv3x3Backward(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const int ch = static_cast<int>(state.range(1));
  const Tensor x = filled(Shape{1, ch, size, size}, 1);
  const Tensor w = filled(Shape{ch, ch, 3, 3}, 2);
  const Tensor dy = filled(Shape{1, ch, size, size}, 3);
  Tensor dx, dw(w.shape()), db(Shape{ch, 1, 1, 1});
  for (auto _ : state) {
    nn::conv2d_backward(x, w, dy, {3, 1, 1, 1}, &dx, &dw, &db);
    benchmark::DoNotOptimize(dx);
  }
}
BENCHMARK(BM_Conv3x3Backward)->Args({56, 64})->Unit(benchmark::kMillisecond);

// Full-width inference at the two standard test sizes.
void BM_Derain(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const NetworkConfig cfg;
  const Weights w = init_weights(cfg, 1);
  const Image img = noise_image(size, size, 4);
  for (auto _ : state) benchmark::DoNotOptimize(derain(img, w, cfg));
}
BENCHMARK(BM_Derain)->Arg(250)->Arg(500)->Unit(benchmark::kSecond)->Iterations(2);

void BM_ScreenBlend(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const Image b = noise_image(size, size, 5), r = noise_image(size, size, 6);
  for (auto _ : state) benchmark::DoNotOptimize(blend(b, r, BlendMode::kScreen));
  state.SetItemsProcessed(state.iterations() * b.size());
}
BENCHMARK(BM_ScreenBlend)->Arg(224)->Arg(512);

void BM_RainLayer(benchmark::State& state) {
  RainParams p;
  p.streak_length = 30;
  p.num_overlays = 3;
  for (auto _ : state) benchmark::DoNotOptimize(generate_rain_layer(224, 224, p));
}
BENCHMARK(BM_RainLayer)->Unit(benchmark::kMillisecond);

void BM_Ssim(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const Image x = noise_image(size, size, 7), y = noise_image(size, size, 8);
  for (auto _ : state) benchmark::DoNotOptimize(ssim(x, y));
}
BENCHMARK(BM_Ssim)->Arg(250)->Arg(500)->Unit(benchmark::kMillisecond);

}  // namespace

// libbenchmark_main in the system package is LTO bytecode from another
// compiler release, so the main comes from the header macro instead.
BENCHMARK_MAIN();
