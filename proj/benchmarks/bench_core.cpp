#include <benchmark/benchmark.h>

#include <random>

#include "facefuse/dam.hpp"
#include "facefuse/degrade.hpp"
#include "facefuse/evalkit.hpp"
#include "facefuse/faces.hpp"
#include "facefuse/nn/ops.hpp"
#include "facefuse/tgrn.hpp"
#include "facefuse/train.hpp"

using namespace facefuse;

namespace {

nn::Tensor<float> random_tensor(nn::Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.0f, 1.0f);
  nn::Tensor<float> t(shape);
  for (auto& v : t.values()) v = n(rng);
  return t;
}

void BM_Conv2dForwardBackward(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  auto x = nn::Var<float>::parameter(random_tensor({4, 16, side, side}, 1));
  auto w = nn::Var<float>::parameter(random_tensor({16, 16, 3, 3}, 2));
  auto b = nn::Var<float>::parameter(random_tensor({16}, 3));
  for (auto _ : state) {
    auto y = nn::conv2d(x, w, b, 1, 1);
    nn::backward(nn::mean(y));
    benchmark::DoNotOptimize(w.grad().values().data());
  }
  state.SetItemsProcessed(state.iterations() * 4);
}
BENCHMARK(BM_Conv2dForwardBackward)->Arg(32)->Arg(64);

void BM_LocalNcc(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  auto a = nn::Var<float>::parameter(random_tensor({4, 3, side, side}, 4));
  auto b = nn::Var<float>::parameter(random_tensor({4, 3, side, side}, 5));
  for (auto _ : state) {
    nn::backward(nn::local_ncc_loss(a, b, dam::kDefaultNccWindow));
    benchmark::DoNotOptimize(a.grad().values().data());
  }
}
BENCHMARK(BM_LocalNcc)->Arg(64)->Arg(128);

void BM_Warp(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const auto img = faces::synth_face(side, side, 1).image;
  const auto field = train::random_smooth_field(side, side, 3.0, 2);
  for (auto _ : state) benchmark::DoNotOptimize(dam::warp(img, field));
}
BENCHMARK(BM_Warp)->Arg(64)->Arg(256);

void BM_Degrade(benchmark::State& state) {
  const auto img = faces::synth_face(128, 128, 3).image;
  const auto params = degrade::sample_params(4);
  for (auto _ : state) benchmark::DoNotOptimize(degrade::degrade(img, params, 4));
}
BENCHMARK(BM_Degrade);

void BM_TgrnForward(benchmark::State& state) {
  const tgrn::TgrnNet net({}, 5);
  const auto i_f = faces::synth_face(64, 64, 6).image;
  const auto i_w = faces::synth_face(64, 64, 7).image;
  for (auto _ : state) benchmark::DoNotOptimize(tgrn::tgrn_forward(net, i_f, i_w));
}
BENCHMARK(BM_TgrnForward);

void BM_Ssim(benchmark::State& state) {
  const auto a = faces::synth_face(128, 128, 8).image;
  const auto b = degrade::add_gaussian_noise(a, 10.0, 9);
  for (auto _ : state) benchmark::DoNotOptimize(evalkit::ssim(a, b));
}
BENCHMARK(BM_Ssim);

}  // namespace

BENCHMARK_MAIN();
