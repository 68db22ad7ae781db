#include <benchmark/benchmark.h>

#include "tp3m/geomeval.hpp"
#include "tp3m/model.hpp"
#include "tp3m/ops.hpp"
#include "tp3m/rng.hpp"
#include "tp3m/synthgen.hpp"

namespace {

tp3m::Tensor random_tensor(std::vector<int> shape, tp3m::Rng& rng, bool rg = false) {
  tp3m::Tensor t = tp3m::Tensor::zeros(std::move(shape), rg);
  for (double& v : *t.data) v = rng.uniform(-1.0, 1.0);
  return t;
}

void BM_attention_forward(benchmark::State& state) {
  tp3m::Rng rng(1);
  const int n = static_cast<int>(state.range(0));
  tp3m::Tensor q = random_tensor({n, 64}, rng);
  tp3m::Tensor k = random_tensor({n, 64}, rng);
  tp3m::Tensor v = random_tensor({n, 64}, rng);
  tp3m::NoGradGuard ng;
  for (auto _ : state) {
    benchmark::DoNotOptimize(tp3m::attention(q, k, v));
  }
}
BENCHMARK(BM_attention_forward)->Arg(64)->Arg(256);

void BM_attention_backward(benchmark::State& state) {
  tp3m::Rng rng(1);
  const int n = static_cast<int>(state.range(0));
  for (auto _ : state) {
    tp3m::Tensor q = random_tensor({n, 64}, rng, true);
    tp3m::Tensor k = random_tensor({n, 64}, rng, true);
    tp3m::Tensor v = random_tensor({n, 64}, rng, true);
    tp3m::Tensor loss = tp3m::mean(tp3m::attention(q, k, v));
    loss.backward();
    benchmark::DoNotOptimize(loss);
  }
}
BENCHMARK(BM_attention_backward)->Arg(64)->Arg(256);

void BM_conv2d(benchmark::State& state) {
  tp3m::Rng rng(2);
  tp3m::Tensor x = random_tensor({16, 64, 64}, rng);
  tp3m::Tensor k = random_tensor({16, 16, 3, 3}, rng);
  tp3m::NoGradGuard ng;
  for (auto _ : state) {
    benchmark::DoNotOptimize(tp3m::conv2d(x, k, nullptr, 1, 1));
  }
}
BENCHMARK(BM_conv2d);

void BM_extract_pyramid(benchmark::State& state) {
  tp3m::Model model(7);
  tp3m::PerturbationSpec spec;
  const tp3m::SceneSample sample = tp3m::gen_planar(11, spec, 64);
  tp3m::NoGradGuard ng;
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.extractor.extract(sample.a));
  }
}
BENCHMARK(BM_extract_pyramid);

void BM_cascade_match(benchmark::State& state) {
  tp3m::Model model(7);
  tp3m::PerturbationSpec spec;
  const tp3m::SceneSample sample = tp3m::gen_planar(11, spec, 64);
  tp3m::NoGradGuard ng;
  tp3m::FeaturePyramid pa = model.extractor.extract(sample.a);
  tp3m::FeaturePyramid pb = model.extractor.extract(sample.b);
  tp3m::CascadeConfig cfg;
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.matcher2d.cascade_match(pa, pb, cfg));
  }
}
BENCHMARK(BM_cascade_match);

void BM_ransac_homography(benchmark::State& state) {
  tp3m::Rng rng(3);
  tp3m::Mat3 h;
  h << 1.02, 0.01, 3.0, -0.02, 0.99, -2.0, 1e-5, -1e-5, 1.0;
  std::vector<tp3m::Corr> corrs;
  for (int i = 0; i < 200; ++i) {
    const double xa = rng.uniform(0, 256), ya = rng.uniform(0, 256);
    if (i % 10 < 3) {
      corrs.push_back({xa, ya, rng.uniform(0, 256), rng.uniform(0, 256)});
    } else {
      const tp3m::Vec2 pb = tp3m::apply_homography(h, {xa, ya});
      corrs.push_back({xa, ya, pb.x(), pb.y()});
    }
  }
  tp3m::RansacConfig cfg;
  cfg.seed = 5;
  for (auto _ : state) {
    benchmark::DoNotOptimize(tp3m::estimate_homography(corrs, cfg));
  }
}
BENCHMARK(BM_ransac_homography);

}  // namespace

BENCHMARK_MAIN();
