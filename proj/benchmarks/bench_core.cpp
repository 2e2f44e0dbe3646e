#include <benchmark/benchmark.h>

#include "racam/cam.hpp"
#include "racam/data.hpp"
#include "racam/model.hpp"
#include "racam/ops.hpp"
#include "racam/postprocess.hpp"
#include "racam/rng.hpp"
#include "racam/tape.hpp"

namespace {

using namespace racam;

Tensor random_tensor(std::vector<int> shape, std::uint64_t seed, float lo = -1.0f, float hi = 1.0f) {
    SplitMix64 rng(seed);
    Tensor t(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

void BM_Conv2dForward(benchmark::State& state) {
    const int c = int(state.range(0));
    const Tensor x = random_tensor({c, 96, 288}, 1);
    const Tensor w = random_tensor({c, c, 3, 3}, 2);
    const Tensor b = random_tensor({c}, 3);
    for (auto _ : state) {
        benchmark::DoNotOptimize(conv2d(x, w, b, 1, 1));
    }
    state.SetItemsProcessed(state.iterations() * std::int64_t(c) * c * 9 * 96 * 288);
}
BENCHMARK(BM_Conv2dForward)->Arg(8)->Arg(16);

void BM_Conv2dBackward(benchmark::State& state) {
    const int c = int(state.range(0));
    const Tensor x = random_tensor({c, 96, 288}, 1);
    const Tensor w = random_tensor({c, c, 3, 3}, 2);
    const Tensor g = random_tensor({c, 96, 288}, 4);
    for (auto _ : state) {
        benchmark::DoNotOptimize(conv2d_backward(g, x, w, 1, 1));
    }
}
BENCHMARK(BM_Conv2dBackward)->Arg(8);

void BM_ClassifierForward(benchmark::State& state) {
    const ModelState m = tiny_vgg_init(7);
    const Tensor img = random_tensor({1, 96, 288}, 5, 0.0f, 1.0f);
    for (auto _ : state) {
        benchmark::DoNotOptimize(forward_logits(m, img));
    }
}
BENCHMARK(BM_ClassifierForward);

void BM_BackwardModes(benchmark::State& state) {
    const ModelState m = tiny_vgg_init(7);
    const Tensor img = random_tensor({1, 96, 288}, 5, 0.0f, 1.0f);
    const ForwardResult fr = forward(m, img);
    const PropagationMode modes[3] = {PropagationMode::standard(), PropagationMode::guided(),
                                      PropagationMode::filtered({})};
    const PropagationMode& mode = modes[state.range(0)];
    for (auto _ : state) {
        benchmark::DoNotOptimize(backward(fr.tape, 1, mode));
    }
}
BENCHMARK(BM_BackwardModes)->Arg(0)->Arg(1)->Arg(2);

void BM_RaCamHeatmap(benchmark::State& state) {
    const ModelState m = tiny_vgg_init(7);
    const Tensor img = random_tensor({1, 96, 288}, 5, 0.0f, 1.0f);
    CamRequest req;
    req.model = &m;
    req.image = img;
    req.class_index = 1;
    req.layers = m.spec.stage_end_act;
    req.method = CamMethod::RaCam;
    for (auto _ : state) {
        benchmark::DoNotOptimize(compute_cam(req));
    }
}
BENCHMARK(BM_RaCamHeatmap);

void BM_OtsuThreshold(benchmark::State& state) {
    const Tensor map = random_tensor({1, 96, 288}, 9, 0.0f, 1.0f);
    for (auto _ : state) {
        benchmark::DoNotOptimize(otsu_threshold(map));
    }
    state.SetItemsProcessed(state.iterations() * map.numel());
}
BENCHMARK(BM_OtsuThreshold);

void BM_GenerateSample(benchmark::State& state) {
    GenParams p;
    p.count = 1;
    for (auto _ : state) {
        p.seed++;
        benchmark::DoNotOptimize(generate(p));
    }
}
BENCHMARK(BM_GenerateSample);

}  // namespace

BENCHMARK_MAIN();
