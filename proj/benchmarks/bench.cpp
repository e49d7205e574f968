#include <benchmark/benchmark.h>

#include "menet/backbone.hpp"
#include "menet/f5c.hpp"
#include "menet/gradcheck.hpp"

using namespace menet;

namespace {

void bm_conv2d(benchmark::State& state) {
    Rng rng(1);
    Tensor x = random_uniform({8, 64, 64}, rng);
    Tensor w = random_uniform({32, 8, 3, 3}, rng, -0.1, 0.1);
    Tensor b = Tensor::zeros({32});
    for (auto _ : state) {
        Tape tape;
        benchmark::DoNotOptimize(conv2d(tape, x, w, b, {2, 2}, {1, 1}));
    }
}
BENCHMARK(bm_conv2d);

void bm_fcc_block(benchmark::State& state) {
    Rng rng(2);
    ParamStore store;
    FccParams p = FccParams::init(32, 16, 16, rng, store, "fcc");
    Tensor x = random_uniform({32, 16, 16}, rng);
    for (auto _ : state) {
        Tape tape;
        benchmark::DoNotOptimize(fcc_block(tape, x, p));
    }
}
BENCHMARK(bm_fcc_block);

void bm_ccc_forward(benchmark::State& state) {
    Rng rng(3);
    ParamStore store;
    CccParams p = CccParams::init(32, 16, 16, rng, store, "ccc");
    Tensor x = random_uniform({32, 16, 16}, rng);
    for (auto _ : state) {
        Tape tape;
        benchmark::DoNotOptimize(ccc_forward(tape, x, p, 4));
    }
}
BENCHMARK(bm_ccc_forward);

void bm_backbone(benchmark::State& state) {
    Rng rng(4);
    ParamStore store;
    BackboneParams p = BackboneParams::init(rng, store, "bb");
    Tensor x = random_uniform({1, 128, 128}, rng, 0.0, 1.0);
    for (auto _ : state) {
        Tape tape;
        benchmark::DoNotOptimize(rich_feature(tape, x, p));
    }
}
BENCHMARK(bm_backbone);

}  // namespace

BENCHMARK_MAIN();
