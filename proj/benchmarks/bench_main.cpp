/*
 * Copyright (c) 2026, the Swintormer authors.  All rights reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <benchmark/benchmark.h>

#include "swt/cost.hpp"
#include "swt/pipeline.hpp"

using namespace swt;

namespace {

static void BM_MatMul(benchmark::State& state) {
    const std::int64_t n = state.range(0);
    std::mt19937_64 rng(1);
    const Tensor a = Tensor::randn({n, n}, rng);
    const Tensor b = Tensor::randn({n, n}, rng);
    for (auto _ : state) {
        Graph g(Graph::Mode::NoGrad);
        benchmark::DoNotOptimize(ops::matmul(g, g.constant(a), g.constant(b)).val().data());
    }
    state.SetItemsProcessed(state.iterations() * n * n * n);
}
BENCHMARK(BM_MatMul)->Arg(64)->Arg(128)->Arg(256);

static void BM_DwConv3x3(benchmark::State& state) {
    const std::int64_t n = state.range(0);
    std::mt19937_64 rng(2);
    const Tensor x = Tensor::randn({n, n, 16}, rng);
    const Tensor w = Tensor::randn({3, 3, 16}, rng);
    for (auto _ : state) {
        Graph g(Graph::Mode::NoGrad);
        benchmark::DoNotOptimize(ops::dwconv3x3(g, g.constant(x), g.constant(w)).val().data());
    }
    state.SetItemsProcessed(state.iterations() * 9 * n * n * 16);
}
BENCHMARK(BM_DwConv3x3)->Arg(64)->Arg(128);

static void BM_WindowRoundtrip(benchmark::State& state) {
    const std::int64_t n = state.range(0);
    std::mt19937_64 rng(3);
    const WindowLayout lo = make_window_layout(n, n, 16, 8);
    const Tensor x = Tensor::randn({n, n, 8}, rng);
    for (auto _ : state) {
        const Tensor wins = window_partition_tensor(x, lo);
        benchmark::DoNotOptimize(window_reverse_tensor(wins, lo).data());
    }
}
BENCHMARK(BM_WindowRoundtrip)->Arg(64)->Arg(160);

static void BM_SwdaBlockForward(benchmark::State& state) {
    const std::int64_t n = state.range(0);
    std::mt19937_64 rng(4);
    BlockConfig bc;
    bc.channels = 16;
    bc.window = 8;
    bc.shift = 4;
    SwdaParams params = init_swda_params(bc, rng);
    const Tensor x = Tensor::randn({n, n, bc.channels}, rng);
    for (auto _ : state) {
        Graph g(Graph::Mode::NoGrad);
        SwdaParamVars pv = bind_swda_params(g, params);
        benchmark::DoNotOptimize(swda_block(g, g.constant(x), pv, bc).val().data());
    }
}
BENCHMARK(BM_SwdaBlockForward)->Arg(32)->Arg(64);

static void BM_TinyModelForward(benchmark::State& state) {
    std::mt19937_64 rng(5);
    ModelConfig cfg;
    cfg.in_channels = 3;
    cfg.base_width = 8;
    cfg.blocks = {1, 1, 1, 1};
    cfg.window = 4;
    cfg.refinement_blocks = 0;
    const Model model = build_model(cfg, 1);
    const Tensor x = Tensor::uniform({64, 64, 3}, rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(model_apply(model, x).data());
    }
    state.SetItemsProcessed(state.iterations() *
                            static_cast<std::int64_t>(model_forward_macs(cfg, 64, 64)));
}
BENCHMARK(BM_TinyModelForward);

static void BM_MergeTiles(benchmark::State& state) {
    std::mt19937_64 rng(6);
    const TileGrid grid = make_tile_grid(256, 256, 64, 40);
    std::vector<Tensor> tiles;
    for (std::int64_t i = 0; i < grid.num_tiles(); ++i) {
        tiles.push_back(Tensor::randn({grid.tile_h, grid.tile_w, 3}, rng));
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(merge_tiles(tiles, grid).data());
    }
}
BENCHMARK(BM_MergeTiles);

static void BM_DdimSample(benchmark::State& state) {
    std::mt19937_64 rng(7);
    DenoiserConfig cfg;
    cfg.base_width = 8;
    cfg.blocks = {1, 1};
    cfg.window = 4;
    cfg.time_dim = 8;
    const Denoiser den = build_denoiser(cfg, 1);
    const DiffusionSchedule sched = default_schedule(10);
    const Tensor image = Tensor::uniform({32, 32, 3}, rng);
    const DenoiseFn fn = as_denoise_fn(den);
    for (auto _ : state) {
        std::mt19937_64 sample_rng(9);
        const Tensor start = Tensor::randn({32, 32, 3}, sample_rng);
        benchmark::DoNotOptimize(
            ddim_sample(start, fn, image, sched, 10, 0.0, sample_rng).data());
    }
}
BENCHMARK(BM_DdimSample);

}  // namespace

BENCHMARK_MAIN();
