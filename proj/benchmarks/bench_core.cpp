// Copyright 2026 The vqkv authors
// SPDX-License-Identifier: Apache-2.0
//
// Microbenchmarks for the hot paths: batched quantization, blockwise
// reconstruction and streaming attention over a mixed cache.

#include <benchmark/benchmark.h>

#include <random>

#include "test_util.hpp"
#include "vqkv/attention.hpp"
#include "vqkv/kv_cache.hpp"

using namespace vqkv;
using vqkv::testing::random_matrix;
using vqkv::testing::random_stack;

namespace {

void bm_quantize_batch(benchmark::State& state) {
    std::mt19937_64 rng(1);
    auto n = static_cast<size_t>(state.range(0));
    auto s = static_cast<uint32_t>(state.range(1));
    auto stack = random_stack(rng, n, s, 128);
    MatrixF xs = random_matrix(rng, 1024, 128);
    for (auto _ : state) {
        auto result = quantize_batch(stack, xs);
        benchmark::DoNotOptimize(result.codes.rows());
    }
    state.SetItemsProcessed(state.iterations() * xs.rows());
}
BENCHMARK(bm_quantize_batch)->Args({4, 256})->Args({8, 256})->Args({8, 1024});

void bm_reconstruct_block(benchmark::State& state) {
    std::mt19937_64 rng(2);
    auto stack = random_stack(rng, 8, 256, 128);
    MatrixF xs = random_matrix(rng, 4096, 128);
    auto batch = quantize_batch(stack, xs);
    for (auto _ : state) {
        MatrixF rows = reconstruct_block(stack, batch.codes, 0, 4096);
        benchmark::DoNotOptimize(rows.data());
    }
    state.SetItemsProcessed(state.iterations() * 4096);
}
BENCHMARK(bm_reconstruct_block);

void bm_attend(benchmark::State& state) {
    std::mt19937_64 rng(3);
    auto key_stack = random_stack(rng, 4, 256, 128, CacheKind::key);
    auto value_stack = random_stack(rng, 4, 256, 128, CacheKind::value);
    CacheState cache(key_stack, value_stack, WindowPolicy{4, 1024, false});
    auto len = static_cast<Eigen::Index>(state.range(0));
    cache.prefill(random_matrix(rng, len, 128), random_matrix(rng, len, 128));
    VectorF q = random_matrix(rng, 1, 128).row(0).transpose();
    AttentionConfig config;
    config.block_rows = 128;
    for (auto _ : state) {
        VectorF out = attend(cache, q, config);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * len);
}
BENCHMARK(bm_attend)->Arg(2048)->Arg(8192)->Arg(32768);

} // namespace

BENCHMARK_MAIN();
