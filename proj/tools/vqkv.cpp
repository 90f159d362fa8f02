// Copyright 2026 The vqkv authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: dataset generation, codebook training,
// compression round-trips, ratio tables and the bench harness.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vqkv/attention.hpp"
#include "vqkv/kv_cache.hpp"
#include "vqkv/ratio.hpp"
#include "vqkv/synthetic.hpp"
#include "vqkv/trainer.hpp"

namespace {

using namespace vqkv;

constexpr char kCodesMagic[4] = {'V', 'Q', 'C', 'M'};

std::vector<uint32_t> parse_stage_sizes(const std::string& spec) {
    std::vector<uint32_t> sizes;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
        sizes.push_back(static_cast<uint32_t>(std::stoul(item)));
    }
    if (sizes.empty()) {
        throw InvalidInput("--stages needs at least one size");
    }
    return sizes;
}

SyntheticKind parse_kind(const std::string& name) {
    if (name == "gaussian_mixture") {
        return SyntheticKind::gaussian_mixture;
    }
    if (name == "rope_rotated_keys") {
        return SyntheticKind::rope_rotated_keys;
    }
    throw InvalidInput("unknown kind '" + name + "'");
}

// "key=value,key=value" descriptor used by bench --spec.
SyntheticSpec parse_spec(const std::string& text) {
    SyntheticSpec spec;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        auto eq = item.find('=');
        if (eq == std::string::npos) {
            throw InvalidInput("bad --spec entry '" + item + "', expected key=value");
        }
        std::string key = item.substr(0, eq);
        std::string value = item.substr(eq + 1);
        if (key == "kind") {
            spec.kind = parse_kind(value);
        } else if (key == "components") {
            spec.component_count = static_cast<uint32_t>(std::stoul(value));
        } else if (key == "seed") {
            spec.seed = std::stoull(value);
        } else if (key == "std") {
            spec.component_std = std::stof(value);
        } else if (key == "mean_scale") {
            spec.mean_scale = std::stof(value);
        } else if (key == "rope_base") {
            spec.rope_base = std::stod(value);
        } else {
            throw InvalidInput("unknown --spec key '" + key + "'");
        }
    }
    return spec;
}

void print_ratio(const RatioConfig& config, bool precise) {
    double r = compression_ratio_percent(config);
    if (precise) {
        std::printf("ratio nk=%u sk=%u nv=%u sv=%u dk=%u dv=%u percent=%.6f\n", config.n_key,
                    config.s_key, config.n_value, config.s_value, config.d_key, config.d_value, r);
    } else {
        std::printf("%.1f%%\n", r);
    }
}

int cmd_ratio(const RatioConfig& config, bool precise) {
    print_ratio(config, precise);
    return 0;
}

int cmd_gen(const SyntheticSpec& spec, const std::string& out_path) {
    VectorDataset data = generate(spec);
    save_dataset(data, out_path);
    std::printf("gen kind=%s dim=%lld count=%lld out=%s\n",
                spec.kind == SyntheticKind::gaussian_mixture ? "gaussian_mixture"
                                                             : "rope_rotated_keys",
                static_cast<long long>(spec.dim), static_cast<long long>(spec.count),
                out_path.c_str());
    return 0;
}

int cmd_train(const std::string& data_path, const std::string& stages, const TrainConfig& config,
              CacheKind kind, const std::string& out_path) {
    VectorDataset data = load_dataset(data_path);
    std::vector<uint32_t> sizes = parse_stage_sizes(stages);
    TrainResult result = train(data, sizes, config, kind);
    save_stack(result.stack, out_path);
    for (size_t e = 0; e < result.report.per_epoch_loss.size(); ++e) {
        std::printf("epoch index=%zu loss=%.8g\n", e + 1, result.report.per_epoch_loss[e]);
    }
    for (size_t i = 0; i < result.report.per_stage_mse.size(); ++i) {
        std::printf("stage index=%zu holdout_mse=%.8g\n", i + 1, result.report.per_stage_mse[i]);
    }
    std::printf("train final_mse=%.8g stack=%s\n", result.report.final_mse, out_path.c_str());
    return 0;
}

int cmd_compress(const std::string& data_path, const std::string& stack_path,
                 const std::string& out_path) {
    VectorDataset data = load_dataset(data_path);
    CodebookStack stack = load_stack(stack_path);
    if (data.dim() != stack.dim()) {
        throw InvalidInput("dataset dimension does not match stack dimension");
    }
    QuantizeBatchResult result = quantize_batch(stack, data.payload);
    std::ofstream out(out_path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open " + out_path + " for writing");
    }
    out.write(kCodesMagic, 4);
    result.codes.save(out);
    if (!out) {
        throw IoError("write failed for " + out_path);
    }
    double mse = result.residual_norms.cast<double>().array().square().mean();
    std::printf("compress rows=%zu payload_bits=%zu mse=%.8g out=%s\n", result.codes.rows(),
                result.codes.payload_bits(), mse, out_path.c_str());
    return 0;
}

int cmd_stats_config(const std::string& config_text, bool precise) {
    std::vector<uint32_t> v;
    std::stringstream ss(config_text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        v.push_back(static_cast<uint32_t>(std::stoul(item)));
    }
    if (v.size() != 4 && v.size() != 6) {
        throw InvalidInput("--config expects nk,sk,nv,sv[,dk,dv]");
    }
    RatioConfig config{v[0], v[1], v[2], v[3], v.size() == 6 ? v[4] : 128u,
                       v.size() == 6 ? v[5] : 128u};
    print_ratio(config, precise);
    return 0;
}

int cmd_stats_snapshot(const std::string& snapshot_path, const std::string& key_stack_path,
                       const std::string& value_stack_path) {
    CodebookStack key_stack = load_stack(key_stack_path);
    CodebookStack value_stack = load_stack(value_stack_path);
    CacheState state = CacheState::load_snapshot(snapshot_path, key_stack, value_stack);
    MemoryReport report = state.memory_report();
    std::printf("segments init=%zu compressed=%zu pending=%zu local=%zu total=%zu\n",
                state.init_rows(), state.compressed_rows(), state.pending_rows(),
                state.local_rows(), state.total_len());
    std::printf("memory raw_bytes_equivalent=%zu compressed_payload_bits=%zu "
                "codebook_overhead_bytes=%zu effective_ratio=%.6f\n",
                report.raw_bytes_equivalent, report.compressed_payload_bits,
                report.codebook_overhead_bytes, report.effective_ratio);
    return 0;
}

int cmd_bench(const std::string& spec_text, const std::string& key_stack_path,
              const std::string& value_stack_path, size_t init_len, size_t local_len,
              size_t tokens, size_t prefill_len, size_t num_queries, size_t block_rows,
              size_t checkpoint_every, bool eager) {
    CodebookStack key_stack = load_stack(key_stack_path);
    CodebookStack value_stack = load_stack(value_stack_path);

    SyntheticSpec key_spec = parse_spec(spec_text);
    key_spec.dim = key_stack.dim();
    key_spec.count = static_cast<Eigen::Index>(tokens);
    SyntheticSpec value_spec = key_spec;
    value_spec.kind = SyntheticKind::gaussian_mixture;
    value_spec.dim = value_stack.dim();
    value_spec.seed = key_spec.seed + 1;
    MatrixF keys = generate(key_spec).payload;
    MatrixF values = generate(value_spec).payload;

    WindowPolicy policy{init_len, local_len, eager};
    CacheState state(key_stack, value_stack, policy);
    prefill_len = std::min(std::max<size_t>(prefill_len, 1), tokens);
    state.prefill(keys.topRows(static_cast<Eigen::Index>(prefill_len)),
                  values.topRows(static_cast<Eigen::Index>(prefill_len)));

    auto emit_checkpoint = [&]() {
        MemoryReport report = state.memory_report();
        std::printf("checkpoint tokens=%zu init=%zu compressed=%zu pending=%zu local=%zu "
                    "batched_compressions=%zu raw_bytes_equivalent=%zu "
                    "compressed_payload_bits=%zu codebook_overhead_bytes=%zu "
                    "effective_ratio=%.6f\n",
                    state.total_len(), state.init_rows(), state.compressed_rows(),
                    state.pending_rows(), state.local_rows(), state.batched_compressions(),
                    report.raw_bytes_equivalent, report.compressed_payload_bits,
                    report.codebook_overhead_bytes, report.effective_ratio);
    };

    emit_checkpoint();
    for (size_t t = prefill_len; t < tokens; ++t) {
        state.append_token(keys.row(static_cast<Eigen::Index>(t)).transpose(),
                           values.row(static_cast<Eigen::Index>(t)).transpose());
        if (checkpoint_every > 0 && (t + 1 - prefill_len) % checkpoint_every == 0) {
            emit_checkpoint();
        }
    }
    emit_checkpoint();

    std::mt19937_64 rng(key_spec.seed ^ 0x9e3779b97f4a7c15ull);
    std::normal_distribution<float> gauss(0.0f, 1.0f);
    MatrixF queries(static_cast<Eigen::Index>(num_queries), key_stack.dim());
    for (Eigen::Index i = 0; i < queries.size(); ++i) {
        queries.data()[i] = gauss(rng);
    }

    AttentionConfig attn;
    attn.block_rows = block_rows;
    FidelityReport fid = fidelity(state, keys, values, queries, attn);

    AttendStats stats;
    attend(state, queries.row(0).transpose(), attn, &stats);
    size_t budget =
            block_rows * static_cast<size_t>(key_stack.dim() + value_stack.dim());
    std::printf("fidelity queries=%zu output_max_abs_err=%.8g output_mean_cosine=%.8f "
                "key_intermediate_mse=%.8g value_intermediate_mse=%.8g\n",
                num_queries, fid.output_max_abs_err, fid.output_mean_cosine,
                fid.key_intermediate_mse, fid.value_intermediate_mse);
    std::printf("working_set peak_reconstructed_scalars=%zu budget_scalars=%zu within_budget=%d\n",
                stats.peak_reconstructed_scalars, budget,
                stats.peak_reconstructed_scalars <= budget ? 1 : 0);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Residual-VQ KV cache compression toolkit"};
    app.require_subcommand(1);

    // ratio
    RatioConfig ratio_config;
    bool precise = false;
    auto* ratio = app.add_subcommand("ratio", "Compression ratio for a codebook geometry");
    ratio->add_option("--nk", ratio_config.n_key, "Key codebook count")->required();
    ratio->add_option("--sk", ratio_config.s_key, "Key codebook size")->required();
    ratio->add_option("--nv", ratio_config.n_value, "Value codebook count")->required();
    ratio->add_option("--sv", ratio_config.s_value, "Value codebook size")->required();
    ratio->add_option("--dk", ratio_config.d_key, "Key head dimension");
    ratio->add_option("--dv", ratio_config.d_value, "Value head dimension");
    ratio->add_flag("--precise", precise, "Print full precision");

    // gen
    SyntheticSpec gen_spec;
    std::string gen_kind = "gaussian_mixture";
    std::string gen_out;
    auto* gen = app.add_subcommand("gen", "Generate a synthetic vector dataset");
    gen->add_option("--kind", gen_kind, "gaussian_mixture or rope_rotated_keys");
    gen->add_option("--dim", gen_spec.dim, "Vector dimension");
    gen->add_option("--count", gen_spec.count, "Number of vectors")->required();
    gen->add_option("--components", gen_spec.component_count, "Mixture component count");
    gen->add_option("--seed", gen_spec.seed, "RNG seed");
    gen->add_option("--std", gen_spec.component_std, "Within-component std");
    gen->add_option("--mean-scale", gen_spec.mean_scale, "Component mean scale");
    gen->add_option("--rope-base", gen_spec.rope_base, "Rotary frequency base");
    gen->add_option("--out", gen_out, "Output path")->required();

    // train
    std::string train_data, train_stages, train_out, train_kind = "key";
    TrainConfig train_config;
    auto* tr = app.add_subcommand("train", "Train a codebook stack on a dataset");
    tr->add_option("--data", train_data, "VECD dataset path")->required();
    tr->add_option("--stages", train_stages, "Comma-separated codebook sizes, one per stage")
            ->required();
    tr->add_option("--lr", train_config.learning_rate, "Learning rate");
    tr->add_option("--batch", train_config.batch_size, "Batch size");
    tr->add_option("--epochs", train_config.epochs, "Epoch count");
    tr->add_option("--beta", train_config.beta, "Codebook-pull weight");
    tr->add_option("--gamma", train_config.gamma, "Commitment weight");
    tr->add_option("--seed", train_config.seed, "RNG seed");
    tr->add_option("--init-scale", train_config.init_scale, "Entry init scale");
    tr->add_option("--kind", train_kind, "key or value");
    tr->add_flag("--train-entries", train_config.train_entries,
                 "Also train raw entries (ablation)");
    tr->add_flag("--square-commitment", train_config.square_commitment,
                 "Square the commitment term");
    tr->add_option("--out", train_out, "Output stack path")->required();

    // compress
    std::string comp_data, comp_stack, comp_out;
    auto* comp = app.add_subcommand("compress", "Quantize a dataset with a trained stack");
    comp->add_option("--data", comp_data, "VECD dataset path")->required();
    comp->add_option("--stack", comp_stack, "RSVQ stack path")->required();
    comp->add_option("--out", comp_out, "Output code-matrix path")->required();

    // stats
    std::string stats_config, stats_snapshot, stats_key_stack, stats_value_stack;
    bool stats_precise = false;
    auto* stats = app.add_subcommand("stats", "Ratio table or snapshot memory report");
    stats->add_option("--config", stats_config, "nk,sk,nv,sv[,dk,dv]");
    stats->add_option("--snapshot", stats_snapshot, "Cache snapshot path");
    stats->add_option("--key-stack", stats_key_stack, "Key stack for --snapshot");
    stats->add_option("--value-stack", stats_value_stack, "Value stack for --snapshot");
    stats->add_flag("--precise", stats_precise, "Print full precision");

    // bench
    std::string bench_spec = "kind=gaussian_mixture,components=32,seed=0";
    std::string bench_key_stack, bench_value_stack;
    size_t bench_linit = 4, bench_llocal = 1024, bench_tokens = 8192, bench_prefill = 2048;
    size_t bench_queries = 64, bench_block_rows = 128, bench_checkpoint = 0;
    bool bench_eager = false;
    auto* bench = app.add_subcommand("bench", "Prefill/decode simulation with memory and "
                                              "fidelity reports");
    bench->add_option("--spec", bench_spec, "Synthetic data spec, key=value list");
    bench->add_option("--key-stack", bench_key_stack, "Key stack path")->required();
    bench->add_option("--value-stack", bench_value_stack, "Value stack path")->required();
    bench->add_option("--linit", bench_linit, "Initial segment length");
    bench->add_option("--llocal", bench_llocal, "Local window length");
    bench->add_option("--tokens", bench_tokens, "Total token count")->required();
    bench->add_option("--prefill", bench_prefill, "Prefill length");
    bench->add_option("--queries", bench_queries, "Fidelity query count");
    bench->add_option("--block-rows", bench_block_rows, "Attention block rows");
    bench->add_option("--checkpoint", bench_checkpoint, "Checkpoint every N decode steps");
    bench->add_flag("--eager", bench_eager, "Quantize at every eviction");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*ratio) {
            return cmd_ratio(ratio_config, precise);
        }
        if (*gen) {
            gen_spec.kind = parse_kind(gen_kind);
            return cmd_gen(gen_spec, gen_out);
        }
        if (*tr) {
            CacheKind kind;
            if (train_kind == "key") {
                kind = CacheKind::key;
            } else if (train_kind == "value") {
                kind = CacheKind::value;
            } else {
                throw InvalidInput("--kind must be key or value");
            }
            return cmd_train(train_data, train_stages, train_config, kind, train_out);
        }
        if (*comp) {
            return cmd_compress(comp_data, comp_stack, comp_out);
        }
        if (*stats) {
            if (!stats_config.empty()) {
                return cmd_stats_config(stats_config, stats_precise);
            }
            if (!stats_snapshot.empty()) {
                if (stats_key_stack.empty() || stats_value_stack.empty()) {
                    throw InvalidInput("--snapshot needs --key-stack and --value-stack");
                }
                return cmd_stats_snapshot(stats_snapshot, stats_key_stack, stats_value_stack);
            }
            throw InvalidInput("stats needs --config or --snapshot");
        }
        if (*bench) {
            return cmd_bench(bench_spec, bench_key_stack, bench_value_stack, bench_linit,
                             bench_llocal, bench_tokens, bench_prefill, bench_queries,
                             bench_block_rows, bench_checkpoint, bench_eager);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
