// Copyright 2026 The vqkv authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "vqkv/codebook.hpp"
#include "vqkv/dataset.hpp"

namespace vqkv {

struct TrainConfig {
    float learning_rate = 0.001f;
    size_t batch_size = 65536;
    size_t epochs = 20;
    float beta = 0.25f;  // codebook-pull weight
    float gamma = 1.0f;  // commitment weight
    uint64_t seed = 0;
    float init_scale = 1.0f;
    // Raw entries stay frozen at init; only the projections learn. Unfreeze
    // for ablation runs.
    bool train_entries = false;
    // The commitment term is an unsquared norm; set to square it instead.
    bool square_commitment = false;
    float holdout_fraction = 0.01f;

    void validate() const;
};

struct TrainReport {
    std::vector<double> per_epoch_loss;
    // Held-out mean squared error of the reconstruction truncated to the
    // first i+1 stages.
    std::vector<double> per_stage_mse;
    double final_mse = 0.0;
};

struct LossTerms {
    double total = 0.0;
    double reconstruction = 0.0;
    double codebook_pull = 0.0;
    double commitment = 0.0;
};

/// Gaussian entries scaled by init_scale, identity projections.
/// Deterministic given config.seed.
CodebookStack init_stack(Eigen::Index dim, const std::vector<uint32_t>& stage_sizes,
                         const TrainConfig& config, CacheKind kind = CacheKind::key);

/// Mean batch loss: reconstruction + beta * pull + gamma * commitment, the
/// pull/commitment terms summed over stages against each stage's incoming
/// residual. Values only; stop-gradients matter for train() alone.
LossTerms loss(const CodebookStack& stack, const Eigen::Ref<const MatrixF>& batch,
               float beta, float gamma, bool square_commitment = false);

struct TrainResult {
    CodebookStack stack;
    TrainReport report;
};

/// Mini-batch SGD with straight-through gradients through the argmin.
TrainResult train(const VectorDataset& dataset, const std::vector<uint32_t>& stage_sizes,
                  const TrainConfig& config, CacheKind kind = CacheKind::key);

} // namespace vqkv
