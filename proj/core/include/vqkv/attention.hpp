// Copyright 2026 The vqkv authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "vqkv/kv_cache.hpp"

namespace vqkv {

struct AttentionConfig {
    // Rows materialized per streaming step; output is invariant to this.
    size_t block_rows = 128;
    // <= 0 means 1/sqrt(Dk).
    double scale = 0.0;
    bool causal = true;

    void validate() const;
};

struct AttendStats {
    // Largest number of scalars ever reconstructed for one block.
    size_t peak_reconstructed_scalars = 0;
    size_t reconstructed_rows = 0;
};

struct FidelityReport {
    double output_max_abs_err = 0.0;
    double output_mean_cosine = 1.0;
    double key_intermediate_mse = 0.0;
    double value_intermediate_mse = 0.0;
};

/// softmax(scale * q K^T) V over the full logical cache, streamed with the
/// online-softmax recurrence; never materializes more than block_rows
/// reconstructed rows at once. Accumulates in double.
VectorF attend(const CacheState& state, const Eigen::Ref<const VectorF>& query,
               const AttentionConfig& config, AttendStats* stats = nullptr);

/// Same computation over raw matrices; the uncompressed reference path.
VectorF attend_raw(const Eigen::Ref<const MatrixF>& keys, const Eigen::Ref<const MatrixF>& values,
                   const Eigen::Ref<const VectorF>& query, const AttentionConfig& config);

/// Compares attention outputs between the compressed state and the raw
/// originals that produced it, one row per query.
FidelityReport fidelity(const CacheState& state, const Eigen::Ref<const MatrixF>& original_keys,
                        const Eigen::Ref<const MatrixF>& original_values,
                        const Eigen::Ref<const MatrixF>& queries, const AttentionConfig& config);

} // namespace vqkv
