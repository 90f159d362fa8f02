// Copyright 2026 The vqkv authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "vqkv/dataset.hpp"

namespace vqkv {

enum class SyntheticKind : uint8_t {
    gaussian_mixture,
    // Mixture vectors rotated per-position by the standard rotary scheme;
    // mimics the frequency structure of post-rotation key caches.
    rope_rotated_keys,
};

struct SyntheticSpec {
    SyntheticKind kind = SyntheticKind::gaussian_mixture;
    Eigen::Index dim = 64;
    Eigen::Index count = 1000;
    uint32_t component_count = 8;
    uint64_t seed = 0;
    double rope_base = 10000.0;
    // Within-component standard deviation; component means are drawn
    // N(0, mean_scale^2 I).
    float component_std = 0.25f;
    float mean_scale = 1.0f;

    void validate() const;
};

VectorDataset generate(const SyntheticSpec& spec);

/// In-place rotary rotation of row `position`: pair (2i, 2i+1) rotated by
/// position * base^(-2i / D).
void rope_rotate_row(Eigen::Ref<MatrixF> rows, Eigen::Index position, double base);

} // namespace vqkv
