// Copyright 2026 The vqkv authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>

#include "vqkv/errors.hpp"

namespace vqkv {

/// Codebook geometry feeding the storage-ratio formula.
struct RatioConfig {
    uint32_t n_key = 1;
    uint32_t s_key = 2;
    uint32_t n_value = 1;
    uint32_t s_value = 2;
    uint32_t d_key = 128;
    uint32_t d_value = 128;

    void validate() const {
        if (n_key < 1 || n_value < 1 || d_key < 1 || d_value < 1) {
            throw InvalidInput("codebook counts and dimensions must be >= 1");
        }
        if (s_key < 2 || s_value < 2) {
            throw InvalidInput("codebook sizes must be >= 2");
        }
    }
};

/// Percentage of the 16-bit cache storage discarded:
/// (1 - (Nk log2 Sk + Nv log2 Sv) / (16 (Dk + Dv))) * 100.
inline double compression_ratio_percent(const RatioConfig& c) {
    c.validate();
    double bits = c.n_key * std::log2(static_cast<double>(c.s_key)) +
                  c.n_value * std::log2(static_cast<double>(c.s_value));
    return (1.0 - bits / (16.0 * (c.d_key + c.d_value))) * 100.0;
}

} // namespace vqkv
