// Copyright 2026 The vqkv authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

namespace vqkv {

// Little-endian bit stream: value bit 0 lands in the lowest unused bit of
// the current byte. Widths up to 32 bits.

inline void bit_write(std::vector<uint8_t>& buf, size_t bit_pos, uint32_t value, unsigned width) {
    size_t need = (bit_pos + width + 7) / 8;
    if (buf.size() < need) {
        buf.resize(need, 0);
    }
    for (unsigned b = 0; b < width; ++b) {
        size_t pos = bit_pos + b;
        if ((value >> b) & 1u) {
            buf[pos / 8] |= uint8_t(1u << (pos % 8));
        } else {
            buf[pos / 8] &= uint8_t(~(1u << (pos % 8)));
        }
    }
}

inline uint32_t bit_read(const std::vector<uint8_t>& buf, size_t bit_pos, unsigned width) {
    uint32_t value = 0;
    for (unsigned b = 0; b < width; ++b) {
        size_t pos = bit_pos + b;
        value |= uint32_t((buf[pos / 8] >> (pos % 8)) & 1u) << b;
    }
    return value;
}

/// Bits needed to address `size` distinct values (ceil(log2), 0 for size 1).
inline unsigned index_bit_width(uint32_t size) {
    unsigned w = 0;
    while ((uint64_t(1) << w) < size) {
        ++w;
    }
    return w;
}

} // namespace vqkv
