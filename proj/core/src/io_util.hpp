// Copyright 2026 The vqkv authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>

#include "vqkv/errors.hpp"

// Little-endian scalar IO with byte-offset tracking for format errors.
// Assumes a little-endian host.

namespace vqkv::detail {

template <typename T>
void write_scalar(std::ostream& out, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_scalar(std::istream& in, size_t& offset, const char* what) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) {
        throw FormatError(std::string("truncated file reading ") + what, offset);
    }
    offset += sizeof(T);
    return value;
}

inline void write_bytes(std::ostream& out, const void* data, size_t n) {
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n));
}

inline void read_bytes(std::istream& in, void* data, size_t n, size_t& offset, const char* what) {
    in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n));
    if (!in) {
        throw FormatError(std::string("truncated file reading ") + what, offset);
    }
    offset += n;
}

inline void expect_magic(std::istream& in, const char magic[4], size_t& offset) {
    char got[4] = {};
    in.read(got, 4);
    if (!in || std::memcmp(got, magic, 4) != 0) {
        throw FormatError(std::string("bad magic, expected ") + std::string(magic, 4), offset);
    }
    offset += 4;
}

} // namespace vqkv::detail
