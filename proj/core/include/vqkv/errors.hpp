// Copyright 2026 The vqkv authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace vqkv {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed arguments: dimension mismatch, out-of-range request, bad config.
struct InvalidInput : Error {
    using Error::Error;
};

/// Operation not legal in the current object state.
struct InvalidState : Error {
    using Error::Error;
};

/// A code index exceeds its stage's codebook size.
struct InvalidCode : Error {
    using Error::Error;
};

/// Malformed binary file; carries the byte offset of the first bad field.
struct FormatError : Error {
    FormatError(const std::string& msg, size_t offset)
            : Error(msg + " (byte offset " + std::to_string(offset) + ")"),
              byte_offset(offset) {}
    size_t byte_offset;
};

struct IoError : Error {
    using Error::Error;
};

/// Training produced a non-finite loss.
struct DivergedError : Error {
    DivergedError(const std::string& msg, size_t epoch)
            : Error(msg + " (epoch " + std::to_string(epoch) + ")"),
              epoch(epoch) {}
    size_t epoch;
};

} // namespace vqkv
