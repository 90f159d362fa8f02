// Copyright 2026 The vqkv authors
// SPDX-License-Identifier: Apache-2.0

#include "vqkv/dataset.hpp"

#include <fstream>

#include "io_util.hpp"

namespace vqkv {

namespace {
constexpr char kDatasetMagic[4] = {'V', 'E', 'C', 'D'};
constexpr uint32_t kDatasetVersion = 1;
} // namespace

void VectorDataset::validate() const {
    if (count() < 1 || dim() < 1) {
        throw InvalidInput("dataset must have count >= 1 and D >= 1");
    }
    if (!payload.allFinite()) {
        throw InvalidInput("dataset contains non-finite values");
    }
}

void save_dataset(const VectorDataset& dataset, const std::string& path) {
    dataset.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open " + path + " for writing");
    }
    detail::write_bytes(out, kDatasetMagic, 4);
    detail::write_scalar<uint32_t>(out, kDatasetVersion);
    detail::write_scalar<uint32_t>(out, static_cast<uint32_t>(dataset.dim()));
    detail::write_scalar<uint64_t>(out, static_cast<uint64_t>(dataset.count()));
    detail::write_bytes(out, dataset.payload.data(), sizeof(float) * dataset.payload.size());
    if (!out) {
        throw IoError("write failed for " + path);
    }
}

VectorDataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path);
    }
    size_t offset = 0;
    detail::expect_magic(in, kDatasetMagic, offset);
    auto version = detail::read_scalar<uint32_t>(in, offset, "version");
    if (version != kDatasetVersion) {
        throw FormatError("unsupported version " + std::to_string(version), offset - 4);
    }
    auto d = detail::read_scalar<uint32_t>(in, offset, "dimension");
    auto count = detail::read_scalar<uint64_t>(in, offset, "count");
    if (d < 1 || count < 1) {
        throw FormatError("dimension and count must be >= 1", offset - 12);
    }
    VectorDataset dataset;
    dataset.payload.resize(static_cast<Eigen::Index>(count), d);
    size_t data_offset = offset;
    detail::read_bytes(in, dataset.payload.data(), sizeof(float) * dataset.payload.size(), offset,
                       "vector payload");
    if (!dataset.payload.allFinite()) {
        throw FormatError("non-finite vector data", data_offset);
    }
    return dataset;
}

} // namespace vqkv
