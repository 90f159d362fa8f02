// Copyright 2026 The vqkv authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "vqkv/codebook.hpp"

namespace vqkv {

/// A flat corpus of D-dimensional float vectors ("VECD" container).
struct VectorDataset {
    MatrixF payload; // count x D

    Eigen::Index dim() const { return payload.cols(); }
    Eigen::Index count() const { return payload.rows(); }

    void validate() const;
};

void save_dataset(const VectorDataset& dataset, const std::string& path);
VectorDataset load_dataset(const std::string& path);

} // namespace vqkv
