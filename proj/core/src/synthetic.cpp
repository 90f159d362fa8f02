// Copyright 2026 The vqkv authors
// SPDX-License-Identifier: Apache-2.0

#include "vqkv/synthetic.hpp"

#include <cmath>
#include <random>

namespace vqkv {

void SyntheticSpec::validate() const {
    if (dim < 1 || count < 1 || component_count < 1) {
        throw InvalidInput("dim, count and component_count must be >= 1");
    }
    if (kind == SyntheticKind::rope_rotated_keys && dim % 2 != 0) {
        throw InvalidInput("rope_rotated_keys requires an even dimension");
    }
    if (rope_base <= 0.0) {
        throw InvalidInput("rope_base must be positive");
    }
    if (component_std < 0.0f || mean_scale < 0.0f) {
        throw InvalidInput("component_std and mean_scale must be nonnegative");
    }
}

void rope_rotate_row(Eigen::Ref<MatrixF> rows, Eigen::Index position, double base) {
    const Eigen::Index d = rows.cols();
    for (Eigen::Index i = 0; i < d / 2; ++i) {
        double freq = std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(d));
        double angle = static_cast<double>(position) * freq;
        float c = static_cast<float>(std::cos(angle));
        float s = static_cast<float>(std::sin(angle));
        float a = rows(position, 2 * i);
        float b = rows(position, 2 * i + 1);
        rows(position, 2 * i) = a * c - b * s;
        rows(position, 2 * i + 1) = a * s + b * c;
    }
}

VectorDataset generate(const SyntheticSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<float> gauss(0.0f, 1.0f);
    std::uniform_int_distribution<uint32_t> pick(0, spec.component_count - 1);

    MatrixF means(spec.component_count, spec.dim);
    for (Eigen::Index i = 0; i < means.size(); ++i) {
        means.data()[i] = spec.mean_scale * gauss(rng);
    }

    VectorDataset out;
    out.payload.resize(spec.count, spec.dim);
    for (Eigen::Index r = 0; r < spec.count; ++r) {
        uint32_t c = pick(rng);
        for (Eigen::Index j = 0; j < spec.dim; ++j) {
            out.payload(r, j) = means(c, j) + spec.component_std * gauss(rng);
        }
        if (spec.kind == SyntheticKind::rope_rotated_keys) {
            rope_rotate_row(out.payload, r, spec.rope_base);
        }
    }
    return out;
}

} // namespace vqkv
