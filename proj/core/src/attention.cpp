// Copyright 2026 The vqkv authors
// SPDX-License-Identifier: Apache-2.0

#include "vqkv/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace vqkv {

namespace {

double effective_scale(const AttentionConfig& config, Eigen::Index key_dim) {
    return config.scale > 0.0 ? config.scale : 1.0 / std::sqrt(static_cast<double>(key_dim));
}

} // namespace

void AttentionConfig::validate() const {
    if (block_rows < 1) {
        throw InvalidInput("block_rows must be >= 1");
    }
}

VectorF attend(const CacheState& state, const Eigen::Ref<const VectorF>& query,
               const AttentionConfig& config, AttendStats* stats) {
    config.validate();
    if (state.total_len() < 1) {
        throw InvalidState("cannot attend over an empty cache");
    }
    if (query.size() != state.key_dim()) {
        throw InvalidInput("query dimension does not match key dimension");
    }
    const double scale = effective_scale(config, state.key_dim());
    const Eigen::VectorXd q = query.cast<double>();

    double running_max = -std::numeric_limits<double>::infinity();
    double normalizer = 0.0;
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(state.value_dim());

    const size_t len = state.total_len();
    for (size_t begin = 0; begin < len; begin += config.block_rows) {
        size_t stop = std::min(len, begin + config.block_rows);
        ViewBlock block = state.view_block(begin, stop);
        if (stats) {
            size_t lossy = static_cast<size_t>(
                    std::count(block.exact.begin(), block.exact.end(), false));
            size_t scalars = lossy * static_cast<size_t>(state.key_dim() + state.value_dim());
            stats->peak_reconstructed_scalars =
                    std::max(stats->peak_reconstructed_scalars, scalars);
            stats->reconstructed_rows += lossy;
        }

        Eigen::VectorXd logits = scale * (block.keys.cast<double>() * q);
        double block_max = logits.maxCoeff();
        double new_max = std::max(running_max, block_max);
        double rescale = std::exp(running_max - new_max);
        normalizer *= rescale;
        acc *= rescale;
        for (Eigen::Index j = 0; j < logits.size(); ++j) {
            double p = std::exp(logits[j] - new_max);
            normalizer += p;
            acc += p * block.values.row(j).cast<double>().transpose();
        }
        running_max = new_max;
    }
    return (acc / normalizer).cast<float>();
}

VectorF attend_raw(const Eigen::Ref<const MatrixF>& keys, const Eigen::Ref<const MatrixF>& values,
                   const Eigen::Ref<const VectorF>& query, const AttentionConfig& config) {
    if (keys.rows() < 1 || keys.rows() != values.rows()) {
        throw InvalidInput("keys and values must be nonempty and the same length");
    }
    if (query.size() != keys.cols()) {
        throw InvalidInput("query dimension does not match key dimension");
    }
    const double scale = effective_scale(config, keys.cols());

    // Monolithic two-pass softmax; the reference the streaming path must match.
    Eigen::VectorXd logits = scale * (keys.cast<double>() * query.cast<double>());
    double max_logit = logits.maxCoeff();
    Eigen::VectorXd weights = (logits.array() - max_logit).exp();
    weights /= weights.sum();
    Eigen::VectorXd out = values.transpose().cast<double>() * weights;
    return out.cast<float>();
}

FidelityReport fidelity(const CacheState& state, const Eigen::Ref<const MatrixF>& original_keys,
                        const Eigen::Ref<const MatrixF>& original_values,
                        const Eigen::Ref<const MatrixF>& queries, const AttentionConfig& config) {
    if (static_cast<size_t>(original_keys.rows()) != state.total_len() ||
        static_cast<size_t>(original_values.rows()) != state.total_len()) {
        throw InvalidInput("originals length does not match cache length");
    }
    if (original_keys.cols() != state.key_dim() || original_values.cols() != state.value_dim()) {
        throw InvalidInput("originals dimensions do not match the cache");
    }
    if (queries.rows() < 1 || queries.cols() != state.key_dim()) {
        throw InvalidInput("queries must be nonempty with the key dimension");
    }

    FidelityReport report;
    double cosine_sum = 0.0;
    for (Eigen::Index i = 0; i < queries.rows(); ++i) {
        VectorF compressed = attend(state, queries.row(i).transpose(), config);
        VectorF raw = attend_raw(original_keys, original_values, queries.row(i).transpose(), config);
        report.output_max_abs_err = std::max(
                report.output_max_abs_err,
                static_cast<double>((compressed - raw).cwiseAbs().maxCoeff()));
        double denom = static_cast<double>(compressed.norm()) * static_cast<double>(raw.norm());
        if (denom > 0.0) {
            cosine_sum += compressed.cast<double>().dot(raw.cast<double>()) / denom;
        } else {
            cosine_sum += (compressed.norm() == 0.0f && raw.norm() == 0.0f) ? 1.0 : 0.0;
        }
    }
    report.output_mean_cosine = cosine_sum / static_cast<double>(queries.rows());

    const size_t comp = state.compressed_rows();
    if (comp > 0) {
        size_t first = state.init_rows();
        MatrixF rk = reconstruct_block(state.key_stack(), state.key_codes(), 0, comp);
        MatrixF rv = reconstruct_block(state.value_stack(), state.value_codes(), 0, comp);
        auto f = static_cast<Eigen::Index>(first);
        auto n = static_cast<Eigen::Index>(comp);
        report.key_intermediate_mse =
                (original_keys.middleRows(f, n) - rk).rowwise().squaredNorm().mean();
        report.value_intermediate_mse =
                (original_values.middleRows(f, n) - rv).rowwise().squaredNorm().mean();
    }
    return report;
}

} // namespace vqkv
