// Copyright 2026 The vqkv authors
// SPDX-License-Identifier: Apache-2.0

#include "vqkv/kv_cache.hpp"

#include <algorithm>
#include <fstream>

#include "io_util.hpp"

namespace vqkv {

namespace {

constexpr char kSnapshotMagic[4] = {'V', 'Q', 'K', 'S'};
constexpr uint32_t kSnapshotVersion = 1;

size_t serialized_stack_bytes(const CodebookStack& stack) {
    size_t bytes = 4 + 4 + 1 + 4; // magic, version, kind, stage count
    for (const auto& stage : stack.stages) {
        bytes += 8 + sizeof(float) * static_cast<size_t>(stage.entries.size() +
                                                         stage.projection.size());
    }
    return bytes;
}

void write_matrix(std::ostream& out, const MatrixF& m) {
    detail::write_scalar<uint64_t>(out, static_cast<uint64_t>(m.rows()));
    detail::write_bytes(out, m.data(), sizeof(float) * m.size());
}

MatrixF read_matrix(std::istream& in, Eigen::Index cols, size_t& offset, const char* what) {
    auto rows = detail::read_scalar<uint64_t>(in, offset, what);
    MatrixF m(static_cast<Eigen::Index>(rows), cols);
    detail::read_bytes(in, m.data(), sizeof(float) * m.size(), offset, what);
    return m;
}

} // namespace

void WindowPolicy::validate() const {
    if (local_len < 1) {
        throw InvalidInput("local_len must be >= 1");
    }
}

CacheState::CacheState(const CodebookStack& key_stack, const CodebookStack& value_stack,
                       WindowPolicy policy)
        : key_stack_(&key_stack),
          value_stack_(&value_stack),
          policy_(policy),
          key_codes_(key_stack.stage_sizes()),
          value_codes_(value_stack.stage_sizes()) {
    policy_.validate();
    key_stack.validate();
    value_stack.validate();
    init_keys_.resize(0, key_stack.dim());
    init_values_.resize(0, value_stack.dim());
}

void CacheState::prefill(const Eigen::Ref<const MatrixF>& keys,
                         const Eigen::Ref<const MatrixF>& values) {
    if (total_len() != 0 || prefilled_) {
        throw InvalidState("prefill requires an empty cache");
    }
    if (keys.rows() < 1) {
        throw InvalidInput("prefill needs at least one token");
    }
    if (keys.rows() != values.rows()) {
        throw InvalidInput("keys and values must have the same length");
    }
    if (keys.cols() != key_dim() || values.cols() != value_dim()) {
        throw InvalidInput("key/value dimensions do not match the stacks");
    }

    const size_t len = static_cast<size_t>(keys.rows());
    const size_t n_init = std::min(policy_.init_len, len);
    const size_t n_local = std::min(policy_.local_len, len - n_init);
    const size_t n_middle = len - n_init - n_local;

    init_keys_ = keys.topRows(static_cast<Eigen::Index>(n_init));
    init_values_ = values.topRows(static_cast<Eigen::Index>(n_init));

    if (n_middle > 0) {
        auto mid_begin = static_cast<Eigen::Index>(n_init);
        auto mid_len = static_cast<Eigen::Index>(n_middle);
        QuantizeBatchResult k = quantize_batch(*key_stack_, keys.middleRows(mid_begin, mid_len));
        QuantizeBatchResult v = quantize_batch(*value_stack_, values.middleRows(mid_begin, mid_len));
        key_codes_ = std::move(k.codes);
        value_codes_ = std::move(v.codes);
        key_residual_norms_.assign(k.residual_norms.data(), k.residual_norms.data() + n_middle);
        value_residual_norms_.assign(v.residual_norms.data(), v.residual_norms.data() + n_middle);
    }

    for (size_t i = len - n_local; i < len; ++i) {
        local_keys_.push_back(keys.row(static_cast<Eigen::Index>(i)).transpose());
        local_values_.push_back(values.row(static_cast<Eigen::Index>(i)).transpose());
    }
    prefilled_ = true;
}

void CacheState::flush_pending() {
    MatrixF keys(static_cast<Eigen::Index>(pending_keys_.size()), key_dim());
    MatrixF values(static_cast<Eigen::Index>(pending_values_.size()), value_dim());
    for (size_t i = 0; i < pending_keys_.size(); ++i) {
        keys.row(static_cast<Eigen::Index>(i)) = pending_keys_[i].transpose();
        values.row(static_cast<Eigen::Index>(i)) = pending_values_[i].transpose();
    }
    QuantizeBatchResult k = quantize_batch(*key_stack_, keys);
    QuantizeBatchResult v = quantize_batch(*value_stack_, values);
    for (size_t i = 0; i < pending_keys_.size(); ++i) {
        key_codes_.append(k.codes.row(i));
        value_codes_.append(v.codes.row(i));
        key_residual_norms_.push_back(k.residual_norms[static_cast<Eigen::Index>(i)]);
        value_residual_norms_.push_back(v.residual_norms[static_cast<Eigen::Index>(i)]);
    }
    pending_keys_.clear();
    pending_values_.clear();
    ++batched_compressions_;
}

void CacheState::append_token(const Eigen::Ref<const VectorF>& key,
                              const Eigen::Ref<const VectorF>& value) {
    if (!prefilled_ && policy_.init_len != 0) {
        throw InvalidState("append_token requires a prefilled cache (or init_len == 0)");
    }
    if (key.size() != key_dim() || value.size() != value_dim()) {
        throw InvalidInput("key/value dimensions do not match the stacks");
    }
    local_keys_.push_back(key);
    local_values_.push_back(value);
    if (local_keys_.size() > policy_.local_len) {
        pending_keys_.push_back(std::move(local_keys_.front()));
        pending_values_.push_back(std::move(local_values_.front()));
        local_keys_.pop_front();
        local_values_.pop_front();
        if (policy_.eager || pending_keys_.size() >= policy_.local_len) {
            flush_pending();
        }
    }
}

ViewBlock CacheState::view_block(size_t begin, size_t end) const {
    const size_t len = total_len();
    if (begin > end || end > len) {
        throw InvalidInput("view range [" + std::to_string(begin) + ", " + std::to_string(end) +
                           ") out of bounds for length " + std::to_string(len));
    }
    ViewBlock out;
    out.keys.resize(static_cast<Eigen::Index>(end - begin), key_dim());
    out.values.resize(static_cast<Eigen::Index>(end - begin), value_dim());
    out.exact.assign(end - begin, true);

    const size_t init_end = init_rows();
    const size_t comp_end = init_end + compressed_rows();
    const size_t pend_end = comp_end + pending_rows();

    size_t g = begin;
    while (g < end) {
        Eigen::Index dst = static_cast<Eigen::Index>(g - begin);
        if (g < init_end) {
            size_t stop = std::min(end, init_end);
            auto n = static_cast<Eigen::Index>(stop - g);
            out.keys.middleRows(dst, n) = init_keys_.middleRows(static_cast<Eigen::Index>(g), n);
            out.values.middleRows(dst, n) = init_values_.middleRows(static_cast<Eigen::Index>(g), n);
            g = stop;
        } else if (g < comp_end) {
            size_t stop = std::min(end, comp_end);
            size_t row0 = g - init_end;
            size_t row1 = stop - init_end;
            auto n = static_cast<Eigen::Index>(stop - g);
            out.keys.middleRows(dst, n) = reconstruct_block(*key_stack_, key_codes_, row0, row1);
            out.values.middleRows(dst, n) =
                    reconstruct_block(*value_stack_, value_codes_, row0, row1);
            std::fill(out.exact.begin() + static_cast<ptrdiff_t>(g - begin),
                      out.exact.begin() + static_cast<ptrdiff_t>(stop - begin), false);
            g = stop;
        } else if (g < pend_end) {
            out.keys.row(dst) = pending_keys_[g - comp_end].transpose();
            out.values.row(dst) = pending_values_[g - comp_end].transpose();
            ++g;
        } else {
            out.keys.row(dst) = local_keys_[g - pend_end].transpose();
            out.values.row(dst) = local_values_[g - pend_end].transpose();
            ++g;
        }
    }
    return out;
}

MemoryReport CacheState::memory_report() const {
    MemoryReport report;
    const size_t scalars_per_token = static_cast<size_t>(key_dim() + value_dim());
    report.raw_bytes_equivalent = total_len() * scalars_per_token * 2;
    report.compressed_payload_bits = key_codes_.payload_bits() + value_codes_.payload_bits();
    report.codebook_overhead_bytes =
            serialized_stack_bytes(*key_stack_) + serialized_stack_bytes(*value_stack_);
    if (compressed_rows() > 0) {
        double raw_bits = static_cast<double>(compressed_rows() * scalars_per_token * 16);
        report.effective_ratio =
                1.0 - static_cast<double>(report.compressed_payload_bits) / raw_bits;
    }
    return report;
}

void CacheState::save_snapshot(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open " + path + " for writing");
    }
    detail::write_bytes(out, kSnapshotMagic, 4);
    detail::write_scalar<uint32_t>(out, kSnapshotVersion);
    detail::write_scalar<uint64_t>(out, policy_.init_len);
    detail::write_scalar<uint64_t>(out, policy_.local_len);
    detail::write_scalar<uint8_t>(out, policy_.eager ? 1 : 0);
    detail::write_scalar<uint8_t>(out, prefilled_ ? 1 : 0);
    detail::write_scalar<uint64_t>(out, total_len());
    detail::write_scalar<uint32_t>(out, static_cast<uint32_t>(key_dim()));
    detail::write_scalar<uint32_t>(out, static_cast<uint32_t>(value_dim()));
    detail::write_scalar<uint64_t>(out, stack_content_hash(*key_stack_));
    detail::write_scalar<uint64_t>(out, stack_content_hash(*value_stack_));
    detail::write_scalar<uint64_t>(out, batched_compressions_);

    write_matrix(out, init_keys_);
    write_matrix(out, init_values_);
    key_codes_.save(out);
    value_codes_.save(out);
    detail::write_bytes(out, key_residual_norms_.data(),
                        sizeof(float) * key_residual_norms_.size());
    detail::write_bytes(out, value_residual_norms_.data(),
                        sizeof(float) * value_residual_norms_.size());

    auto write_rows = [&](const auto& rows, Eigen::Index dim) {
        detail::write_scalar<uint64_t>(out, rows.size());
        for (const VectorF& r : rows) {
            detail::write_bytes(out, r.data(), sizeof(float) * static_cast<size_t>(dim));
        }
    };
    write_rows(pending_keys_, key_dim());
    write_rows(pending_values_, value_dim());
    write_rows(local_keys_, key_dim());
    write_rows(local_values_, value_dim());
    if (!out) {
        throw IoError("write failed for " + path);
    }
}

CacheState CacheState::load_snapshot(const std::string& path, const CodebookStack& key_stack,
                                     const CodebookStack& value_stack) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path);
    }
    size_t offset = 0;
    detail::expect_magic(in, kSnapshotMagic, offset);
    auto version = detail::read_scalar<uint32_t>(in, offset, "version");
    if (version != kSnapshotVersion) {
        throw FormatError("unsupported snapshot version " + std::to_string(version), offset - 4);
    }
    WindowPolicy policy;
    policy.init_len = detail::read_scalar<uint64_t>(in, offset, "init_len");
    policy.local_len = detail::read_scalar<uint64_t>(in, offset, "local_len");
    policy.eager = detail::read_scalar<uint8_t>(in, offset, "eager flag") != 0;
    bool prefilled = detail::read_scalar<uint8_t>(in, offset, "prefilled flag") != 0;
    auto stored_len = detail::read_scalar<uint64_t>(in, offset, "total_len");
    auto dk = detail::read_scalar<uint32_t>(in, offset, "key dim");
    auto dv = detail::read_scalar<uint32_t>(in, offset, "value dim");
    if (dk != key_stack.dim() || dv != value_stack.dim()) {
        throw InvalidInput("snapshot dimensions do not match the supplied stacks");
    }
    auto key_hash = detail::read_scalar<uint64_t>(in, offset, "key stack hash");
    auto value_hash = detail::read_scalar<uint64_t>(in, offset, "value stack hash");
    if (key_hash != stack_content_hash(key_stack) ||
        value_hash != stack_content_hash(value_stack)) {
        throw InvalidInput("snapshot was built against different codebook stacks");
    }

    CacheState state(key_stack, value_stack, policy);
    state.prefilled_ = prefilled;
    state.batched_compressions_ = detail::read_scalar<uint64_t>(in, offset, "compression count");
    state.init_keys_ = read_matrix(in, key_stack.dim(), offset, "init keys");
    state.init_values_ = read_matrix(in, value_stack.dim(), offset, "init values");
    state.key_codes_ = CodeMatrix::load(in, offset);
    state.value_codes_ = CodeMatrix::load(in, offset);
    state.key_residual_norms_.resize(state.key_codes_.rows());
    detail::read_bytes(in, state.key_residual_norms_.data(),
                       sizeof(float) * state.key_residual_norms_.size(), offset,
                       "key residual norms");
    state.value_residual_norms_.resize(state.value_codes_.rows());
    detail::read_bytes(in, state.value_residual_norms_.data(),
                       sizeof(float) * state.value_residual_norms_.size(), offset,
                       "value residual norms");

    auto read_rows = [&](auto& rows, Eigen::Index dim, const char* what) {
        auto n = detail::read_scalar<uint64_t>(in, offset, what);
        for (uint64_t i = 0; i < n; ++i) {
            VectorF r(dim);
            detail::read_bytes(in, r.data(), sizeof(float) * static_cast<size_t>(dim), offset,
                               what);
            rows.push_back(std::move(r));
        }
    };
    read_rows(state.pending_keys_, key_stack.dim(), "pending keys");
    read_rows(state.pending_values_, value_stack.dim(), "pending values");
    read_rows(state.local_keys_, key_stack.dim(), "local keys");
    read_rows(state.local_values_, value_stack.dim(), "local values");

    if (state.total_len() != stored_len) {
        throw FormatError("segment lengths do not add up to total_len", offset);
    }
    return state;
}

} // namespace vqkv
