// Copyright 2026 The vqkv authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <deque>
#include <string>
#include <vector>

#include "vqkv/codebook.hpp"

namespace vqkv {

struct WindowPolicy {
    size_t init_len = 4;    // never-compressed prompt head
    size_t local_len = 1024; // raw sliding window over recent tokens
    // Default defers quantization until local_len evictions accumulate and
    // compresses them in one batch; eager quantizes at every eviction.
    bool eager = false;

    void validate() const;
};

struct MemoryReport {
    // Bytes the full-precision cache would use at 16 bits per scalar.
    size_t raw_bytes_equivalent = 0;
    size_t compressed_payload_bits = 0;
    size_t codebook_overhead_bytes = 0;
    // 1 - compressed_bits / raw_bits over the compressed rows; 0 when
    // nothing has been compressed.
    double effective_ratio = 0.0;
};

struct ViewBlock {
    MatrixF keys;   // len x Dk
    MatrixF values; // len x Dv
    // exact[i] is false for rows served from the compressed segment.
    std::vector<bool> exact;
};

/// Three-segment KV store for one (layer, head) stream: raw prompt head,
/// compressed middle, raw local window. Rows keep original token order;
/// compressed rows are append-only. Single writer; concurrent reads allowed
/// between writes. The stacks must outlive the state.
class CacheState {
public:
    CacheState(const CodebookStack& key_stack, const CodebookStack& value_stack,
               WindowPolicy policy);

    /// Splits the prompt cache across the three segments and batch-quantizes
    /// the middle. The caller keeps using its raw matrices for the prefill
    /// attention pass; this only populates storage.
    void prefill(const Eigen::Ref<const MatrixF>& keys, const Eigen::Ref<const MatrixF>& values);

    /// Adds one decode-step token to the local window. Evicted rows wait in
    /// a pending buffer and are quantized in one batch per local_len
    /// evictions (immediately when eager).
    void append_token(const Eigen::Ref<const VectorF>& key,
                      const Eigen::Ref<const VectorF>& value);

    /// Rows [begin, end) in token order: raw segments exact, compressed rows
    /// reconstructed and flagged lossy.
    ViewBlock view_block(size_t begin, size_t end) const;

    MemoryReport memory_report() const;

    size_t total_len() const {
        return init_rows() + compressed_rows() + pending_rows() + local_rows();
    }
    size_t init_rows() const { return static_cast<size_t>(init_keys_.rows()); }
    size_t compressed_rows() const { return key_codes_.rows(); }
    size_t pending_rows() const { return pending_keys_.size(); }
    size_t local_rows() const { return local_keys_.size(); }
    size_t intermediate_rows() const { return compressed_rows() + pending_rows(); }
    /// Decode-side batched quantizations; prefill compression not counted.
    size_t batched_compressions() const { return batched_compressions_; }

    const WindowPolicy& policy() const { return policy_; }
    const CodebookStack& key_stack() const { return *key_stack_; }
    const CodebookStack& value_stack() const { return *value_stack_; }
    Eigen::Index key_dim() const { return key_stack_->dim(); }
    Eigen::Index value_dim() const { return value_stack_->dim(); }

    const CodeMatrix& key_codes() const { return key_codes_; }
    const CodeMatrix& value_codes() const { return value_codes_; }
    /// Quantization error recorded when each compressed row was stored.
    const std::vector<float>& key_residual_norms() const { return key_residual_norms_; }
    const std::vector<float>& value_residual_norms() const { return value_residual_norms_; }

    void save_snapshot(const std::string& path) const;
    static CacheState load_snapshot(const std::string& path, const CodebookStack& key_stack,
                                    const CodebookStack& value_stack);

private:
    void flush_pending();

    const CodebookStack* key_stack_;
    const CodebookStack* value_stack_;
    WindowPolicy policy_;
    bool prefilled_ = false;

    MatrixF init_keys_, init_values_;
    CodeMatrix key_codes_, value_codes_;
    std::vector<float> key_residual_norms_, value_residual_norms_;
    std::vector<VectorF> pending_keys_, pending_values_;
    std::deque<VectorF> local_keys_, local_values_;
    size_t batched_compressions_ = 0;
};

} // namespace vqkv
