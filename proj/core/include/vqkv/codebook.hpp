// Copyright 2026 The vqkv authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "vqkv/bitpack.hpp"
#include "vqkv/errors.hpp"

namespace vqkv {

using MatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using VectorF = Eigen::VectorXf;

enum class CacheKind : uint8_t { key = 0, value = 1 };

/// Default number of codebook entries scanned per block during nearest
/// search; bounds peak working memory, never changes the result.
constexpr size_t kDefaultSearchBlock = 4096;

/// One residual stage: raw entries plus a learned projection. The vectors
/// actually searched and summed are the projected ("effective") entries,
/// recomputed whenever entries or projection change.
struct Codebook {
    MatrixF entries;    // S x D
    MatrixF projection; // D x D
    MatrixF effective;  // S x D, row i = projection * entries.row(i)
    VectorF effective_sqnorm;

    Eigen::Index size() const { return entries.rows(); }
    Eigen::Index dim() const { return entries.cols(); }

    /// Recomputes effective entries and their squared norms.
    void refresh();

    void validate() const;
};

/// Ordered residual stages for one cache kind. Immutable once loaded; any
/// number of threads may quantize/reconstruct against it concurrently.
struct CodebookStack {
    std::vector<Codebook> stages;
    CacheKind cache_kind = CacheKind::key;

    size_t num_stages() const { return stages.size(); }
    Eigen::Index dim() const { return stages.empty() ? 0 : stages.front().dim(); }

    std::vector<uint32_t> stage_sizes() const;
    void validate() const;
};

using CodeVector = std::vector<uint32_t>;

/// Compressed rows: per-row integer codes stored bit-packed at
/// ceil(log2 S_i) bits per stage. Append-only; rows already stored are
/// never rewritten.
class CodeMatrix {
public:
    CodeMatrix() = default;
    explicit CodeMatrix(std::vector<uint32_t> stage_sizes);

    size_t rows() const { return rows_; }
    size_t num_stages() const { return stage_sizes_.size(); }
    const std::vector<uint32_t>& stage_sizes() const { return stage_sizes_; }
    size_t row_bits() const { return row_bits_; }
    size_t payload_bits() const { return rows_ * row_bits_; }
    const std::vector<uint8_t>& payload() const { return payload_; }

    void append(const CodeVector& codes);
    CodeVector row(size_t r) const;
    uint32_t code_at(size_t r, size_t stage) const;

    bool operator==(const CodeMatrix& other) const = default;

    void save(std::ostream& out) const;
    static CodeMatrix load(std::istream& in, size_t& offset);

private:
    std::vector<uint32_t> stage_sizes_;
    std::vector<unsigned> stage_bits_;
    std::vector<size_t> stage_bit_offset_; // within a row
    size_t row_bits_ = 0;
    size_t rows_ = 0;
    std::vector<uint8_t> payload_;
};

struct NearestResult {
    uint32_t index;
    float distance;
};

/// Argmin over effective entries of ||x - e_i||; ties resolved to the
/// lowest index. `search_block` caps how many entries are scored per pass.
NearestResult nearest_entry(const Codebook& codebook, const Eigen::Ref<const VectorF>& x,
                            size_t search_block = kDefaultSearchBlock);

struct QuantizeResult {
    CodeVector codes;
    VectorF final_residual;
};

/// Greedy residual encoding: stage i quantizes the residual left by stage
/// i-1, starting from x itself.
QuantizeResult quantize(const CodebookStack& stack, const Eigen::Ref<const VectorF>& x,
                        size_t search_block = kDefaultSearchBlock);

/// Sum of the selected effective entries, in stage order.
VectorF reconstruct(const CodebookStack& stack, const CodeVector& codes);

struct QuantizeBatchResult {
    CodeMatrix codes;
    VectorF residual_norms;
};

/// Row-for-row identical to calling quantize on each row.
QuantizeBatchResult quantize_batch(const CodebookStack& stack, const Eigen::Ref<const MatrixF>& xs,
                                   size_t search_block = kDefaultSearchBlock);

/// Reconstructs rows [begin, end); any partition of [0, rows) concatenates
/// to the full reconstruction bit-identically.
MatrixF reconstruct_block(const CodebookStack& stack, const CodeMatrix& codes,
                          size_t begin, size_t end);

// RSVQ binary container (little-endian).
void save_stack(const CodebookStack& stack, const std::string& path);
void save_stack(const CodebookStack& stack, std::ostream& out);
CodebookStack load_stack(const std::string& path);
CodebookStack load_stack(std::istream& in);

/// FNV-1a over the serialized stack; used by cache snapshots to pin the
/// stacks they were built against.
uint64_t stack_content_hash(const CodebookStack& stack);

} // namespace vqkv
