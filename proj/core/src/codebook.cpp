// Copyright 2026 The vqkv authors
// SPDX-License-Identifier: Apache-2.0

#include "vqkv/codebook.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "io_util.hpp"

namespace vqkv {

namespace {

constexpr char kStackMagic[4] = {'R', 'S', 'V', 'Q'};
constexpr uint32_t kStackVersion = 1;

void check_dim(const CodebookStack& stack, Eigen::Index got) {
    if (got != stack.dim()) {
        throw InvalidInput("vector dimension " + std::to_string(got) +
                           " does not match stack dimension " + std::to_string(stack.dim()));
    }
}

} // namespace

void Codebook::refresh() {
    // Row-at-a-time products keep each effective entry's arithmetic
    // independent of the codebook height, so identical raw entries always
    // produce bit-identical effective entries (a blocked GEMM would not).
    effective.resize(entries.rows(), entries.cols());
    for (Eigen::Index i = 0; i < entries.rows(); ++i) {
        effective.row(i).noalias() = entries.row(i) * projection.transpose();
    }
    effective_sqnorm = effective.rowwise().squaredNorm();
}

void Codebook::validate() const {
    if (entries.rows() < 1 || entries.cols() < 1) {
        throw InvalidInput("codebook must have S >= 1 and D >= 1");
    }
    if (projection.rows() != entries.cols() || projection.cols() != entries.cols()) {
        throw InvalidInput("projection must be DxD");
    }
    if (!entries.allFinite() || !projection.allFinite()) {
        throw InvalidInput("codebook contains non-finite values");
    }
}

std::vector<uint32_t> CodebookStack::stage_sizes() const {
    std::vector<uint32_t> sizes;
    sizes.reserve(stages.size());
    for (const auto& stage : stages) {
        sizes.push_back(static_cast<uint32_t>(stage.size()));
    }
    return sizes;
}

void CodebookStack::validate() const {
    if (stages.empty()) {
        throw InvalidInput("stack must have at least one stage");
    }
    for (const auto& stage : stages) {
        stage.validate();
        if (stage.dim() != dim()) {
            throw InvalidInput("all stages must share one dimension");
        }
    }
}

CodeMatrix::CodeMatrix(std::vector<uint32_t> stage_sizes)
        : stage_sizes_(std::move(stage_sizes)) {
    stage_bits_.reserve(stage_sizes_.size());
    stage_bit_offset_.reserve(stage_sizes_.size());
    for (uint32_t s : stage_sizes_) {
        if (s < 1) {
            throw InvalidInput("stage size must be >= 1");
        }
        stage_bit_offset_.push_back(row_bits_);
        unsigned w = index_bit_width(s);
        stage_bits_.push_back(w);
        row_bits_ += w;
    }
}

void CodeMatrix::append(const CodeVector& codes) {
    if (codes.size() != stage_sizes_.size()) {
        throw InvalidInput("code vector has wrong stage count");
    }
    for (size_t i = 0; i < codes.size(); ++i) {
        if (codes[i] >= stage_sizes_[i]) {
            throw InvalidCode("index " + std::to_string(codes[i]) +
                              " out of range for stage " + std::to_string(i));
        }
    }
    size_t base = rows_ * row_bits_;
    for (size_t i = 0; i < codes.size(); ++i) {
        bit_write(payload_, base + stage_bit_offset_[i], codes[i], stage_bits_[i]);
    }
    ++rows_;
}

CodeVector CodeMatrix::row(size_t r) const {
    if (r >= rows_) {
        throw InvalidInput("row " + std::to_string(r) + " out of range");
    }
    CodeVector codes(stage_sizes_.size());
    size_t base = r * row_bits_;
    for (size_t i = 0; i < codes.size(); ++i) {
        codes[i] = bit_read(payload_, base + stage_bit_offset_[i], stage_bits_[i]);
    }
    return codes;
}

uint32_t CodeMatrix::code_at(size_t r, size_t stage) const {
    if (r >= rows_ || stage >= stage_sizes_.size()) {
        throw InvalidInput("code_at out of range");
    }
    return bit_read(payload_, r * row_bits_ + stage_bit_offset_[stage], stage_bits_[stage]);
}

void CodeMatrix::save(std::ostream& out) const {
    detail::write_scalar<uint32_t>(out, static_cast<uint32_t>(stage_sizes_.size()));
    for (uint32_t s : stage_sizes_) {
        detail::write_scalar<uint32_t>(out, s);
    }
    detail::write_scalar<uint64_t>(out, rows_);
    detail::write_bytes(out, payload_.data(), payload_.size());
}

CodeMatrix CodeMatrix::load(std::istream& in, size_t& offset) {
    auto n = detail::read_scalar<uint32_t>(in, offset, "stage count");
    if (n < 1) {
        throw FormatError("stage count must be >= 1", offset - 4);
    }
    std::vector<uint32_t> sizes(n);
    for (auto& s : sizes) {
        s = detail::read_scalar<uint32_t>(in, offset, "stage size");
        if (s < 1) {
            throw FormatError("stage size must be >= 1", offset - 4);
        }
    }
    CodeMatrix m(std::move(sizes));
    m.rows_ = detail::read_scalar<uint64_t>(in, offset, "row count");
    m.payload_.resize((m.rows_ * m.row_bits_ + 7) / 8);
    detail::read_bytes(in, m.payload_.data(), m.payload_.size(), offset, "code payload");
    return m;
}

namespace {

// Shared nearest-entry kernel. Scores s_i = ||e_i||^2 - 2 x.e_i, scanned in
// entry blocks; identical arithmetic for single-row and batched callers, so
// batched results stay bit-identical to per-row results.
NearestResult nearest_scored(const Codebook& cb, const Eigen::Ref<const VectorF>& x,
                             size_t search_block) {
    const Eigen::Index n = cb.size();
    float best = std::numeric_limits<float>::infinity();
    uint32_t best_idx = 0;
    VectorF dots;
    for (Eigen::Index begin = 0; begin < n; begin += static_cast<Eigen::Index>(search_block)) {
        Eigen::Index len = std::min<Eigen::Index>(search_block, n - begin);
        dots.noalias() = cb.effective.middleRows(begin, len) * x;
        for (Eigen::Index i = 0; i < len; ++i) {
            float score = cb.effective_sqnorm[begin + i] - 2.0f * dots[i];
            if (score < best) {
                best = score;
                best_idx = static_cast<uint32_t>(begin + i);
            }
        }
    }
    return {best_idx, best};
}

} // namespace

NearestResult nearest_entry(const Codebook& codebook, const Eigen::Ref<const VectorF>& x,
                            size_t search_block) {
    if (x.size() != codebook.dim()) {
        throw InvalidInput("vector dimension " + std::to_string(x.size()) +
                           " does not match codebook dimension " + std::to_string(codebook.dim()));
    }
    if (!x.allFinite()) {
        throw InvalidInput("query vector contains non-finite values");
    }
    NearestResult r = nearest_scored(codebook, x, search_block);
    r.distance = std::sqrt(std::max(0.0f, r.distance + x.squaredNorm()));
    return r;
}

QuantizeResult quantize(const CodebookStack& stack, const Eigen::Ref<const VectorF>& x,
                        size_t search_block) {
    check_dim(stack, x.size());
    QuantizeResult out;
    out.codes.reserve(stack.num_stages());
    out.final_residual = x;
    for (const auto& stage : stack.stages) {
        NearestResult n = nearest_scored(stage, out.final_residual, search_block);
        out.codes.push_back(n.index);
        out.final_residual -= stage.effective.row(n.index).transpose();
    }
    return out;
}

VectorF reconstruct(const CodebookStack& stack, const CodeVector& codes) {
    if (codes.size() != stack.num_stages()) {
        throw InvalidCode("code vector has " + std::to_string(codes.size()) +
                          " stages, stack has " + std::to_string(stack.num_stages()));
    }
    VectorF out = VectorF::Zero(stack.dim());
    for (size_t i = 0; i < codes.size(); ++i) {
        const auto& stage = stack.stages[i];
        if (codes[i] >= static_cast<uint32_t>(stage.size())) {
            throw InvalidCode("index " + std::to_string(codes[i]) +
                              " out of range for stage " + std::to_string(i));
        }
        out += stage.effective.row(codes[i]).transpose();
    }
    return out;
}

QuantizeBatchResult quantize_batch(const CodebookStack& stack, const Eigen::Ref<const MatrixF>& xs,
                                   size_t search_block) {
    if (xs.rows() > 0) {
        check_dim(stack, xs.cols());
    }
    QuantizeBatchResult out{CodeMatrix(stack.stage_sizes()), VectorF(xs.rows())};
    for (Eigen::Index r = 0; r < xs.rows(); ++r) {
        QuantizeResult q = quantize(stack, xs.row(r).transpose(), search_block);
        out.codes.append(q.codes);
        out.residual_norms[r] = q.final_residual.norm();
    }
    return out;
}

MatrixF reconstruct_block(const CodebookStack& stack, const CodeMatrix& codes,
                          size_t begin, size_t end) {
    if (begin > end || end > codes.rows()) {
        throw InvalidInput("row range [" + std::to_string(begin) + ", " + std::to_string(end) +
                           ") out of bounds for " + std::to_string(codes.rows()) + " rows");
    }
    MatrixF out(end - begin, stack.dim());
    for (size_t r = begin; r < end; ++r) {
        out.row(r - begin) = reconstruct(stack, codes.row(r)).transpose();
    }
    return out;
}

void save_stack(const CodebookStack& stack, std::ostream& out) {
    stack.validate();
    detail::write_bytes(out, kStackMagic, 4);
    detail::write_scalar<uint32_t>(out, kStackVersion);
    detail::write_scalar<uint8_t>(out, static_cast<uint8_t>(stack.cache_kind));
    detail::write_scalar<uint32_t>(out, static_cast<uint32_t>(stack.num_stages()));
    for (const auto& stage : stack.stages) {
        detail::write_scalar<uint32_t>(out, static_cast<uint32_t>(stage.size()));
        detail::write_scalar<uint32_t>(out, static_cast<uint32_t>(stage.dim()));
        detail::write_bytes(out, stage.entries.data(), sizeof(float) * stage.entries.size());
        detail::write_bytes(out, stage.projection.data(), sizeof(float) * stage.projection.size());
    }
}

void save_stack(const CodebookStack& stack, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open " + path + " for writing");
    }
    save_stack(stack, out);
    if (!out) {
        throw IoError("write failed for " + path);
    }
}

CodebookStack load_stack(std::istream& in) {
    size_t offset = 0;
    detail::expect_magic(in, kStackMagic, offset);
    auto version = detail::read_scalar<uint32_t>(in, offset, "version");
    if (version != kStackVersion) {
        throw FormatError("unsupported version " + std::to_string(version), offset - 4);
    }
    auto kind = detail::read_scalar<uint8_t>(in, offset, "cache kind");
    if (kind > 1) {
        throw FormatError("bad cache kind " + std::to_string(kind), offset - 1);
    }
    auto n = detail::read_scalar<uint32_t>(in, offset, "stage count");
    if (n < 1) {
        throw FormatError("stage count must be >= 1", offset - 4);
    }
    CodebookStack stack;
    stack.cache_kind = static_cast<CacheKind>(kind);
    stack.stages.resize(n);
    for (uint32_t i = 0; i < n; ++i) {
        auto s = detail::read_scalar<uint32_t>(in, offset, "codebook size");
        auto d = detail::read_scalar<uint32_t>(in, offset, "dimension");
        if (s < 1 || d < 1) {
            throw FormatError("codebook size and dimension must be >= 1", offset - 8);
        }
        size_t stage_offset = offset;
        Codebook& cb = stack.stages[i];
        cb.entries.resize(s, d);
        detail::read_bytes(in, cb.entries.data(), sizeof(float) * cb.entries.size(), offset,
                           "entries");
        cb.projection.resize(d, d);
        detail::read_bytes(in, cb.projection.data(), sizeof(float) * cb.projection.size(), offset,
                           "projection");
        if (!cb.entries.allFinite() || !cb.projection.allFinite()) {
            throw FormatError("non-finite values in stage " + std::to_string(i), stage_offset);
        }
        cb.refresh();
    }
    stack.validate();
    return stack;
}

CodebookStack load_stack(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path);
    }
    return load_stack(in);
}

uint64_t stack_content_hash(const CodebookStack& stack) {
    std::ostringstream buf(std::ios::binary);
    save_stack(stack, buf);
    std::string bytes = buf.str();
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

} // namespace vqkv
