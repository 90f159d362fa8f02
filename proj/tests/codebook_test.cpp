// Copyright 2026 The vqkv authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "test_util.hpp"

using namespace vqkv;
using vqkv::testing::random_matrix;
using vqkv::testing::random_stack;
using vqkv::testing::stack_from_entries;

namespace {

MatrixF make_entries(std::initializer_list<std::initializer_list<float>> rows) {
    MatrixF m(static_cast<Eigen::Index>(rows.size()),
              static_cast<Eigen::Index>(rows.begin()->size()));
    Eigen::Index r = 0;
    for (const auto& row : rows) {
        Eigen::Index c = 0;
        for (float v : row) {
            m(r, c++) = v;
        }
        ++r;
    }
    return m;
}

} // namespace

TEST_CASE("nearest_entry picks the closest effective entry") {
    auto stack = stack_from_entries({make_entries({{0, 0}, {1, 0}, {0, 1}})});
    VectorF x(2);
    x << 0.9f, 0.1f;
    auto [index, distance] = nearest_entry(stack.stages[0], x);
    CHECK(index == 1);
    CHECK(distance == doctest::Approx(0.14142136).epsilon(1e-4));
}

TEST_CASE("nearest_entry exact match has distance zero") {
    auto stack = stack_from_entries({make_entries({{0.3f, -1.2f}, {2.0f, 0.5f}, {-0.7f, 0.9f}})});
    VectorF x = stack.stages[0].effective.row(2).transpose();
    auto [index, distance] = nearest_entry(stack.stages[0], x);
    CHECK(index == 2);
    CHECK(distance == 0.0f);
}

TEST_CASE("nearest_entry breaks ties toward the lowest index") {
    auto stack = stack_from_entries({make_entries({{1, 0}, {1, 0}})});
    VectorF x(2);
    x << 1.0f, 0.0f;
    CHECK(nearest_entry(stack.stages[0], x).index == 0);
}

TEST_CASE("nearest_entry rejects a dimension mismatch") {
    auto stack = stack_from_entries({make_entries({{1, 0}, {0, 1}})});
    VectorF x(3);
    x.setZero();
    CHECK_THROWS_AS(nearest_entry(stack.stages[0], x), InvalidInput);
}

TEST_CASE("duplicating an entry never changes the selected index") {
    std::mt19937_64 rng(11);
    auto stack = random_stack(rng, 1, 16, 6);
    const Codebook& cb = stack.stages[0];
    for (int trial = 0; trial < 50; ++trial) {
        VectorF x = random_matrix(rng, 1, 6).row(0).transpose();
        uint32_t base = nearest_entry(cb, x).index;
        Codebook dup = cb;
        dup.entries.conservativeResize(dup.entries.rows() + 1, Eigen::NoChange);
        dup.entries.row(dup.entries.rows() - 1) = cb.entries.row(base);
        dup.refresh();
        CHECK(nearest_entry(dup, x).index == base);
    }
}

TEST_CASE("quantize stops with zero residual on a representable vector") {
    auto stack = stack_from_entries({make_entries({{0.5f, 0.25f}, {-1, 2}, {3, 1}})});
    VectorF x(2);
    x << -1.0f, 2.0f;
    auto [codes, residual] = quantize(stack, x);
    CHECK(codes == CodeVector{1});
    CHECK(residual.norm() == 0.0f);
}

TEST_CASE("quantize walks the residual through both stages") {
    auto stack = stack_from_entries({make_entries({{1, 0}, {0, 1}}),
                                     make_entries({{0, 0.5f}, {0.5f, 0}})});
    VectorF x(2);
    x << 1.2f, 0.4f;
    auto [codes, residual] = quantize(stack, x);
    CHECK(codes == CodeVector{0, 0});
    CHECK(residual[0] == doctest::Approx(0.2f).epsilon(1e-6));
    CHECK(residual[1] == doctest::Approx(-0.1f).epsilon(1e-6));

    VectorF recon = reconstruct(stack, codes);
    CHECK(recon[0] == doctest::Approx(1.0f));
    CHECK(recon[1] == doctest::Approx(0.5f));
}

TEST_CASE("all-zero codebooks are no-ops") {
    auto stack = stack_from_entries({MatrixF::Zero(3, 4), MatrixF::Zero(2, 4)});
    std::mt19937_64 rng(5);
    VectorF x = random_matrix(rng, 1, 4).row(0).transpose();
    auto [codes, residual] = quantize(stack, x);
    CHECK(codes == CodeVector{0, 0});
    CHECK(residual.isApprox(x));
}

TEST_CASE("residual identity holds for random stacks") {
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 100; ++trial) {
        size_t n = 1 + rng() % 4;
        Eigen::Index d = 2 + static_cast<Eigen::Index>(rng() % 15);
        auto stack = random_stack(rng, n, 8, d);
        VectorF x = random_matrix(rng, 1, d).row(0).transpose();
        auto [codes, residual] = quantize(stack, x);
        VectorF round_trip = reconstruct(stack, codes) + residual;
        CHECK((round_trip - x).norm() <= 1e-5 * std::max(1e-6f, x.norm()));
        // residual norm equals the reconstruction error
        float err = (x - reconstruct(stack, codes)).norm();
        CHECK(residual.norm() == doctest::Approx(err).epsilon(1e-5));
    }
}

TEST_CASE("single-stage reconstruct returns the effective entry") {
    std::mt19937_64 rng(3);
    auto stack = random_stack(rng, 1, 5, 7);
    for (uint32_t k = 0; k < 5; ++k) {
        CHECK(reconstruct(stack, {k}).isApprox(stack.stages[0].effective.row(k).transpose()));
    }
}

TEST_CASE("reconstruct rejects out-of-range codes") {
    std::mt19937_64 rng(4);
    auto stack = random_stack(rng, 2, 4, 3);
    CHECK_THROWS_AS(reconstruct(stack, {0, 4}), InvalidCode);
    CHECK_THROWS_AS(reconstruct(stack, {0}), InvalidCode);
}

TEST_CASE("quantize_batch on an empty batch") {
    std::mt19937_64 rng(6);
    auto stack = random_stack(rng, 2, 4, 3);
    auto [codes, norms] = quantize_batch(stack, MatrixF(0, 3));
    CHECK(codes.rows() == 0);
    CHECK(norms.size() == 0);
}

TEST_CASE("quantize_batch of exact entries has zero norms") {
    auto stack = stack_from_entries({make_entries({{1, 0}, {0, 1}, {1, 1}, {2, 2}})});
    MatrixF xs(3, 2);
    xs << 1, 1, 2, 2, 0, 1;
    auto [codes, norms] = quantize_batch(stack, xs);
    CHECK(codes.row(0) == CodeVector{2});
    CHECK(codes.row(1) == CodeVector{3});
    CHECK(codes.row(2) == CodeVector{1});
    CHECK(norms.maxCoeff() == 0.0f);
}

TEST_CASE("quantize_batch matches per-row quantize element for element") {
    std::mt19937_64 rng(7);
    auto stack = random_stack(rng, 3, 4, 8);
    MatrixF xs = random_matrix(rng, 16, 8);
    auto [codes, norms] = quantize_batch(stack, xs);
    for (Eigen::Index r = 0; r < xs.rows(); ++r) {
        auto q = quantize(stack, xs.row(r).transpose());
        CHECK(codes.row(static_cast<size_t>(r)) == q.codes);
        CHECK(norms[r] == q.final_residual.norm());
    }
}

TEST_CASE("search block size never changes batch results") {
    std::mt19937_64 rng(8);
    auto stack = random_stack(rng, 2, 33, 5);
    MatrixF xs = random_matrix(rng, 10, 5);
    auto whole = quantize_batch(stack, xs, 4096);
    for (size_t block : {1u, 3u, 7u, 32u, 33u}) {
        auto split = quantize_batch(stack, xs, block);
        CHECK(split.codes == whole.codes);
        CHECK((split.residual_norms.array() == whole.residual_norms.array()).all());
    }
}

TEST_CASE("reconstruct_block partitions concatenate to the full reconstruction") {
    std::mt19937_64 rng(9);
    auto stack = random_stack(rng, 3, 6, 4);
    MatrixF xs = random_matrix(rng, 10, 4);
    auto [codes, norms] = quantize_batch(stack, xs);
    MatrixF full = reconstruct_block(stack, codes, 0, 10);
    for (size_t block = 1; block <= 4; ++block) {
        size_t begin = 0;
        while (begin < 10) {
            size_t end = std::min<size_t>(10, begin + block);
            MatrixF part = reconstruct_block(stack, codes, begin, end);
            CHECK((part.array() ==
                   full.middleRows(static_cast<Eigen::Index>(begin),
                                   static_cast<Eigen::Index>(end - begin))
                           .array())
                          .all());
            begin = end;
        }
    }
    CHECK(reconstruct_block(stack, codes, 4, 4).rows() == 0);
    CHECK_THROWS_AS(reconstruct_block(stack, codes, 4, 11), InvalidInput);
    CHECK_THROWS_AS(reconstruct_block(stack, codes, 5, 4), InvalidInput);
}

TEST_CASE("code matrix round-trips through the bit-packed payload") {
    std::mt19937_64 rng(10);
    for (int trial = 0; trial < 20; ++trial) {
        size_t n = 1 + rng() % 5;
        std::vector<uint32_t> sizes;
        for (size_t i = 0; i < n; ++i) {
            sizes.push_back(1 + static_cast<uint32_t>(rng() % 300)); // non-powers of two too
        }
        CodeMatrix m(sizes);
        std::vector<CodeVector> truth;
        size_t rows = rng() % 40;
        for (size_t r = 0; r < rows; ++r) {
            CodeVector codes;
            for (uint32_t s : sizes) {
                codes.push_back(static_cast<uint32_t>(rng() % s));
            }
            m.append(codes);
            truth.push_back(codes);
        }
        for (size_t r = 0; r < rows; ++r) {
            CHECK(m.row(r) == truth[r]);
        }
    }
}

TEST_CASE("appending rows leaves earlier rows untouched") {
    CodeMatrix m({5, 3}); // 3 + 2 bits per row, rows straddle bytes
    std::vector<CodeVector> truth;
    std::mt19937_64 rng(12);
    for (size_t r = 0; r < 30; ++r) {
        CodeVector codes{static_cast<uint32_t>(rng() % 5), static_cast<uint32_t>(rng() % 3)};
        m.append(codes);
        truth.push_back(codes);
        for (size_t p = 0; p <= r; ++p) {
            REQUIRE(m.row(p) == truth[p]);
        }
    }
}

TEST_CASE("code matrix rejects out-of-range appends") {
    CodeMatrix m({4, 4});
    CHECK_THROWS_AS(m.append({4, 0}), InvalidCode);
    CHECK_THROWS_AS(m.append({0}), InvalidInput);
}

TEST_CASE("stack save/load round-trips") {
    std::mt19937_64 rng(13);
    auto stack = random_stack(rng, 3, 9, 6, CacheKind::value);
    std::ostringstream out(std::ios::binary);
    save_stack(stack, out);
    std::istringstream in(out.str(), std::ios::binary);
    CodebookStack loaded = load_stack(in);
    REQUIRE(loaded.num_stages() == 3);
    CHECK(loaded.cache_kind == CacheKind::value);
    for (size_t i = 0; i < 3; ++i) {
        CHECK((loaded.stages[i].entries.array() == stack.stages[i].entries.array()).all());
        CHECK((loaded.stages[i].projection.array() == stack.stages[i].projection.array()).all());
        // effective entries are recomputed, not stored
        CHECK(loaded.stages[i].effective.isApprox(stack.stages[i].effective, 1e-6f));
    }
    CHECK(stack_content_hash(loaded) == stack_content_hash(stack));
}

TEST_CASE("stack loader reports the byte offset of a bad field") {
    std::mt19937_64 rng(14);
    auto stack = random_stack(rng, 1, 4, 3);
    std::ostringstream out(std::ios::binary);
    save_stack(stack, out);
    std::string bytes = out.str();

    SUBCASE("bad magic") {
        bytes[0] = 'X';
        std::istringstream in(bytes, std::ios::binary);
        try {
            load_stack(in);
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(e.byte_offset == 0);
        }
    }
    SUBCASE("truncated payload") {
        std::istringstream in(bytes.substr(0, bytes.size() - 5), std::ios::binary);
        CHECK_THROWS_AS(load_stack(in), FormatError);
    }
}
