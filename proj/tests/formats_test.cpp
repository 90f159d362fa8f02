// Copyright 2026 The vqkv authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "test_util.hpp"
#include "vqkv/ratio.hpp"
#include "vqkv/synthetic.hpp"

using namespace vqkv;

namespace {

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

} // namespace

TEST_CASE("headline compression ratios") {
    CHECK(compression_ratio_percent({56, 1024, 16, 512, 128, 128}) ==
          doctest::Approx(82.8).epsilon(0.001));
    CHECK(compression_ratio_percent({56, 1024, 10, 65536, 128, 128}) ==
          doctest::Approx(82.4).epsilon(0.001));
    CHECK(compression_ratio_percent({56, 1024, 8, 512, 128, 128}) ==
          doctest::Approx(84.6).epsilon(0.001));
    // minimal codebooks: 100 * (1 - 2/4096)
    CHECK(compression_ratio_percent({1, 2, 1, 2, 128, 128}) ==
          doctest::Approx(100.0 * (1.0 - 2.0 / 4096.0)).epsilon(1e-9));
}

TEST_CASE("ratio config validation") {
    CHECK_THROWS_AS(compression_ratio_percent({0, 2, 1, 2, 128, 128}), InvalidInput);
    CHECK_THROWS_AS(compression_ratio_percent({1, 1, 1, 2, 128, 128}), InvalidInput);
}

TEST_CASE("dataset save/load round-trips") {
    std::mt19937_64 rng(31);
    VectorDataset data{vqkv::testing::random_matrix(rng, 17, 5)};
    auto path = std::filesystem::temp_directory_path() / "vqkv_dataset_test.vecd";
    save_dataset(data, path.string());
    VectorDataset loaded = load_dataset(path.string());
    CHECK((loaded.payload.array() == data.payload.array()).all());
    std::filesystem::remove(path);
}

TEST_CASE("dataset loader reports offsets for malformed files") {
    auto path = std::filesystem::temp_directory_path() / "vqkv_dataset_bad.vecd";
    {
        std::ofstream out(path, std::ios::binary);
        out.write("VECD", 4);
        uint32_t version = 9;
        out.write(reinterpret_cast<const char*>(&version), 4);
    }
    try {
        load_dataset(path.string());
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.byte_offset == 4);
    }
    std::filesystem::remove(path);
}

TEST_CASE("generation is deterministic to the byte") {
    SyntheticSpec spec;
    spec.dim = 6;
    spec.count = 100;
    spec.component_count = 3;
    spec.seed = 9;
    auto a = std::filesystem::temp_directory_path() / "vqkv_gen_a.vecd";
    auto b = std::filesystem::temp_directory_path() / "vqkv_gen_b.vecd";
    save_dataset(generate(spec), a.string());
    save_dataset(generate(spec), b.string());
    CHECK(slurp(a) == slurp(b));
    std::filesystem::remove(a);
    std::filesystem::remove(b);
}

TEST_CASE("rotary rotation preserves row norms") {
    SyntheticSpec base;
    base.kind = SyntheticKind::gaussian_mixture;
    base.dim = 8;
    base.count = 64;
    base.seed = 12;
    SyntheticSpec rotated = base;
    rotated.kind = SyntheticKind::rope_rotated_keys;
    VectorDataset plain = generate(base);
    VectorDataset keys = generate(rotated);
    for (Eigen::Index r = 0; r < base.count; ++r) {
        CHECK(keys.payload.row(r).norm() ==
              doctest::Approx(plain.payload.row(r).norm()).epsilon(1e-5));
    }
}

TEST_CASE("single zero-mean component stays near zero") {
    SyntheticSpec spec;
    spec.dim = 4;
    spec.count = 4000;
    spec.component_count = 1;
    spec.mean_scale = 0.0f;
    spec.component_std = 1.0f;
    spec.seed = 8;
    VectorDataset data = generate(spec);
    double bound = 4.0 / std::sqrt(static_cast<double>(spec.count));
    for (Eigen::Index c = 0; c < spec.dim; ++c) {
        CHECK(std::abs(data.payload.col(c).cast<double>().mean()) < bound);
    }
}

TEST_CASE("rope kind rejects odd dimensions") {
    SyntheticSpec spec;
    spec.kind = SyntheticKind::rope_rotated_keys;
    spec.dim = 7;
    CHECK_THROWS_AS(generate(spec), InvalidInput);
}
