#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "fusionhead/error.hpp"
#include "fusionhead/feature_store.hpp"
#include "fusionhead/io.hpp"
#include "fusionhead/rng.hpp"

using namespace fusionhead;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / "fusionhead_test_store";
    fs::create_directories(dir);
    return dir / name;
}

void write_raw(const fs::path& path, const std::string& bytes) {
    std::ofstream(path, std::ios::binary) << bytes;
}

std::string mbff_header(const char* magic, std::uint32_t n, std::uint32_t p) {
    std::string s(magic, 4);
    io::put_u32(s, 1);
    io::put_u32(s, n);
    io::put_u32(s, p);
    return s;
}

SyntheticSpec complementary_spec(std::uint64_t seed, std::size_t per_class = 100, double noise = 1.0) {
    SyntheticSpec spec;
    spec.num_classes = 4;
    spec.per_class = per_class;
    spec.seed = seed;
    spec.branches = {{16, {0, 1}, 3.0, noise}, {16, {2, 3}, 3.0, noise}};
    return spec;
}

}  // namespace

TEST_CASE("load_features decodes a valid MBFF file") {
    std::string bytes = mbff_header("MBFF", 2, 3);
    for (float v : {1.0f, -2.5f, 0.125f, 3.0f, 4.0f, -0.0f}) io::put_f32(bytes, v);
    const auto path = scratch("valid.mbff");
    write_raw(path, bytes);
    const BranchDataset ds = load_features(path);
    CHECK(ds.name == "valid");
    CHECK(ds.rows() == 2);
    CHECK(ds.dim() == 3);
    CHECK(ds.features(0, 1) == -2.5);
    CHECK(ds.features(1, 0) == 3.0);
}

TEST_CASE("load_features rejects bad magic, truncation and non-finite values") {
    std::string bad = mbff_header("XXXX", 2, 3);
    for (int i = 0; i < 6; ++i) io::put_f32(bad, 1.0f);
    write_raw(scratch("bad.mbff"), bad);
    CHECK_THROWS_AS(load_features(scratch("bad.mbff")), FormatError);

    std::string truncated = mbff_header("MBFF", 2, 3);
    for (int i = 0; i < 5; ++i) io::put_f32(truncated, 1.0f);
    write_raw(scratch("short.mbff"), truncated);
    CHECK_THROWS_AS(load_features(scratch("short.mbff")), CorruptionError);

    std::string nan = mbff_header("MBFF", 2, 2);
    for (float v : {1.0f, 2.0f, std::nanf(""), 4.0f}) io::put_f32(nan, v);
    write_raw(scratch("nan.mbff"), nan);
    try {
        load_features(scratch("nan.mbff"));
        FAIL("expected a validation error");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("row 1, col 0") != std::string::npos);
    }

    std::string version = "MBFF";
    io::put_u32(version, 9);
    write_raw(scratch("version.mbff"), version);
    CHECK_THROWS_AS(load_features(scratch("version.mbff")), FormatError);
}

TEST_CASE("CSV fallback") {
    write_raw(scratch("fixture.csv"), "1,2.5,-3\n4,5,6e-1\n");
    const BranchDataset ds = load_features(scratch("fixture.csv"));
    CHECK(ds.features == Matrix{{1, 2.5, -3}, {4, 5, 0.6}});
    CHECK_THROWS_AS(parse_features_csv("1,2\n3\n", "ragged"), FormatError);
    CHECK_THROWS_AS(parse_features_csv("1,abc\n", "junk"), FormatError);
    CHECK_THROWS_AS(parse_features_csv("1,inf\n", "inf"), ValidationError);
    CHECK_THROWS_AS(parse_features_csv("", "empty"), ValidationError);
}

TEST_CASE("property: MBFF round trip is bitwise for float32-representable values") {
    Rng rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        Matrix m(1 + rng.below(20), 1 + rng.below(20));
        for (double& v : m.values()) v = static_cast<float>(rng.normal() * std::pow(10.0, rng.uniform(-6, 6)));
        const auto path = scratch("roundtrip.mbff");
        write_features(path, {"rt", m});
        const BranchDataset back = load_features(path);
        REQUIRE(back.features.rows() == m.rows());
        REQUIRE(back.features.cols() == m.cols());
        CHECK(std::memcmp(back.features.values().data(), m.values().data(), 8 * m.values().size()) == 0);
    }
    CHECK_THROWS_AS(encode_mbff(Matrix{{1e300}}), ValidationError);
}

TEST_CASE("load_labels") {
    const LabelVector l = parse_labels("K=3\n0\n2\n1");
    CHECK(l.num_classes() == 3);
    CHECK(std::vector<int>(l.values().begin(), l.values().end()) == std::vector<int>{0, 2, 1});

    try {
        parse_labels("K=2\n0\n5");
        FAIL("expected a validation error");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_labels("K=2\n"), ValidationError);
    CHECK_THROWS_AS(parse_labels("K=2\n-1\n"), ValidationError);
    CHECK_THROWS_AS(parse_labels("K=1\n0\n"), ValidationError);
    CHECK_THROWS_AS(parse_labels("classes=2\n0\n"), ValidationError);
    CHECK_THROWS_AS(parse_labels("K=2\n0\n\n1\n"), ValidationError);

    const auto path = scratch("labels.txt");
    write_labels(path, l);
    CHECK(load_labels(path) == l);
    CHECK(parse_labels("K=4\n0\n1\n").missing_classes() == std::vector<int>{2, 3});
}

TEST_CASE("generate_synthetic is a pure function of the seed") {
    const SyntheticData a = generate_synthetic(complementary_spec(7));
    const SyntheticData b = generate_synthetic(complementary_spec(7));
    REQUIRE(a.branches.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) CHECK(encode_mbff(a.branches[i].features) == encode_mbff(b.branches[i].features));
    CHECK(a.labels == b.labels);
    const SyntheticData c = generate_synthetic(complementary_spec(8));
    CHECK(encode_mbff(a.branches[0].features) != encode_mbff(c.branches[0].features));
}

TEST_CASE("generate_synthetic puts the offset on the owning block only") {
    // Class means estimated from many samples: class 1 in branch 0 owns block 1 (cols 8..15).
    const SyntheticData d = generate_synthetic(complementary_spec(3, 2000, 0.5));
    std::vector<double> mean(16, 0.0);
    std::size_t count = 0;
    for (std::size_t i = 0; i < d.labels.size(); ++i) {
        if (d.labels[i] != 1) continue;
        ++count;
        for (std::size_t j = 0; j < 16; ++j) mean[j] += d.branches[0].features(i, j);
    }
    for (std::size_t j = 0; j < 16; ++j) CHECK(mean[j] / count == doctest::Approx(j >= 8 ? 3.0 : 0.0).epsilon(0.05).scale(1.0));
}

TEST_CASE("property: synthetic noise std is within 10% of the requested scale") {
    for (double sigma : {0.3, 1.0, 2.5}) {
        SyntheticSpec spec = complementary_spec(17, 3000, sigma);
        const SyntheticData d = generate_synthetic(spec);
        // Branch 0 leaves classes 2 and 3 at zero mean.
        double sq = 0.0;
        std::size_t count = 0;
        for (std::size_t i = 0; i < d.labels.size(); ++i) {
            if (d.labels[i] < 2) continue;
            for (double v : d.branches[0].features.row(i)) {
                sq += v * v;
                ++count;
            }
        }
        REQUIRE(count >= 10000);
        CHECK(std::abs(std::sqrt(sq / count) - sigma) <= 0.1 * sigma);
    }
}

TEST_CASE("generate_synthetic rejects invalid specs") {
    SyntheticSpec spec = complementary_spec(1);
    spec.branches = {{16, {}, 3.0, 1.0}, {16, {}, 3.0, 1.0}};
    CHECK_THROWS_AS(generate_synthetic(spec), SpecError);
    spec.branches = {{16, {4}, 3.0, 1.0}};
    CHECK_THROWS_AS(generate_synthetic(spec), SpecError);
    spec.branches = {{16, {0}, 0.0, 1.0}};
    CHECK_THROWS_AS(generate_synthetic(spec), SpecError);
    spec.branches = {{16, {0}, 1.0, -1.0}};
    CHECK_THROWS_AS(generate_synthetic(spec), SpecError);
    spec.branches = {{1, {0, 1}, 1.0, 1.0}};
    CHECK_THROWS_AS(generate_synthetic(spec), SpecError);
}

TEST_CASE("concat_features") {
    const BranchDataset a{"a", Matrix{{1, 2}, {3, 4}}};
    const BranchDataset b{"b", Matrix{{5}, {6}}};
    CHECK(concat_features(std::vector{a}).features == a.features);
    CHECK(concat_features(std::vector{BranchDataset{"x", Matrix{{1.5}}}, BranchDataset{"y", Matrix{{-2}}}}).features ==
          Matrix{{1.5, -2}});
    const BranchDataset ab = concat_features(std::vector{a, b});
    CHECK(ab.features == Matrix{{1, 2, 5}, {3, 4, 6}});
    CHECK_THROWS_AS(concat_features(std::vector{a, BranchDataset{"c", Matrix{{1}}}}), ShapeError);

    // Network-sized widths.
    std::vector<BranchDataset> nets{{"alex", Matrix(1, 4096)}, {"vgg", Matrix(1, 4096)}, {"inception", Matrix(1, 2048)}};
    CHECK(concat_features(nets).dim() == 10240);
}

TEST_CASE("property: concat blocks reproduce each branch exactly") {
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 1 + rng.below(10);
        std::vector<BranchDataset> branches;
        std::size_t total = 0;
        for (std::size_t b = 0, m = 1 + rng.below(4); b < m; ++b) {
            Matrix f(n, 1 + rng.below(6));
            for (double& v : f.values()) v = rng.normal();
            total += f.cols();
            branches.push_back({"b" + std::to_string(b), f});
        }
        const BranchDataset c = concat_features(branches);
        REQUIRE(c.dim() == total);
        std::size_t offset = 0;
        for (const auto& b : branches) {
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < b.dim(); ++j) CHECK(c.features(i, offset + j) == b.features(i, j));
            offset += b.dim();
        }
    }
}

TEST_CASE("split_train_test") {
    std::vector<int> raw;
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 10; ++i) raw.push_back(c);
    const LabelVector labels(raw, 3);
    const Split s = split_train_test(labels, 0.5, 4);
    for (int c = 0; c < 3; ++c) {
        CHECK(std::count_if(s.train.begin(), s.train.end(), [&](auto i) { return labels[i] == c; }) == 5);
        CHECK(std::count_if(s.test.begin(), s.test.end(), [&](auto i) { return labels[i] == c; }) == 5);
    }
    const Split again = split_train_test(labels, 0.5, 4);
    CHECK(again.train == s.train);
    CHECK(again.test == s.test);

    std::set<std::size_t> all(s.train.begin(), s.train.end());
    for (auto i : s.test) CHECK(all.insert(i).second);
    CHECK(all.size() == labels.size());

    CHECK(split_train_test(labels, 0.5, 5).train != s.train);
    CHECK_THROWS_AS(split_train_test(labels, 0.0, 1), ValidationError);
    CHECK_THROWS_AS(split_train_test(labels, 1.0, 1), ValidationError);
    CHECK_THROWS_AS(split_train_test(LabelVector({0, 0, 1}, 2), 0.5, 1), StratificationError);
}

TEST_CASE("l2_normalize_rows") {
    const BranchDataset ds = l2_normalize_rows({"x", Matrix{{3, 4}, {0, 0}}});
    CHECK(ds.features(0, 0) == doctest::Approx(0.6));
    CHECK(ds.features(0, 1) == doctest::Approx(0.8));
    CHECK(ds.features(1, 0) == 0.0);
}
