#include <cstring>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "fusionhead/checkpoint.hpp"
#include "fusionhead/error.hpp"
#include "fusionhead/rng.hpp"

using namespace fusionhead;
namespace fs = std::filesystem;

TEST_CASE("MBFM checkpoint round trip with sidecar") {
    const fs::path dir = fs::temp_directory_path() / "fusionhead_test_ckpt";
    fs::create_directories(dir);
    TrainConfig config;
    config.seed = 77;
    config.learning_rate = 0.125;
    Checkpoint ckpt{init_branch("alex_fc7", 6, 3, config), config, {1.5, 0.75, 0.5}};
    ckpt.model.bias = Vector{0.1, -0.2, 1e-17};
    save_checkpoint(dir / "a.mbfm", ckpt);

    const Checkpoint back = load_checkpoint(dir / "a.mbfm");
    CHECK(back.model.name == "alex_fc7");
    CHECK(std::memcmp(back.model.weights.values().data(), ckpt.model.weights.values().data(), 8 * 18) == 0);
    CHECK(back.model.bias == ckpt.model.bias);
    CHECK(back.config.seed == 77);
    CHECK(back.config.learning_rate == 0.125);
    CHECK(back.loss_trace == ckpt.loss_trace);

    const std::string bytes = encode_mbfm(ckpt.model);
    CHECK(bytes.substr(0, 4) == "MBFM");
    CHECK(bytes.size() == 16 + 8 * (18 + 3));

    fs::remove(sidecar_path(dir / "a.mbfm"));
    CHECK(load_checkpoint(dir / "a.mbfm").model.name == "a");
}

TEST_CASE("MBFM decode errors") {
    const BranchModel m{"m", Matrix(2, 2), Vector(2)};
    std::string bytes = encode_mbfm(m);
    CHECK_THROWS_AS(decode_mbfm("XXXX" + bytes.substr(4), "x"), FormatError);
    CHECK_THROWS_AS(decode_mbfm(bytes.substr(0, bytes.size() - 3), "x"), CorruptionError);
    std::string nan = bytes;
    const double bad = std::nan("");
    std::memcpy(nan.data() + 16, &bad, 8);
    CHECK_THROWS_AS(decode_mbfm(nan, "x"), ValidationError);
}
