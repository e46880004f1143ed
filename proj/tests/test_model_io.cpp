#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "splitkit/error.hpp"
#include "splitkit/model_io.hpp"
#include "splitkit/rng.hpp"
#include "support/test_networks.hpp"

using namespace splitkit;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() / ("splitkit_io_" + std::to_string(counter++));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::vector<unsigned char> slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("manifest round-trip reproduces the network and blob bit-exactly") {
    TempDir dir;
    Rng rng(31);
    const Network net = testing::random_mixed_network(rng);
    const std::string m1 = (dir.path / "model.json").string();
    save_model(net, m1);
    const Network loaded = load_model(m1);
    REQUIRE(loaded.layers.size() == net.layers.size());
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        CHECK(loaded.layers[i].kind == net.layers[i].kind);
        if (net.layers[i].weight.size() > 0) {
            CHECK(max_abs_diff(loaded.layers[i].weight, net.layers[i].weight) == 0.0);
        }
    }
    const std::string m2 = (dir.path / "again" / "model.json").string();
    save_model(loaded, m2);
    CHECK(slurp(dir.path / "model.bin") == slurp(dir.path / "again" / "model.bin"));
}

TEST_CASE("manual manifest with Linear(2->1) deserializes directly") {
    TempDir dir;
    Network net;
    net.input_shape = {2};
    net.layers.push_back(Layer::linear(Tensor({1, 2}, {1, -2})));
    const std::string m = (dir.path / "model.json").string();
    save_model(net, m);
    const Network loaded = load_model(m);
    CHECK(loaded.layers[0].weight.at2(0, 0) == 1.0);
    CHECK(loaded.layers[0].weight.at2(0, 1) == -2.0);
}

TEST_CASE("truncated blob reports expected vs actual byte count") {
    TempDir dir;
    Network net;
    net.input_shape = {2};
    net.layers.push_back(Layer::linear(Tensor({2, 2}, {1, 2, 3, 4})));
    const std::string m = (dir.path / "model.json").string();
    save_model(net, m);
    fs::resize_file(dir.path / "model.bin", 8);
    try {
        load_model(m);
        FAIL("expected LoadError");
    } catch (const LoadError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("32") != std::string::npos);
        CHECK(msg.find("8") != std::string::npos);
    }
}

TEST_CASE("checksum mismatch is detected") {
    TempDir dir;
    Network net;
    net.input_shape = {1};
    net.layers.push_back(Layer::linear(Tensor({1, 1}, {1.5})));
    const std::string m = (dir.path / "model.json").string();
    save_model(net, m);
    {
        std::fstream f(dir.path / "model.bin", std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(0);
        f.put('\x7f');
    }
    CHECK_THROWS_AS(load_model(m), LoadError);
}

TEST_CASE("unknown layer kinds are rejected with a descriptive error") {
    TempDir dir;
    Network net;
    net.input_shape = {1};
    net.layers.push_back(Layer::linear(Tensor({1, 1}, {1.0})));
    const std::string m = (dir.path / "model.json").string();
    save_model(net, m);
    std::ifstream in(m);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    const auto at = text.find("\"Linear\"");
    REQUIRE(at != std::string::npos);
    text.replace(at, 8, "\"Linnear\"");
    std::ofstream out(m);
    out << text;
    out.close();
    try {
        load_model(m);
        FAIL("expected LoadError");
    } catch (const LoadError& e) {
        CHECK(std::string(e.what()).find("Linnear") != std::string::npos);
    }
}

TEST_CASE("split model round-trip keeps pairs, mode and source") {
    TempDir dir;
    Rng rng(32);
    testing::MixedNetOptions opt;
    opt.allow_batchnorm = true;
    const Network net = testing::random_mixed_network(rng, opt);
    const SplitNetwork sn = split_network(net, MaxPoolMode::Wta);
    const std::string m = (dir.path / "split.json").string();
    save_split_model(sn, m);
    CHECK(manifest_is_split(m));
    CHECK_THROWS_AS(load_model(m), LoadError);
    const SplitNetwork loaded = load_split_model(m);
    CHECK(loaded.maxpool_mode == MaxPoolMode::Wta);
    REQUIRE(loaded.layers.size() == sn.layers.size());
    CHECK(loaded.max_negativity() == 0.0);
    CHECK(loaded.max_reconstruction_error() == 0.0);
    const Tensor x = testing::random_input_for(rng, net);
    CHECK(max_abs_diff(forward(loaded.source, x).output(), forward(net, x).output()) == 0.0);
}
