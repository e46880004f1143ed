#include <doctest.h>

#include <cmath>

#include "splitkit/error.hpp"
#include "splitkit/network.hpp"
#include "splitkit/rng.hpp"
#include "support/test_networks.hpp"

using namespace splitkit;
using testing::random_input_for;
using testing::random_mixed_network;
using testing::random_relu_mlp;
using testing::random_tensor;

namespace {

Network tiny_linear_relu() {
    Network net;
    net.input_shape = {2};
    net.layers.push_back(Layer::linear(Tensor({1, 2}, {1, -2})));
    net.layers.push_back(Layer::relu());
    return net;
}

}  // namespace

TEST_CASE("forward hand evaluation on Linear+ReLU") {
    const Network net = tiny_linear_relu();
    const Trace tr = forward(net, Tensor({2}, {3, 1}));
    CHECK(tr.values[1][0] == 1.0);  // z
    CHECK(tr.values[2][0] == 1.0);  // a
}

TEST_CASE("forward of zero input through bias-free net is zero") {
    Rng rng(21);
    const Network net = random_relu_mlp(rng, 2, 4, 8, false);
    const Trace tr = forward(net, Tensor(net.input_shape));
    CHECK(tr.output().max_abs() == 0.0);
}

TEST_CASE("forward is deterministic") {
    Rng rng(22);
    const Network net = random_mixed_network(rng);
    const Tensor x = random_input_for(rng, net);
    const Trace a = forward(net, x);
    const Trace b = forward(net, x);
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        CHECK(max_abs_diff(a.values[i], b.values[i]) == 0.0);
    }
}

TEST_CASE("backward matches the chain rule by hand") {
    const Network net = tiny_linear_relu();
    const Trace tr = forward(net, Tensor({2}, {3, 1}));
    const GradTrace gt = backward(net, tr, 0);
    CHECK(gt.input_grad()[0] == 1.0);
    CHECK(gt.input_grad()[1] == -2.0);
}

TEST_CASE("backward through dead ReLU region is zero") {
    const Network net = tiny_linear_relu();
    const Trace tr = forward(net, Tensor({2}, {0, 2}));  // z = -4 < 0
    const GradTrace gt = backward(net, tr, 0);
    CHECK(gt.input_grad().max_abs() == 0.0);
}

TEST_CASE("backward agrees with central finite differences away from kinks") {
    Rng rng(23);
    int done = 0;
    while (done < 100) {
        const Network net = random_mixed_network(rng);
        const Tensor x = random_input_for(rng, net);
        const Trace tr = forward(net, x);
        // Keep a safety margin to every activation kink.
        bool safe = true;
        for (std::size_t i = 0; i < net.layers.size(); ++i) {
            if (net.layers[i].kind != LayerKind::ReLU) continue;
            const Tensor& z = tr.values[i];
            for (std::int64_t j = 0; j < z.size(); ++j) safe &= std::fabs(z[j]) > 1e-3;
        }
        if (!safe) continue;
        const std::int64_t out = rng.uniform_int(0, tr.output().size() - 1);
        const GradTrace gt = backward(net, tr, out);
        const Tensor fd = finite_diff_grad(net, x, out, 1e-5);
        double scale_ref = std::max(1.0, fd.max_abs());
        CHECK(max_abs_diff(gt.input_grad(), fd) / scale_ref < 1e-5);
        ++done;
    }
}

TEST_CASE("finite differences on a pure linear map are exact") {
    Network net;
    net.input_shape = {2};
    net.layers.push_back(Layer::linear(Tensor({1, 2}, {2, 3})));
    const Tensor g = finite_diff_grad(net, Tensor({2}, {0.3, -0.4}), 0, 1e-4);
    CHECK(std::fabs(g[0] - 2.0) < 1e-9);
    CHECK(std::fabs(g[1] - 3.0) < 1e-9);

    Network zero;
    zero.input_shape = {2};
    zero.layers.push_back(Layer::linear(Tensor({1, 2}, {0, 0})));
    CHECK(finite_diff_grad(zero, Tensor({2}, {1, 1}), 0, 1e-4).max_abs() == 0.0);
}

TEST_CASE("bias-free ReLU nets are positively homogeneous") {
    Rng rng(24);
    for (int t = 0; t < 20; ++t) {
        testing::MixedNetOptions opt;
        opt.allow_bias = false;
        opt.allow_batchnorm = false;
        const Network net = random_mixed_network(rng, opt);
        const Tensor x = random_input_for(rng, net);
        const double lam = rng.uniform(0.0, 3.0);
        const Tensor fx = forward(net, x).output();
        const Tensor flx = forward(net, scale(x, lam)).output();
        CHECK(max_abs_diff(flx, scale(fx, lam)) < 1e-9 * std::max(1.0, fx.max_abs()));
    }
}

TEST_CASE("merge_batchnorm identity normalization keeps weights") {
    Network net;
    net.input_shape = {1};
    net.layers.push_back(Layer::linear(Tensor({1, 1}, {2.0})));
    net.layers.push_back(Layer::batchnorm_eval(Tensor({1}, {1.0}), Tensor({1}, {0.0}),
                                               Tensor({1}, {0.0}), Tensor({1}, {1.0}), 0.0));
    const Network merged = merge_batchnorm(net);
    CHECK(merged.layers[0].weight[0] == 2.0);
    CHECK(merged.layers[1].kind == LayerKind::Bias);
    CHECK(merged.layers[1].bias[0] == 0.0);
}

TEST_CASE("merge_batchnorm scalar algebra") {
    Network net;
    net.input_shape = {1};
    net.layers.push_back(Layer::linear(Tensor({1, 1}, {2.0})));
    net.layers.push_back(Layer::batchnorm_eval(Tensor({1}, {3.0}), Tensor({1}, {1.0}),
                                               Tensor({1}, {0.0}), Tensor({1}, {1.0}), 0.0));
    const Network merged = merge_batchnorm(net);
    CHECK(merged.layers[0].weight[0] == 6.0);
    CHECK(merged.layers[1].bias[0] == 1.0);
}

TEST_CASE("merge_batchnorm preserves conv network outputs") {
    Rng rng(25);
    Network net;
    net.input_shape = {2, 5, 5};
    net.layers.push_back(Layer::conv2d(random_tensor(rng, {3, 2, 3, 3}), {1, 1}, {1, 1}));
    net.layers.push_back(Layer::bias_layer(random_tensor(rng, {3})));
    net.layers.push_back(Layer::batchnorm_eval(random_tensor(rng, {3}, 0.5, 1.5),
                                               random_tensor(rng, {3}, -0.3, 0.3),
                                               random_tensor(rng, {3}, -0.5, 0.5),
                                               random_tensor(rng, {3}, 0.5, 2.0), 1e-5));
    net.layers.push_back(Layer::relu());
    net.layers.push_back(Layer::flatten());
    net.layers.push_back(Layer::linear(random_tensor(rng, {2, 75})));
    const Network merged = merge_batchnorm(net);
    for (const Layer& l : merged.layers) CHECK(l.kind != LayerKind::BatchNormEval);
    for (int t = 0; t < 100; ++t) {
        const Tensor x = random_input_for(rng, net);
        CHECK(max_abs_diff(forward(net, x).output(), forward(merged, x).output()) < 1e-10);
    }
}

TEST_CASE("merge_batchnorm rejects orphan normalization layers") {
    Network net;
    net.input_shape = {2};
    net.layers.push_back(Layer::batchnorm_eval(Tensor({2}, {1, 1}), Tensor({2}, {0, 0}),
                                               Tensor({2}, {0, 0}), Tensor({2}, {1, 1}), 0.0));
    CHECK_THROWS_AS(merge_batchnorm(net), ShapeError);
}

TEST_CASE("random_network is seed-deterministic") {
    RandomNetSpec spec;
    spec.widths = {4, 8, 1};
    const Network a = random_network(spec, 7);
    const Network b = random_network(spec, 7);
    const Network c = random_network(spec, 8);
    REQUIRE(a.layers.size() == 3);  // Linear, ReLU, Linear
    CHECK(a.layers[0].kind == LayerKind::Linear);
    CHECK(a.layers[0].weight.shape() == std::vector<std::int64_t>{8, 4});
    CHECK(a.layers[2].weight.shape() == std::vector<std::int64_t>{1, 8});
    CHECK(max_abs_diff(a.layers[0].weight, b.layers[0].weight) == 0.0);
    CHECK(max_abs_diff(a.layers[0].weight, c.layers[0].weight) > 0.0);
}

TEST_CASE("residual markers must be balanced") {
    Network net;
    net.input_shape = {2};
    net.layers.push_back(Layer::residual_end());
    CHECK_THROWS_AS(net.validate(), ShapeError);
}

TEST_CASE("backward rejects out-of-range output index") {
    const Network net = tiny_linear_relu();
    const Trace tr = forward(net, Tensor({2}, {1, 0}));
    CHECK_THROWS_AS(backward(net, tr, 5), ShapeError);
}

TEST_CASE("maxout rank-2 forward and backward") {
    Network net;
    net.input_shape = {4};
    net.layers.push_back(Layer::maxout_rank2());
    const Trace tr = forward(net, Tensor({4}, {1, 5, 3, 2}));
    CHECK(tr.output()[0] == 3.0);  // max(1, 3)
    CHECK(tr.output()[1] == 5.0);  // max(5, 2)
    const GradTrace gt = backward(net, tr, 0);
    CHECK(gt.input_grad()[0] == 0.0);
    CHECK(gt.input_grad()[2] == 1.0);
}

TEST_CASE("reinit_last_weight_layers touches only the trailing weight layers") {
    Rng rng(26);
    RandomNetSpec spec;
    spec.widths = {4, 6, 5, 3, 2};
    const Network net = random_network(spec, 1);
    const Network r1 = reinit_last_weight_layers(net, 3, 99);
    const Network r2 = reinit_last_weight_layers(net, 3, 99);
    const Network r3 = reinit_last_weight_layers(net, 3, 100);
    // First linear untouched, last three redrawn, deterministic per seed.
    CHECK(max_abs_diff(r1.layers[0].weight, net.layers[0].weight) == 0.0);
    int changed = 0;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        if (net.layers[i].kind != LayerKind::Linear) continue;
        if (max_abs_diff(r1.layers[i].weight, net.layers[i].weight) > 0.0) ++changed;
        CHECK(max_abs_diff(r1.layers[i].weight, r2.layers[i].weight) == 0.0);
    }
    CHECK(changed == 3);
    bool differs = false;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        if (net.layers[i].kind != LayerKind::Linear) continue;
        differs |= max_abs_diff(r1.layers[i].weight, r3.layers[i].weight) > 0.0;
    }
    CHECK(differs);
    const Tensor x = testing::random_input_for(rng, net);
    CHECK(max_abs_diff(forward(net, x).output(), forward(r1, x).output()) > 0.0);
}
