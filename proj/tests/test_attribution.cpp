#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>

#include "splitkit/attribution.hpp"
#include "splitkit/error.hpp"
#include "splitkit/model_io.hpp"
#include "support/test_networks.hpp"

using namespace splitkit;
using testing::random_input_for;
using testing::random_mixed_network;
using testing::random_relu_mlp;
using testing::random_tensor;

namespace {

struct ConvCase {
    Network net;
    Tensor x;
    Trace trace;
    GradTrace grads;
};

ConvCase make_conv_case(Rng& rng) {
    ConvCase c;
    c.net.input_shape = {1, 6, 6};
    c.net.layers.push_back(Layer::conv2d(random_tensor(rng, {2, 1, 3, 3}), {1, 1}, {1, 1}));
    c.net.layers.push_back(Layer::relu());
    c.net.layers.push_back(Layer::conv2d(random_tensor(rng, {2, 2, 3, 3}), {1, 1}, {1, 1}));
    c.net.layers.push_back(Layer::relu());
    c.net.layers.push_back(Layer::flatten());
    c.net.layers.push_back(Layer::linear(random_tensor(rng, {2, 72})));
    c.net.validate();
    c.x = random_input_for(rng, c.net);
    c.trace = forward(c.net, c.x);
    c.grads = backward(c.net, c.trace, 0);
    return c;
}

}  // namespace

TEST_CASE("vanilla gradient equals the backward input gradient") {
    Network net;
    net.input_shape = {2};
    net.layers.push_back(Layer::linear(Tensor({1, 2}, {2, 3})));
    const AttributionMap m = vanilla_gradient(net, Tensor({2}, {0.5, 0.5}), 0);
    CHECK(max_abs_diff(m.values, Tensor({2}, {2, 3})) == 0.0);

    // Dead-ReLU net maps to zero.
    Network dead;
    dead.input_shape = {2};
    dead.layers.push_back(Layer::linear(Tensor({1, 2}, {1, -2})));
    dead.layers.push_back(Layer::relu());
    CHECK(vanilla_gradient(dead, Tensor({2}, {0, 2}), 0).values.max_abs() == 0.0);

    Rng rng(71);
    const Network r = random_relu_mlp(rng, 2, 3, 6, false);
    const Tensor x = random_input_for(rng, r);
    const Trace tr = forward(r, x);
    const GradTrace gt = backward(r, tr, 0);
    CHECK(max_abs_diff(vanilla_gradient(r, x, 0).values, gt.input_grad()) == 0.0);
}

TEST_CASE("layer_cam hand case and zero gradients") {
    Rng rng(72);
    ConvCase c = make_conv_case(rng);
    SUBCASE("zero gradients give a zero map") {
        GradTrace zero = c.grads;
        for (Tensor& g : zero.grads) g = Tensor::zeros_like(g);
        CHECK(layer_cam(c.net, c.trace, zero, 2).values.max_abs() == 0.0);
    }
    SUBCASE("single-channel product with ReLU filter") {
        Trace tr;
        tr.values.push_back(Tensor({1, 1, 2}, {1, -1}));
        GradTrace gt;
        gt.grads.push_back(Tensor({1, 1, 2}, {2, 2}));
        Network empty;
        empty.input_shape = {1, 1, 2};
        const AttributionMap m = layer_cam(empty, tr, gt, 0);
        CHECK(m.values[0] == 2.0);
        CHECK(m.values[1] == 0.0);
    }
    SUBCASE("random case equals the direct formula") {
        const std::int64_t l = 2;
        const Tensor& a = c.trace.values[l];
        const Tensor& g = c.grads.grads[l];
        Tensor expect({a.dim(1), a.dim(2)});
        for (std::int64_t ch = 0; ch < a.dim(0); ++ch) {
            for (std::int64_t i = 0; i < expect.size(); ++i) {
                expect[i] += a[ch * expect.size() + i] * g[ch * expect.size() + i];
            }
        }
        for (std::int64_t i = 0; i < expect.size(); ++i) expect[i] = std::max(expect[i], 0.0);
        CHECK(max_abs_diff(layer_cam(c.net, c.trace, c.grads, l).values, expect) == 0.0);
    }
    SUBCASE("non-spatial positions are rejected") {
        CHECK_THROWS_AS(layer_cam(c.net, c.trace, c.grads, 6), ShapeError);
    }
}

TEST_CASE("split_grad selects, reduces and applies abs") {
    Network net;
    net.input_shape = {2};
    net.layers.push_back(Layer::linear(Tensor({1, 2}, {1, -2})));
    net.layers.push_back(Layer::relu());
    const SplitNetwork sn = split_network(net, MaxPoolMode::Convex);
    StabConfig cfg;
    cfg.alpha = 0.5;
    const Tensor x({2}, {3, 1});
    const Trace tr = forward(net, x);
    auto [xp, xn] = split_input(x, InputSplitStrategy::HalfHalf);
    const SplitTrace st = split_forward(sn, xp, xn, cfg);
    const SensTrace sens = local_sensitivities(sn, st, &tr, cfg, 0);

    const AttributionMap m = split_grad(sens, 0, StreamSelect::CombG, false);
    CHECK(max_abs_diff(m.values, Tensor({2}, {0.5, -1})) < 1e-15);
    const AttributionMap am = split_grad(sens, 0, StreamSelect::CombG, true);
    CHECK(max_abs_diff(am.values, Tensor({2}, {0.5, 1})) < 1e-15);
    CHECK(am.abs);

    SensTrace zeroed = sens;
    for (auto* v : {&zeroed.gp, &zeroed.gn, &zeroed.hp, &zeroed.hn}) {
        for (Tensor& t : *v) t = Tensor::zeros_like(t);
    }
    CHECK(split_grad(zeroed, 0, StreamSelect::PosG, false).values.max_abs() == 0.0);
}

TEST_CASE("split_cam products against a direct oracle") {
    Rng rng(73);
    ConvCase c = make_conv_case(rng);
    const SplitNetwork sn = split_network(c.net, MaxPoolMode::Convex);
    StabConfig cfg;
    cfg.alpha = 0.4;
    auto [xp, xn] = split_input(c.x, InputSplitStrategy::HalfHalf);
    const SplitTrace st = split_forward(sn, xp, xn, cfg);
    const SensTrace sens = local_sensitivities(sn, st, &c.trace, cfg, 0);

    SUBCASE("zero sensitivities give a zero map") {
        SensTrace z = sens;
        for (auto* v : {&z.gp, &z.gn, &z.hp, &z.hn}) {
            for (Tensor& t : *v) t = Tensor::zeros_like(t);
        }
        CHECK(split_cam(st, z, &c.trace, 2, StreamSelect::PosG, false).values.max_abs() == 0.0);
    }
    SUBCASE("positive variant pairs with the + stream activation") {
        const std::int64_t l = 2;
        const Tensor delta = sens.gp[l];
        const Tensor& act = st.pos[l];
        Tensor expect({act.dim(1), act.dim(2)});
        for (std::int64_t ch = 0; ch < act.dim(0); ++ch) {
            for (std::int64_t i = 0; i < expect.size(); ++i) {
                expect[i] += delta[ch * expect.size() + i] * act[ch * expect.size() + i];
            }
        }
        CHECK(max_abs_diff(split_cam(st, sens, &c.trace, l, StreamSelect::PosG, false).values,
                           expect) == 0.0);
    }
    SUBCASE("combined variant pairs with the cached original activation") {
        const std::int64_t l = 2;
        const Tensor delta = sens.comb_g(l);
        const Tensor& act = c.trace.values[l];
        Tensor expect({act.dim(1), act.dim(2)});
        for (std::int64_t ch = 0; ch < act.dim(0); ++ch) {
            for (std::int64_t i = 0; i < expect.size(); ++i) {
                expect[i] += delta[ch * expect.size() + i] * act[ch * expect.size() + i];
            }
        }
        CHECK(max_abs_diff(split_cam(st, sens, &c.trace, l, StreamSelect::CombG, false).values,
                           expect) == 0.0);
    }
}

TEST_CASE("split_cam at alpha 0.5 equals half the pre-ReLU LayerCAM product") {
    Rng rng(74);
    ConvCase c = make_conv_case(rng);
    const SplitNetwork sn = split_network(c.net, MaxPoolMode::Convex);
    StabConfig cfg;
    cfg.alpha = 0.5;
    auto [xp, xn] = split_input(c.x, InputSplitStrategy::HalfHalf);
    const SplitTrace st = split_forward(sn, xp, xn, cfg);
    const SensTrace sens = local_sensitivities(sn, st, &c.trace, cfg, 0);
    const std::int64_t l = 2;
    const Tensor cam = split_cam(st, sens, &c.trace, l, StreamSelect::CombG, false).values;
    // Pre-ReLU LayerCAM product at the same position.
    const Tensor& a = c.trace.values[l];
    const Tensor& g = c.grads.grads[l];
    Tensor pre({a.dim(1), a.dim(2)});
    for (std::int64_t ch = 0; ch < a.dim(0); ++ch) {
        for (std::int64_t i = 0; i < pre.size(); ++i) {
            pre[i] += a[ch * pre.size() + i] * g[ch * pre.size() + i];
        }
    }
    CHECK(max_abs_diff(cam, scale(pre, 0.5)) <= 1e-9);
}

TEST_CASE("lrp_gamma conserves relevance and handles the single-wire case") {
    SUBCASE("single linear wire") {
        Network net;
        net.input_shape = {1};
        net.layers.push_back(Layer::linear(Tensor({1, 1}, {1.0})));
        const LrpResult r = lrp_gamma(net, Tensor({1}, {2.0}), 0, 0.0, 1e-9);
        CHECK(r.relevance.front()[0] == doctest::Approx(2.0).epsilon(1e-9));
    }
    SUBCASE("layer-wise sums stay constant on positive-activation nets") {
        Rng rng(75);
        for (int t = 0; t < 20; ++t) {
            // Mostly-positive weights and positive inputs keep every
            // redistribution denominator away from the epsilon stabilizer.
            testing::MixedNetOptions opt;
            opt.allow_batchnorm = true;
            opt.weight_lo = -0.1;
            opt.positive_row_mass = true;
            opt.bias_lo = 0.0;
            const Network net = random_mixed_network(rng, opt);
            const Tensor x = random_input_for(rng, net, 0.2, 1.0);
            const Trace tr = forward(net, x);
            const std::int64_t out = rng.uniform_int(0, tr.output().size() - 1);
            const double f = tr.output()[out];
            const LrpResult r = lrp_gamma(net, x, out, 0.25, 1e-9);
            // Residual blocks hold half the relevance in flight between the
            // markers; compare the outermost positions.
            const double total_in = r.relevance.front().sum();
            CHECK(std::fabs(total_in - f) <= 1e-6 * std::max(1.0, std::fabs(f)));
        }
    }
    SUBCASE("gamma 0 reduces to the epsilon rule") {
        Rng rng(76);
        Network net;
        net.input_shape = {3};
        net.layers.push_back(Layer::linear(random_tensor(rng, {2, 3})));
        const Tensor x = random_tensor(rng, {3}, 0.1, 1.0);
        const LrpResult a = lrp_gamma(net, x, 0, 0.0, 1e-6);
        // Hand epsilon rule for output 0.
        const Trace tr = forward(net, x);
        const Tensor& w = net.layers[0].weight;
        double denom = 0.0;
        for (std::int64_t j = 0; j < 3; ++j) denom += w.at2(0, j) * x[j];
        const double d = denom + (denom >= 0 ? 1e-6 : -1e-6);
        for (std::int64_t j = 0; j < 3; ++j) {
            CHECK(a.relevance.front()[j] ==
                  doctest::Approx(w.at2(0, j) * x[j] / d * tr.output()[0]).epsilon(1e-12));
        }
    }
}

TEST_CASE("split_lrp conserves the seeded + stream output across layers") {
    Rng rng(77);
    for (int t = 0; t < 20; ++t) {
        // Normalization layers are merged before relevance propagation, so
        // the conservation nets carry none; rows keep positive mass so no
        // + stream preactivation can vanish exactly.
        testing::MixedNetOptions opt;
        opt.allow_residual = false;  // relevance is in flight inside blocks
        opt.allow_batchnorm = false;
        opt.weight_lo = -0.3;
        opt.positive_row_mass = true;
        opt.bias_lo = 0.0;  // negative bias would land relevance on zero cells
        const Network net = random_mixed_network(rng, opt);
        const SplitNetwork sn =
            split_network(net, t % 2 == 0 ? MaxPoolMode::Convex : MaxPoolMode::Wta);
        const Tensor x = random_input_for(rng, net, 0.2, 1.5);
        const Trace tr = forward(net, x);
        StabConfig cfg;
        cfg.forward_mode = ForwardStabMode::ScaleThreshold;
        cfg.correct_forward = true;
        auto [xp, xn] = split_input(x, InputSplitStrategy::PosNegParts);
        const SplitTrace st = split_forward(sn, xp, xn, cfg, &tr);
        const std::int64_t out = rng.uniform_int(0, tr.output().size() - 1);
        const SplitLrpResult r = split_lrp(sn, st, out, 1e-9);
        REQUIRE(r.seed_value == st.pos.back()[out]);
        const double tol = 1e-6 * std::max(1.0, std::fabs(r.seed_value));
        for (std::size_t p = 0; p < r.rel_pos.size(); ++p) {
            const double total = r.rel_pos[p].sum() + r.rel_neg[p].sum();
            CHECK(std::fabs(total - r.seed_value) <= tol);
        }
        CHECK(r.comb_map().values.all_finite());
    }
}

TEST_CASE("split_lrp all-positive single layer keeps the negative side empty") {
    Network net;
    net.input_shape = {2};
    net.layers.push_back(Layer::linear(Tensor({1, 2}, {1.0, 2.0})));
    const SplitNetwork sn = split_network(net, MaxPoolMode::Convex);
    StabConfig cfg;
    const Tensor x({2}, {1.0, 0.5});
    auto [xp, xn] = split_input(x, InputSplitStrategy::PosNegParts);
    const SplitTrace st = split_forward(sn, xp, xn, cfg);
    const SplitLrpResult r = split_lrp(sn, st, 0, 1e-9);
    CHECK(r.rel_neg.front().max_abs() == 0.0);
    CHECK(r.rel_pos.front().sum() == doctest::Approx(r.seed_value).epsilon(1e-9));
}

TEST_CASE("split_lrp combined map matches the hand epsilon-rule on one layer") {
    Network net;
    net.input_shape = {2};
    net.layers.push_back(Layer::linear(Tensor({1, 2}, {1, -2})));
    const SplitNetwork sn = split_network(net, MaxPoolMode::Convex);
    StabConfig cfg;
    const Tensor x({2}, {3, 1});
    auto [xp, xn] = split_input(x, InputSplitStrategy::PosNegParts);  // xp = x, xn = 0
    const SplitTrace st = split_forward(sn, xp, xn, cfg);
    // Streams: z+ = 1*3 = 3 (weight_pos row [1,0]), z- = 2*1 = 2.
    const SplitLrpResult r = split_lrp(sn, st, 0, 1e-6);
    // R+ seed = 3; z+ contributions: only x0 through w+=1 -> R+(x0) = 3.
    CHECK(r.rel_pos.front()[0] == doctest::Approx(3.0).epsilon(1e-5));
    CHECK(r.rel_pos.front()[1] == doctest::Approx(0.0));
    const AttributionMap comb = r.comb_map();
    CHECK(comb.values[0] == doctest::Approx(3.0).epsilon(1e-5));
    CHECK(comb.values[1] == doctest::Approx(0.0));
}

TEST_CASE("split_lrp absorbed bookkeeping closes the balance on the conv fixture") {
    const char* env = std::getenv("SPLITKIT_FIXTURES");
    const std::filesystem::path fixtures =
        env ? std::filesystem::path(env) : std::filesystem::path("tests/fixtures");
    const auto manifest = fixtures / "digits" / "conv_model.json";
    if (!std::filesystem::exists(manifest)) {
        FAIL("conv fixture not found under " << fixtures.string());
    }
    const Network net = load_model(manifest.string());
    const SplitNetwork sn = split_network(net, MaxPoolMode::Convex);
    Rng rng(404);
    for (int t = 0; t < 5; ++t) {
        Tensor x(net.input_shape);
        for (std::int64_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(0.1, 1.0);
        const Trace cache = forward(net, x);
        StabConfig cfg;
        cfg.forward_mode = ForwardStabMode::ScaleThreshold;
        cfg.correct_forward = true;
        auto [xp, xn] = split_input(x, InputSplitStrategy::PosNegParts);
        const SplitTrace st = split_forward(sn, xp, xn, cfg, &cache);
        const std::int64_t out = rng.uniform_int(0, net.output_dim() - 1);
        const SplitLrpResult r = split_lrp(sn, st, out, 1e-6);
        const double s = std::max(1.0, std::fabs(r.seed_value));
        for (std::size_t p = 0; p < r.rel_pos.size(); ++p) {
            const double total = r.rel_pos[p].sum() + r.rel_neg[p].sum() + r.absorbed[p];
            CHECK(std::fabs(total - r.seed_value) / s <= 1e-9);
        }
    }
}
