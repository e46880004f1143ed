#include <doctest.h>

#include "splitkit/error.hpp"
#include "splitkit/rng.hpp"
#include "splitkit/tensor.hpp"
#include "support/test_networks.hpp"

using namespace splitkit;
using testing::conv2d_via_im2col;
using testing::matmul_ref;
using testing::maxpool_ref;
using testing::random_tensor;

TEST_CASE("matmul identity and hand cases") {
    Tensor id({2, 2}, {1, 0, 0, 1});
    Tensor b({2, 1}, {3, 7});
    CHECK(max_abs_diff(matmul(id, b), b) == 0.0);

    Tensor a({1, 2}, {1, -2});
    Tensor c({2, 1}, {3, 1});
    Tensor r = matmul(a, c);
    CHECK(r.size() == 1);
    CHECK(r[0] == 1.0);
}

TEST_CASE("matmul equals triple-loop reference exactly") {
    Rng rng(11);
    Tensor a = random_tensor(rng, {5, 4});
    Tensor b = random_tensor(rng, {4, 3});
    CHECK(max_abs_diff(matmul(a, b), matmul_ref(a, b)) == 0.0);
}

TEST_CASE("matmul rejects shape mismatch") {
    Tensor a({2, 3}, std::vector<double>(6, 1.0));
    Tensor b({2, 2}, std::vector<double>(4, 1.0));
    CHECK_THROWS_AS(matmul(a, b), ShapeError);
}

TEST_CASE("matmul is linear in its right operand") {
    Rng rng(12);
    for (int t = 0; t < 20; ++t) {
        Tensor a = random_tensor(rng, {4, 6});
        Tensor x = random_tensor(rng, {6, 1});
        Tensor y = random_tensor(rng, {6, 1});
        const double al = rng.uniform(-2, 2), be = rng.uniform(-2, 2);
        Tensor lhs = matmul(a, add(scale(x, al), scale(y, be)));
        Tensor rhs = add(scale(matmul(a, x), al), scale(matmul(a, y), be));
        CHECK(max_abs_diff(lhs, rhs) < 1e-12);
    }
}

TEST_CASE("conv2d full-overlap and identity-kernel cases") {
    Tensor ones({1, 3, 3}, std::vector<double>(9, 1.0));
    Tensor kernel({1, 1, 3, 3}, std::vector<double>(9, 1.0));
    Tensor out = conv2d(ones, kernel, {1, 1}, {0, 0});
    CHECK(out.shape() == std::vector<std::int64_t>{1, 1, 1});
    CHECK(out[0] == 9.0);

    Rng rng(13);
    Tensor x = random_tensor(rng, {1, 4, 5});
    Tensor unit({1, 1, 1, 1}, {1.0});
    CHECK(max_abs_diff(conv2d(x, unit, {1, 1}, {0, 0}), x) == 0.0);
}

TEST_CASE("conv2d matches im2col lowering") {
    Rng rng(14);
    Tensor x = random_tensor(rng, {2, 6, 6});
    Tensor k = random_tensor(rng, {3, 2, 3, 3});
    SUBCASE("stride 1, no padding") {
        CHECK(max_abs_diff(conv2d(x, k, {1, 1}, {0, 0}), conv2d_via_im2col(x, k, {1, 1}, {0, 0})) <
              1e-12);
    }
    SUBCASE("stride 2, padding 1") {
        CHECK(max_abs_diff(conv2d(x, k, {2, 2}, {1, 1}), conv2d_via_im2col(x, k, {2, 2}, {1, 1})) <
              1e-12);
    }
}

TEST_CASE("conv2d rejects oversized kernels") {
    Tensor x({1, 2, 2}, std::vector<double>(4, 0.0));
    Tensor k({1, 1, 3, 3}, std::vector<double>(9, 0.0));
    CHECK_THROWS_AS(conv2d(x, k, {1, 1}, {0, 0}), ShapeError);
}

TEST_CASE("maxpool2d values, argmax and tie-breaking") {
    Tensor x({1, 2, 2}, {1, 2, 3, 4});
    auto r = maxpool2d(x, 2, 2);
    CHECK(r.values[0] == 4.0);
    CHECK(r.argmax[0] == 3);  // flat index of (0,1,1)

    Tensor c = Tensor::full({1, 4, 4}, 2.5);
    auto rc = maxpool2d(c, 2, 2);
    CHECK(rc.values[0] == 2.5);
    CHECK(rc.argmax[0] == 0);  // first window cell wins ties
    CHECK(rc.argmax[1] == 2);

    Rng rng(15);
    Tensor z = random_tensor(rng, {1, 8, 8});
    auto a = maxpool2d(z, 2, 2);
    auto b = maxpool2d(z, 2, 2);
    CHECK(a.argmax == b.argmax);
    CHECK(max_abs_diff(a.values, maxpool_ref(z, 2, 2)) == 0.0);
}

TEST_CASE("maxpool2d rejects windows larger than the input") {
    Tensor x({1, 2, 2}, std::vector<double>(4, 0.0));
    CHECK_THROWS_AS(maxpool2d(x, 3, 1), ShapeError);
}

TEST_CASE("tensor shape/data coherence is enforced") {
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0}), ShapeError);
    CHECK_THROWS_AS(Tensor({0, 2}), ShapeError);
    Tensor t({2, 3});
    CHECK_THROWS_AS(t.reshaped({5}), ShapeError);
    CHECK(t.reshaped({3, 2}).shape() == std::vector<std::int64_t>{3, 2});
}
