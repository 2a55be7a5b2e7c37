#include <doctest.h>

#include <random>

#include "gequnet/tensor.hpp"
#include "testutil.hpp"

using namespace gequnet;
using testutil::conv2d_naive;
using testutil::max_abs_diff;
using testutil::max_rel_diff;
using testutil::random_tensor;

TEST_SUITE_BEGIN("tensor");

TEST_CASE("conv2d all-ones 3x3: center 9, corners 4") {
    Tensor input = Tensor::full({1, 3, 3}, 1.0f);
    Tensor kern = Tensor::full({1, 1, 3, 3}, 1.0f);
    Tensor out = conv2d(input, kern, 1);
    CHECK(out.shape() == std::vector<int>{1, 3, 3});
    CHECK(out.at(0, 1, 1) == doctest::Approx(9.0f));
    CHECK(out.at(0, 0, 0) == doctest::Approx(4.0f));
    CHECK(out.at(0, 0, 2) == doctest::Approx(4.0f));
    CHECK(out.at(0, 2, 0) == doctest::Approx(4.0f));
    CHECK(out.at(0, 2, 2) == doctest::Approx(4.0f));
    CHECK(out.at(0, 0, 1) == doctest::Approx(6.0f));
}

TEST_CASE("conv2d with delta kernel is identity") {
    std::mt19937_64 rng(7);
    Tensor input = random_tensor<float>({2, 5, 5}, rng);
    Tensor kern({2, 2, 3, 3});
    kern.at(0, 0, 1, 1) = 1.0f;
    kern.at(1, 1, 1, 1) = 1.0f;
    Tensor out = conv2d(input, kern, 1);
    CHECK(max_abs_diff(out, input) == 0.0);
}

TEST_CASE("conv2d output shape") {
    Tensor input({2, 8, 8});
    Tensor kern({5, 2, 3, 3});
    CHECK(conv2d(input, kern, 1).shape() == std::vector<int>{5, 8, 8});
}

TEST_CASE("conv2d rejects bad arguments") {
    Tensor input({2, 4, 4});
    CHECK_THROWS_AS(conv2d(input, Tensor({1, 3, 3, 3}), 1), std::invalid_argument);
    CHECK_THROWS_AS(conv2d(input, Tensor({1, 2, 2, 2}), 0), std::invalid_argument);
    CHECK_THROWS_AS(conv2d(input, Tensor({1, 2, 4, 4}), 1), std::invalid_argument);
}

TEST_CASE("conv2d matches the naive reference on random instances") {
    std::mt19937_64 rng(42);
    std::uniform_int_distribution<int> cdist(1, 4);
    std::uniform_int_distribution<int> sdist(3, 9);
    for (int iter = 0; iter < 60; ++iter) {
        const int C = cdist(rng), O = cdist(rng);
        const int H = sdist(rng), W = sdist(rng);
        const int k = (iter % 2 == 0) ? 3 : 1;
        Tensor input = random_tensor<float>({C, H, W}, rng);
        Tensor kern = random_tensor<float>({O, C, k, k}, rng);
        Tensor fast = conv2d(input, kern, (k - 1) / 2);
        Tensor ref = conv2d_naive(input, kern, (k - 1) / 2);
        CHECK(max_rel_diff(fast, ref) < 1e-5);
    }
}

TEST_CASE("conv2d is linear in both arguments") {
    std::mt19937_64 rng(11);
    Tensor x = random_tensor<float>({3, 6, 6}, rng);
    Tensor y = random_tensor<float>({3, 6, 6}, rng);
    Tensor kern = random_tensor<float>({2, 3, 3, 3}, rng);
    const float a = 1.7f, b = -0.6f;
    Tensor mix({3, 6, 6});
    for (std::int64_t i = 0; i < mix.size(); ++i) mix[i] = a * x[i] + b * y[i];
    Tensor lhs = conv2d(mix, kern, 1);
    Tensor cx = conv2d(x, kern, 1);
    Tensor cy = conv2d(y, kern, 1);
    Tensor rhs({lhs.shape()});
    double scale = 0.0;
    for (std::int64_t i = 0; i < rhs.size(); ++i) {
        rhs[i] = a * cx[i] + b * cy[i];
        scale = std::max(scale, std::abs(static_cast<double>(rhs[i])));
    }
    CHECK(max_abs_diff(lhs, rhs) / scale < 1e-5);
}

TEST_CASE("conv2d_backward zero upstream gradient gives zero gradients") {
    std::mt19937_64 rng(3);
    Tensor input = random_tensor<float>({2, 4, 4}, rng);
    Tensor kern = random_tensor<float>({3, 2, 3, 3}, rng);
    Tensor go({3, 4, 4});
    auto g = conv2d_backward(input, kern, go, 1);
    CHECK(testutil::l2_norm(g.grad_input) == 0.0);
    CHECK(testutil::l2_norm(g.grad_kernels) == 0.0);
}

TEST_CASE("conv2d_backward single 1x1 weight reduces to an inner product") {
    std::mt19937_64 rng(5);
    Tensor input = random_tensor<float>({1, 3, 3}, rng);
    Tensor kern = random_tensor<float>({1, 1, 1, 1}, rng);
    Tensor go = random_tensor<float>({1, 3, 3}, rng);
    auto g = conv2d_backward(input, kern, go, 0);
    double expect = 0.0;
    for (std::int64_t i = 0; i < input.size(); ++i)
        expect += static_cast<double>(input[i]) * static_cast<double>(go[i]);
    CHECK(g.grad_kernels[0] == doctest::Approx(expect).epsilon(1e-5));
}

TEST_CASE("conv2d_backward matches central finite differences in 64-bit") {
    std::mt19937_64 rng(17);
    Tensor64 input = random_tensor<double>({2, 5, 5}, rng);
    Tensor64 kern = random_tensor<double>({2, 2, 3, 3}, rng);
    Tensor64 go = random_tensor<double>({2, 5, 5}, rng);
    auto g = conv2d_backward(input, kern, go, 1);

    auto loss = [&]() {
        Tensor64 out = conv2d(input, kern, 1);
        double s = 0.0;
        for (std::int64_t i = 0; i < out.size(); ++i) s += out[i] * go[i];
        return s;
    };
    const double step = 1e-4;
    double worst = 0.0;
    for (std::int64_t i = 0; i < input.size(); ++i) {
        const double fd = testutil::central_difference(loss, input[i], step);
        const double an = g.grad_input[i];
        worst = std::max(worst, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6}));
    }
    for (std::int64_t i = 0; i < kern.size(); ++i) {
        const double fd = testutil::central_difference(loss, kern[i], step);
        const double an = g.grad_kernels[i];
        worst = std::max(worst, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6}));
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("conv2d_backward rejects mismatched grad shape") {
    Tensor input({1, 4, 4});
    Tensor kern({2, 1, 3, 3});
    CHECK_THROWS_AS(conv2d_backward(input, kern, Tensor({2, 3, 3}), 1), std::invalid_argument);
}

TEST_CASE("maxpool2 basics") {
    Tensor c = Tensor::full({1, 4, 4}, 2.5f);
    auto pooled = maxpool2(c);
    CHECK(pooled.output.shape() == std::vector<int>{1, 2, 2});
    for (std::int64_t i = 0; i < pooled.output.size(); ++i) CHECK(pooled.output[i] == 2.5f);

    Tensor w({1, 2, 2}, {1.0f, 2.0f, 3.0f, 4.0f});
    auto r = maxpool2(w);
    CHECK(r.output[0] == 4.0f);
    CHECK(r.argmax[0] == 3);  // position (1,1)

    CHECK_THROWS_AS(maxpool2(Tensor({1, 3, 4})), std::invalid_argument);
}

TEST_CASE("maxpool2 and upsample commute with rot90 and flip_h bit-exactly") {
    std::mt19937_64 rng(23);
    Tensor x = random_tensor<float>({3, 8, 8}, rng);
    for (int q = 0; q < 4; ++q) {
        CHECK(max_abs_diff(maxpool2(rot90(x, q)).output, rot90(maxpool2(x).output, q)) == 0.0);
        CHECK(max_abs_diff(upsample_nearest2(rot90(x, q)), rot90(upsample_nearest2(x), q)) == 0.0);
    }
    CHECK(max_abs_diff(maxpool2(flip_h(x)).output, flip_h(maxpool2(x).output)) == 0.0);
    CHECK(max_abs_diff(upsample_nearest2(flip_h(x)), flip_h(upsample_nearest2(x))) == 0.0);
}

TEST_CASE("maxpool2 backward routes gradient to the argmax") {
    Tensor w({1, 2, 2}, {1.0f, 2.0f, 3.0f, 4.0f});
    auto r = maxpool2(w);
    Tensor go({1, 1, 1}, {5.0f});
    Tensor gi = maxpool2_backward(r, go, w.shape());
    CHECK(gi[0] == 0.0f);
    CHECK(gi[3] == 5.0f);
}

TEST_CASE("upsample_nearest2 replicates each pixel") {
    Tensor v({1, 1, 1}, {3.0f});
    Tensor up = upsample_nearest2(v);
    CHECK(up.shape() == std::vector<int>{1, 2, 2});
    for (std::int64_t i = 0; i < up.size(); ++i) CHECK(up[i] == 3.0f);

    // pool(upsample(x)) is identity for any x
    std::mt19937_64 rng(9);
    Tensor x = random_tensor<float>({2, 3, 3}, rng);
    CHECK(max_abs_diff(maxpool2(upsample_nearest2(x)).output, x) == 0.0);
}

TEST_CASE("upsample backward sums each 2x2 block") {
    std::mt19937_64 rng(29);
    Tensor64 x = random_tensor<double>({1, 3, 3}, rng);
    Tensor64 go = random_tensor<double>({1, 6, 6}, rng);
    Tensor64 gi = upsample_nearest2_backward(go);
    auto loss = [&]() {
        Tensor64 out = upsample_nearest2(x);
        double s = 0.0;
        for (std::int64_t i = 0; i < out.size(); ++i) s += out[i] * go[i];
        return s;
    };
    for (std::int64_t i = 0; i < x.size(); ++i) {
        const double fd = testutil::central_difference(loss, x[i], 1e-5);
        CHECK(gi[i] == doctest::Approx(fd).epsilon(1e-7));
    }
}

TEST_CASE("relu and its subgradient") {
    Tensor x({4}, {-1.0f, 0.0f, 2.0f, -3.5f});
    Tensor y = relu(x);
    CHECK(y[0] == 0.0f);
    CHECK(y[1] == 0.0f);
    CHECK(y[2] == 2.0f);
    Tensor go = Tensor::full({4}, 1.0f);
    Tensor g = relu_backward(x, go);
    CHECK(g[0] == 0.0f);
    CHECK(g[1] == 0.0f);  // subgradient at 0 fixed to 0
    CHECK(g[2] == 1.0f);

    // away from 0, gradient matches finite differences
    std::mt19937_64 rng(31);
    Tensor64 z = random_tensor<double>({10}, rng);
    Tensor64 up = random_tensor<double>({10}, rng);
    Tensor64 gz = relu_backward(z, up);
    auto loss = [&]() {
        Tensor64 out = relu(z);
        double s = 0.0;
        for (std::int64_t i = 0; i < out.size(); ++i) s += out[i] * up[i];
        return s;
    };
    for (std::int64_t i = 0; i < z.size(); ++i) {
        if (std::abs(z[i]) < 1e-3) continue;
        const double fd = testutil::central_difference(loss, z[i], 1e-5);
        CHECK(gz[i] == doctest::Approx(fd).epsilon(1e-6));
    }
}

TEST_CASE("rot90 and flip_h conventions") {
    Tensor onehot({1, 3, 3});
    onehot.at(0, 0, 0) = 1.0f;
    Tensor r = rot90(onehot, 1);
    CHECK(r.at(0, 0, 2) == 1.0f);  // (0,0) -> (0,2)

    std::mt19937_64 rng(37);
    Tensor x = random_tensor<float>({2, 5, 5}, rng);
    CHECK(max_abs_diff(rot90(x, 4), x) == 0.0);
    CHECK(max_abs_diff(flip_h(flip_h(x)), x) == 0.0);
    CHECK_THROWS_AS(rot90(Tensor({1, 3, 4}), 1), std::invalid_argument);
}

TEST_SUITE_END();
