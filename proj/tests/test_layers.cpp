#include <doctest.h>

#include <random>
#include <sstream>

#include "gequnet/layers.hpp"
#include "testutil.hpp"

using namespace gequnet;
using testutil::fill_uniform;
using testutil::max_abs_diff;
using testutil::max_rel_diff;
using testutil::random_tensor;

namespace {

const std::vector<GroupSpec> kAllSpecs = {
    {GroupKind::cyclic, 2},   {GroupKind::cyclic, 4},   {GroupKind::cyclic, 8},
    {GroupKind::dihedral, 2}, {GroupKind::dihedral, 4}, {GroupKind::dihedral, 8},
};

template <typename T>
GFeatureMapT<T> random_gmap(GroupSpec spec, int B, int F, int S, std::mt19937_64& rng) {
    GFeatureMapT<T> f(TensorT<T>({B, F, spec.order(), S, S}), spec);
    fill_uniform(f.tensor, rng);
    return f;
}

std::vector<GroupElement> exact_elements(const Group& g) {
    std::vector<GroupElement> out;
    for (const GroupElement& e : g.elements())
        if (g.is_exact(e)) out.push_back(e);
    return out;
}

}  // namespace

TEST_SUITE_BEGIN("layers");

TEST_CASE("lift_forward: zero input and zero bias give zero output") {
    Group group({GroupKind::cyclic, 4});
    auto layer = make_lifting_conv<float>(group.spec(), 2, 3);
    std::mt19937_64 rng(1);
    fill_uniform(layer.weights, rng);
    Tensor x({1, 2, 8, 8});
    GFeatureMapT<float> y = lift_forward(x, layer, group);
    CHECK(y.tensor.shape() == std::vector<int>{1, 3, 4, 8, 8});
    CHECK(testutil::l2_norm(y.tensor) == 0.0);
}

TEST_CASE("lift_forward under C1 reduces to conv2d") {
    Group group({GroupKind::cyclic, 1});
    std::mt19937_64 rng(2);
    auto layer = make_lifting_conv<float>(group.spec(), 2, 3);
    fill_uniform(layer.weights, rng);
    Tensor x = random_tensor<float>({1, 2, 6, 6}, rng);
    GFeatureMapT<float> y = lift_forward(x, layer, group);

    Tensor plain = conv2d(x.reshaped({2, 6, 6}), layer.weights, 1);
    CHECK(max_rel_diff(y.tensor.reshaped({3, 6, 6}), plain) < 1e-6);
}

TEST_CASE("lift_forward input validation") {
    Group group({GroupKind::cyclic, 4});
    auto layer = make_lifting_conv<float>(group.spec(), 2, 3);
    CHECK_THROWS_AS(lift_forward(Tensor({1, 3, 8, 8}), layer, group), std::invalid_argument);
    CHECK_THROWS_AS(lift_forward(Tensor({1, 2, 8, 6}), layer, group), std::invalid_argument);
}

TEST_CASE("lift_forward commutes with every exact group action") {
    std::mt19937_64 rng(3);
    for (const GroupSpec& spec : kAllSpecs) {
        Group group(spec);
        auto layer = make_lifting_conv<float>(spec, 2, 3);
        fill_uniform(layer.weights, rng);
        fill_uniform(layer.bias, rng, -0.2, 0.2);
        Tensor x = random_tensor<float>({2, 2, 12, 12}, rng);
        GFeatureMapT<float> base = lift_forward(x, layer, group);
        for (const GroupElement& e : exact_elements(group)) {
            GFeatureMapT<float> got = lift_forward(apply_spatial_action(x, group, e), layer, group);
            GFeatureMapT<float> want = apply_group_action(base, group, e);
            CHECK(testutil::rel_err_norm(got.tensor, want.tensor) < 1e-4);
        }
    }
}

TEST_CASE("gconv_forward: zero weights give a constant bias map") {
    Group group({GroupKind::dihedral, 2});
    auto layer = make_gconv<float>(group.spec(), 2, 3);
    layer.bias[0] = 0.5f;
    layer.bias[1] = -1.0f;
    layer.bias[2] = 2.0f;
    std::mt19937_64 rng(4);
    GFeatureMapT<float> f = random_gmap<float>(group.spec(), 1, 2, 6, rng);
    GFeatureMapT<float> y = gconv_forward(f, layer, group);
    for (int o = 0; o < 3; ++o)
        for (int h = 0; h < 4; ++h)
            for (int p = 0; p < 36; ++p)
                CHECK(y.tensor.at(0, o, h, p / 6, p % 6) == layer.bias[o]);
}

TEST_CASE("gconv_forward under C1 equals plain multi-channel conv2d") {
    Group group({GroupKind::cyclic, 1});
    std::mt19937_64 rng(5);
    auto layer = make_gconv<float>(group.spec(), 3, 4);
    fill_uniform(layer.weights, rng);
    GFeatureMapT<float> f = random_gmap<float>(group.spec(), 1, 3, 7, rng);
    GFeatureMapT<float> y = gconv_forward(f, layer, group);

    Tensor kern = layer.weights.reshaped({4, 3, 3, 3});
    Tensor plain = conv2d(f.tensor.reshaped({3, 7, 7}), kern, 1);
    CHECK(max_rel_diff(y.tensor.reshaped({4, 7, 7}), plain) < 1e-6);
}

TEST_CASE("gconv_forward rejects group and shape mismatches") {
    Group c4({GroupKind::cyclic, 4});
    auto layer = make_gconv<float>(c4.spec(), 2, 3);
    GFeatureMapT<float> wrong_group(Tensor({1, 2, 2, 6, 6}), GroupSpec{GroupKind::cyclic, 2});
    CHECK_THROWS_AS(gconv_forward(wrong_group, layer, c4), std::invalid_argument);
    GFeatureMapT<float> wrong_fields(Tensor({1, 3, 4, 6, 6}), c4.spec());
    CHECK_THROWS_AS(gconv_forward(wrong_fields, layer, c4), std::invalid_argument);
}

TEST_CASE("gconv_forward commutes with every exact group action") {
    std::mt19937_64 rng(6);
    for (const GroupSpec& spec : kAllSpecs) {
        Group group(spec);
        auto layer = make_gconv<float>(spec, 3, 2);
        fill_uniform(layer.weights, rng);
        fill_uniform(layer.bias, rng, -0.2, 0.2);
        GFeatureMapT<float> f = random_gmap<float>(spec, 2, 3, 12, rng);
        GFeatureMapT<float> base = gconv_forward(f, layer, group);
        for (const GroupElement& e : exact_elements(group)) {
            GFeatureMapT<float> got = gconv_forward(apply_group_action(f, group, e), layer, group);
            GFeatureMapT<float> want = apply_group_action(base, group, e);
            CHECK(testutil::rel_err_norm(got.tensor, want.tensor) < 1e-4);
        }
    }
}

TEST_CASE("backward passes: zero upstream gradient gives zero gradients") {
    Group group({GroupKind::cyclic, 4});
    std::mt19937_64 rng(7);
    auto layer = make_gconv<float>(group.spec(), 2, 2);
    fill_uniform(layer.weights, rng);
    GFeatureMapT<float> f = random_gmap<float>(group.spec(), 1, 2, 6, rng);
    GFeatureMapT<float> zero(Tensor({1, 2, 4, 6, 6}), group.spec());
    auto g = gconv_backward(f, layer, group, zero);
    CHECK(testutil::l2_norm(g.grad_input) == 0.0);
    CHECK(testutil::l2_norm(g.grad_weights) == 0.0);
    CHECK(testutil::l2_norm(g.grad_bias) == 0.0);
}

TEST_CASE("gconv backward under C1 matches conv2d_backward") {
    Group group({GroupKind::cyclic, 1});
    std::mt19937_64 rng(8);
    auto layer = make_gconv<double>(group.spec(), 2, 3);
    fill_uniform(layer.weights, rng);
    GFeatureMapT<double> f(random_tensor<double>({1, 2, 1, 6, 6}, rng), group.spec());
    GFeatureMapT<double> go(random_tensor<double>({1, 3, 1, 6, 6}, rng), group.spec());
    auto g = gconv_backward(f, layer, group, go);

    auto ref = conv2d_backward(f.tensor.reshaped({2, 6, 6}), layer.weights.reshaped({3, 2, 3, 3}),
                               go.tensor.reshaped({3, 6, 6}), 1);
    CHECK(max_rel_diff(g.grad_input.reshaped({2, 6, 6}), ref.grad_input) < 1e-12);
    CHECK(max_rel_diff(g.grad_weights.reshaped({3, 2, 3, 3}), ref.grad_kernels) < 1e-12);
}

TEST_CASE("lift and gconv backward match finite differences (C4 and D4)") {
    std::mt19937_64 rng(9);
    for (GroupSpec spec : {GroupSpec{GroupKind::cyclic, 4}, GroupSpec{GroupKind::dihedral, 4}}) {
        Group group(spec);
        // lifting
        {
            auto layer = make_lifting_conv<double>(spec, 2, 2);
            fill_uniform(layer.weights, rng);
            fill_uniform(layer.bias, rng, -0.1, 0.1);
            Tensor64 x = random_tensor<double>({1, 2, 5, 5}, rng);
            Tensor64 probe = random_tensor<double>({1, 2, group.order(), 5, 5}, rng);
            auto loss = [&]() {
                GFeatureMapT<double> y = lift_forward(x, layer, group);
                double s = 0.0;
                for (std::int64_t i = 0; i < y.tensor.size(); ++i) s += y.tensor[i] * probe[i];
                return s;
            };
            auto g = lift_backward(x, layer, group, GFeatureMapT<double>(probe, spec));
            double worst = 0.0;
            for (std::int64_t i = 0; i < layer.weights.size(); ++i) {
                const double fd = testutil::central_difference(loss, layer.weights[i], 1e-5);
                worst = std::max(worst, std::abs(fd - g.grad_weights[i]) /
                                            std::max({std::abs(fd), std::abs(g.grad_weights[i]), 1e-6}));
            }
            for (std::int64_t i = 0; i < x.size(); ++i) {
                const double fd = testutil::central_difference(loss, x[i], 1e-5);
                worst = std::max(worst, std::abs(fd - g.grad_input[i]) /
                                            std::max({std::abs(fd), std::abs(g.grad_input[i]), 1e-6}));
            }
            CHECK(worst < 1e-5);
        }
        // g-conv
        {
            auto layer = make_gconv<double>(spec, 2, 2);
            fill_uniform(layer.weights, rng);
            fill_uniform(layer.bias, rng, -0.1, 0.1);
            GFeatureMapT<double> f(random_tensor<double>({1, 2, group.order(), 5, 5}, rng), spec);
            Tensor64 probe = random_tensor<double>({1, 2, group.order(), 5, 5}, rng);
            auto loss = [&]() {
                GFeatureMapT<double> y = gconv_forward(f, layer, group);
                double s = 0.0;
                for (std::int64_t i = 0; i < y.tensor.size(); ++i) s += y.tensor[i] * probe[i];
                return s;
            };
            auto g = gconv_backward(f, layer, group, GFeatureMapT<double>(probe, spec));
            double worst = 0.0;
            for (std::int64_t i = 0; i < layer.weights.size(); ++i) {
                const double fd = testutil::central_difference(loss, layer.weights[i], 1e-5);
                worst = std::max(worst, std::abs(fd - g.grad_weights[i]) /
                                            std::max({std::abs(fd), std::abs(g.grad_weights[i]), 1e-6}));
            }
            for (std::int64_t i = 0; i < layer.bias.size(); ++i) {
                const double fd = testutil::central_difference(loss, layer.bias[i], 1e-5);
                worst = std::max(worst, std::abs(fd - g.grad_bias[i]) /
                                            std::max({std::abs(fd), std::abs(g.grad_bias[i]), 1e-6}));
            }
            CHECK(worst < 1e-5);
        }
    }
}

TEST_CASE("group_pool basics") {
    // C1: pooling is the identity
    GFeatureMapT<float> single(Tensor({1, 1, 1, 2, 2}, {1.0f, 2.0f, 3.0f, 4.0f}),
                               GroupSpec{GroupKind::cyclic, 1});
    auto id = group_pool(single, GroupPoolMode::mean);
    CHECK(max_abs_diff(id.output, Tensor({1, 1, 2, 2}, {1.0f, 2.0f, 3.0f, 4.0f})) == 0.0);

    // constant fibers pool to the constant; mean of [1,3] is 2
    GFeatureMapT<float> two(Tensor({1, 1, 2, 1, 1}, {1.0f, 3.0f}), GroupSpec{GroupKind::cyclic, 2});
    CHECK(group_pool(two, GroupPoolMode::mean).output[0] == 2.0f);
    CHECK(group_pool(two, GroupPoolMode::max).output[0] == 3.0f);

    GFeatureMapT<float> constant(Tensor::full({1, 2, 4, 3, 3}, 0.7f), GroupSpec{GroupKind::cyclic, 4});
    auto pooled = group_pool(constant, GroupPoolMode::mean);
    for (std::int64_t i = 0; i < pooled.output.size(); ++i)
        CHECK(pooled.output[i] == doctest::Approx(0.7f));
}

TEST_CASE("concat_fields stacks field counts and relu_g keeps non-negative maps") {
    std::mt19937_64 rng(10);
    GroupSpec spec{GroupKind::cyclic, 4};
    GFeatureMapT<float> a = random_gmap<float>(spec, 2, 3, 6, rng);
    GFeatureMapT<float> b = random_gmap<float>(spec, 2, 5, 6, rng);
    GFeatureMapT<float> c = concat_fields(a, b);
    CHECK(c.fields() == 8);
    auto [sa, sb] = split_fields(c, 3);
    CHECK(max_abs_diff(sa.tensor, a.tensor) == 0.0);
    CHECK(max_abs_diff(sb.tensor, b.tensor) == 0.0);

    GFeatureMapT<float> nonneg(relu(a.tensor), spec);
    CHECK(max_abs_diff(relu_g(nonneg).tensor, nonneg.tensor) == 0.0);

    GFeatureMapT<float> other(Tensor({2, 3, 2, 6, 6}), GroupSpec{GroupKind::cyclic, 2});
    CHECK_THROWS_AS(concat_fields(a, other), std::invalid_argument);
}

TEST_CASE("relu/maxpool/upsample/concat commute with exact group actions") {
    std::mt19937_64 rng(11);
    for (const GroupSpec& spec : kAllSpecs) {
        Group group(spec);
        GFeatureMapT<float> f = random_gmap<float>(spec, 1, 2, 8, rng);
        for (const GroupElement& e : exact_elements(group)) {
            GFeatureMapT<float> ft = apply_group_action(f, group, e);
            CHECK(max_abs_diff(relu_g(ft).tensor, apply_group_action(relu_g(f), group, e).tensor) <
                  1e-6);
            GFeatureMapT<float> p1(maxpool_g(ft).output, spec);
            GFeatureMapT<float> p2(maxpool_g(f).output, spec);
            CHECK(max_abs_diff(p1.tensor, apply_group_action(p2, group, e).tensor) < 1e-6);
            CHECK(max_abs_diff(upsample_g(ft).tensor,
                               apply_group_action(upsample_g(f), group, e).tensor) < 1e-6);
            CHECK(max_abs_diff(concat_fields(ft, ft).tensor,
                               apply_group_action(concat_fields(f, f), group, e).tensor) < 1e-6);
        }
    }
}

TEST_CASE("three-layer stacks stay equivariant") {
    std::mt19937_64 rng(12);
    for (GroupSpec spec : {GroupSpec{GroupKind::cyclic, 4}, GroupSpec{GroupKind::dihedral, 4},
                           GroupSpec{GroupKind::dihedral, 8}}) {
        Group group(spec);
        auto l1 = make_lifting_conv<float>(spec, 2, 3);
        auto l2 = make_gconv<float>(spec, 3, 3);
        auto l3 = make_gconv<float>(spec, 3, 2);
        fill_uniform(l1.weights, rng);
        fill_uniform(l2.weights, rng);
        fill_uniform(l3.weights, rng);
        auto net = [&](const Tensor& x) {
            GFeatureMapT<float> a = relu_g(lift_forward(x, l1, group));
            GFeatureMapT<float> b(maxpool_g(a).output, spec);
            b = relu_g(gconv_forward(b, l2, group));
            b = upsample_g(b);
            return gconv_forward(b, l3, group);
        };
        Tensor x = random_tensor<float>({1, 2, 12, 12}, rng);
        GFeatureMapT<float> base = net(x);
        for (const GroupElement& e : exact_elements(group)) {
            GFeatureMapT<float> got = net(apply_spatial_action(x, group, e));
            CHECK(testutil::rel_err_norm(got.tensor, apply_group_action(base, group, e).tensor) < 1e-4);
        }
    }
}

TEST_CASE("layer blobs round-trip through the binary format") {
    std::mt19937_64 rng(13);
    GroupSpec spec{GroupKind::dihedral, 4};
    auto lift = make_lifting_conv<float>(spec, 3, 5);
    auto gc = make_gconv<float>(spec, 5, 4);
    fill_uniform(lift.weights, rng);
    fill_uniform(lift.bias, rng);
    fill_uniform(gc.weights, rng);
    fill_uniform(gc.bias, rng);

    std::stringstream buf(std::ios::in | std::ios::out | std::ios::binary);
    save_layer(buf, lift);
    save_layer(buf, gc);

    auto lift2 = make_lifting_conv<float>(spec, 3, 5);
    auto gc2 = make_gconv<float>(spec, 5, 4);
    load_layer(buf, lift2);
    load_layer(buf, gc2);
    CHECK(max_abs_diff(lift2.weights, lift.weights) == 0.0);
    CHECK(max_abs_diff(lift2.bias, lift.bias) == 0.0);
    CHECK(max_abs_diff(gc2.weights, gc.weights) == 0.0);
    CHECK(max_abs_diff(gc2.bias, gc.bias) == 0.0);

    // mismatched expectations are rejected
    std::stringstream buf2(std::ios::in | std::ios::out | std::ios::binary);
    save_layer(buf2, lift);
    auto wrong = make_lifting_conv<float>(spec, 3, 6);
    CHECK_THROWS_AS(load_layer(buf2, wrong), std::runtime_error);
}

TEST_CASE("parameter count formulas") {
    GroupSpec d8{GroupKind::dihedral, 8};
    auto lift = make_lifting_conv<float>(d8, 2, 6);
    CHECK(lift.param_count() == 6 * 2 * 9 + 6);
    auto gc = make_gconv<float>(d8, 6, 50);
    CHECK(gc.param_count() == 50LL * 6 * 16 * 9 + 50);
}

TEST_SUITE_END();
