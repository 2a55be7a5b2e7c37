#include <doctest.h>

#include <random>

#include "gequnet/train.hpp"
#include "testutil.hpp"

using namespace gequnet;
using testutil::random_tensor;

namespace {

std::vector<Sample> tiny_toy_set(int maps, int txs, std::uint64_t seed) {
    ToyParams params;
    params.n_maps = maps;
    params.size = 32;
    params.txs_per_map = txs;
    params.seed = seed;
    return synth_toy_dataset(params);
}

ModelConfig tiny_model_config(GroupSpec spec) {
    ModelConfig c;
    c.spec = spec;
    c.width_scale = {1, 8};
    return c;
}

}  // namespace

TEST_SUITE_BEGIN("train");

TEST_CASE("mse_loss fixtures") {
    Tensor p({4}, {1.0f, 1.0f, 1.0f, 1.0f});
    Tensor t({4});
    auto r = mse_loss(p, t);
    CHECK(r.loss == doctest::Approx(1.0));
    for (std::int64_t i = 0; i < 4; ++i) CHECK(r.grad[i] == doctest::Approx(0.5f));

    auto zero = mse_loss(t, t);
    CHECK(zero.loss == 0.0);

    // masked: only the included pixels count
    Tensor mask({4}, {1.0f, 0.0f, 1.0f, 0.0f});
    auto masked = mse_loss(p, t, &mask);
    CHECK(masked.loss == doctest::Approx(1.0));
    CHECK(masked.grad[1] == 0.0f);
    CHECK(masked.grad[0] == doctest::Approx(1.0f));

    Tensor none({4});
    CHECK_THROWS_AS(mse_loss(p, t, &none), std::invalid_argument);
    CHECK_THROWS_AS(mse_loss(p, Tensor({3})), std::invalid_argument);
}

TEST_CASE("mse_loss gradient matches finite differences in 64-bit") {
    std::mt19937_64 rng(1);
    Tensor64 p = random_tensor<double>({12}, rng);
    Tensor64 t = random_tensor<double>({12}, rng);
    auto r = mse_loss(p, t);
    auto loss = [&]() { return mse_loss(p, t).loss; };
    for (std::int64_t i = 0; i < p.size(); ++i) {
        const double fd = testutil::central_difference(loss, p[i], 1e-6);
        CHECK(r.grad[i] == doctest::Approx(fd).epsilon(1e-8));
    }
}

TEST_CASE("adam_step: zero gradients leave parameters unchanged") {
    std::vector<float> p{1.0f, -2.0f, 3.0f};
    std::vector<float> g{0.0f, 0.0f, 0.0f};
    std::vector<std::span<float>> params{{p.data(), p.size()}};
    std::vector<std::span<float>> grads{{g.data(), g.size()}};
    auto state = OptimizerState::for_params(params);
    adam_step(params, grads, state, 0.1);
    CHECK(state.step == 1);
    CHECK(p[0] == 1.0f);
    CHECK(p[1] == -2.0f);
    CHECK(p[2] == 3.0f);
}

TEST_CASE("adam_step: first update moves by about lr in the gradient sign") {
    std::vector<float> p{1.0f, -2.0f, 0.5f};
    std::vector<float> g{0.3f, -0.7f, 2.0f};
    std::vector<std::span<float>> params{{p.data(), p.size()}};
    std::vector<std::span<float>> grads{{g.data(), g.size()}};
    auto state = OptimizerState::for_params(params);
    const double lr = 0.01;
    adam_step(params, grads, state, lr);
    CHECK(p[0] == doctest::Approx(1.0 - lr).epsilon(1e-4));
    CHECK(p[1] == doctest::Approx(-2.0 + lr).epsilon(1e-4));
    CHECK(p[2] == doctest::Approx(0.5 - lr).epsilon(1e-4));
}

TEST_CASE("adam_step rejects mismatched layouts") {
    std::vector<float> p{1.0f};
    std::vector<float> g{1.0f, 2.0f};
    std::vector<std::span<float>> params{{p.data(), p.size()}};
    std::vector<std::span<float>> grads{{g.data(), g.size()}};
    auto state = OptimizerState::for_params(params);
    CHECK_THROWS_AS(adam_step(params, grads, state, 0.1), std::invalid_argument);
}

TEST_CASE("one epoch on a trivially fittable sample reduces the loss") {
    ToyParams params;
    params.n_maps = 1;
    params.size = 32;
    params.seed = 2;
    auto samples = synth_toy_dataset(params);

    Model model(tiny_model_config({GroupKind::cyclic, 2}));
    model.init_weights(3);

    TrainConfig tc;
    tc.learning_rate = 3e-3;
    tc.batch_size = 1;
    tc.max_epochs = 8;
    tc.seed = 4;
    Normalizer norm;
    TrainResult result = train(model, samples, samples, tc, norm);
    REQUIRE(result.curves.size() == 8);
    CHECK(result.curves.back().train_loss < result.curves.front().train_loss);

    // best checkpoint is the argmin of the validation curve
    double best = 1e300;
    int best_epoch = 0;
    for (const auto& e : result.curves)
        if (e.val_rmse_norm < best) {
            best = e.val_rmse_norm;
            best_epoch = e.epoch;
        }
    CHECK(result.best_epoch == best_epoch);
    CHECK(result.best_val_rmse == best);
}

TEST_CASE("training is bit-deterministic for a fixed seed") {
    auto samples = tiny_toy_set(3, 1, 5);
    std::vector<Sample> train_set(samples.begin(), samples.begin() + 2);
    std::vector<Sample> val_set(samples.begin() + 2, samples.end());

    auto run = [&]() {
        Model model(tiny_model_config({GroupKind::cyclic, 2}));
        model.init_weights(7);
        TrainConfig tc;
        tc.learning_rate = 1e-3;
        tc.batch_size = 2;
        tc.max_epochs = 3;
        tc.seed = 7;
        Normalizer norm;
        TrainResult r = train(model, train_set, val_set, tc, norm);
        return std::pair{r, model};
    };
    auto [r1, m1] = run();
    auto [r2, m2] = run();
    REQUIRE(r1.curves.size() == r2.curves.size());
    for (std::size_t i = 0; i < r1.curves.size(); ++i) {
        CHECK(r1.curves[i].train_loss == r2.curves[i].train_loss);
        CHECK(r1.curves[i].val_rmse_norm == r2.curves[i].val_rmse_norm);
    }
    auto v1 = m1.parameter_views();
    auto v2 = m2.parameter_views();
    for (std::size_t t = 0; t < v1.size(); ++t)
        for (std::size_t i = 0; i < v1[t].size(); ++i) CHECK(v1[t][i] == v2[t][i]);
}

TEST_CASE("evaluate: perfect and constant predictors, and a hand-checked fixture") {
    auto samples = tiny_toy_set(2, 1, 6);

    Model model(tiny_model_config({GroupKind::cyclic, 2}));
    auto params = model.parameter_views();
    for (auto& p : params)
        for (auto& v : p) v = 0.0f;

    Normalizer norm;
    std::vector<PerSampleMetrics> per_sample;
    MetricReport rep = evaluate(model, samples, norm, false, &per_sample);
    REQUIRE(per_sample.size() == 2);

    // zero model predicts 0 everywhere: SSE equals sum of squared targets
    double sse = 0.0;
    std::int64_t n = 0;
    for (const auto& s : samples) {
        for (std::int64_t i = 0; i < s.target.size(); ++i)
            sse += static_cast<double>(s.target[i]) * static_cast<double>(s.target[i]);
        n += s.target.size();
    }
    CHECK(rep.rmse_norm == doctest::Approx(std::sqrt(sse / n)).epsilon(1e-12));
    CHECK(rep.nmse == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rep.rmse_db == doctest::Approx(rep.rmse_norm * 80.0).epsilon(1e-12));
    CHECK(rep.n_pixels == n);

    // per-sample rows reaggregate to the printed totals
    double sse2 = 0.0;
    for (const auto& ps : per_sample) sse2 += ps.sse;
    CHECK(std::abs(std::sqrt(sse2 / n) - rep.rmse_norm) < 1e-12);

    // constant-target dataset with a matching constant bias: zero error
    std::vector<Sample> constant = samples;
    for (auto& s : constant) s.target = Tensor::full(s.target.shape(), 0.25f);
    params[2 * Model::kNumGConvs + 1][0] = 0.25f;  // output bias
    MetricReport zero = evaluate(model, constant, norm);
    CHECK(zero.rmse_norm == doctest::Approx(0.0).epsilon(1e-7));
}

TEST_CASE("divergent training aborts with a diagnostic") {
    auto samples = tiny_toy_set(2, 1, 8);
    Model model(tiny_model_config({GroupKind::cyclic, 2}));
    model.init_weights(9);
    TrainConfig tc;
    tc.learning_rate = 1e42;  // overflows float parameters on the first update
    tc.batch_size = 1;
    tc.max_epochs = 4;
    tc.seed = 1;
    Normalizer norm;
    CHECK_THROWS_AS(train(model, samples, samples, tc, norm), DivergenceError);
}

TEST_SUITE_END();
