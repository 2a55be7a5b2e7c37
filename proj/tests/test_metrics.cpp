#include <doctest.h>

#include <random>

#include "gequnet/metrics.hpp"
#include "testutil.hpp"

using namespace gequnet;
using testutil::random_tensor;

TEST_SUITE_BEGIN("metrics");

TEST_CASE("rmse fixtures") {
    Tensor a({4}, {1.0f, 2.0f, 3.0f, 4.0f});
    CHECK(rmse(a, a) == 0.0);

    Tensor p({2}, {3.0f, 4.0f});
    Tensor t({2}, {0.0f, 0.0f});
    CHECK(rmse(p, t) == doctest::Approx(std::sqrt(25.0 / 2.0)).epsilon(1e-12));

    std::mt19937_64 rng(1);
    Tensor x = random_tensor<float>({17}, rng);
    Tensor y = random_tensor<float>({17}, rng);
    CHECK(rmse(x, y) == rmse(y, x));

    CHECK_THROWS_AS(rmse(Tensor({0}), Tensor({0})), std::invalid_argument);
    CHECK_THROWS_AS(rmse(Tensor({2}), Tensor({3})), std::invalid_argument);
}

TEST_CASE("nmse fixtures") {
    Tensor t({3}, {1.0f, -2.0f, 0.5f});
    CHECK(nmse(t, t) == 0.0);

    Tensor doubled({3}, {2.0f, -4.0f, 1.0f});
    CHECK(nmse(doubled, t) == doctest::Approx(1.0).epsilon(1e-12));

    Tensor zero({3});
    CHECK(nmse(zero, t) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(nmse(t, zero), std::invalid_argument);
}

TEST_CASE("rmse_db scaling") {
    CHECK(rmse_db(0.0) == 0.0);
    CHECK(rmse_db(0.02) == doctest::Approx(1.6).epsilon(1e-12));
    CHECK(rmse_db(1.0) == doctest::Approx(80.0).epsilon(1e-12));
    CHECK(rmse_db(0.5, 40.0) == doctest::Approx(20.0).epsilon(1e-12));
    CHECK_THROWS_AS(rmse_db(-0.1), std::invalid_argument);
}

TEST_CASE("cross-consistency identities hold to 1e-9") {
    std::mt19937_64 rng(2);
    for (int iter = 0; iter < 20; ++iter) {
        Tensor64 p = random_tensor<double>({31}, rng);
        Tensor64 t = random_tensor<double>({31}, rng);
        const double r = rmse(p, t);
        const double n = static_cast<double>(p.size());
        double sq = 0.0, tsq = 0.0;
        for (std::int64_t i = 0; i < p.size(); ++i) {
            sq += (p[i] - t[i]) * (p[i] - t[i]);
            tsq += t[i] * t[i];
        }
        CHECK(std::abs(r * r * n - sq) / sq < 1e-9);
        CHECK(std::abs(nmse(p, t) - (r * r * n) / tsq) / nmse(p, t) < 1e-9);
    }
}

TEST_CASE("metrics are invariant under a common permutation") {
    std::mt19937_64 rng(3);
    Tensor p = random_tensor<float>({40}, rng);
    Tensor t = random_tensor<float>({40}, rng);
    std::vector<int> perm(40);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Tensor pp({40}), tp({40});
    for (int i = 0; i < 40; ++i) {
        pp[i] = p[perm[static_cast<std::size_t>(i)]];
        tp[i] = t[perm[static_cast<std::size_t>(i)]];
    }
    CHECK(rmse(pp, tp) == doctest::Approx(rmse(p, t)).epsilon(1e-12));
    CHECK(nmse(pp, tp) == doctest::Approx(nmse(p, t)).epsilon(1e-12));
}

TEST_SUITE_END();
