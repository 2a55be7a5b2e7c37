#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "gequnet/tensor.hpp"

namespace testutil {

template <typename T>
void fill_uniform(gequnet::TensorT<T>& t, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(dist(rng));
}

template <typename T>
gequnet::TensorT<T> random_tensor(std::vector<int> shape, std::mt19937_64& rng, double lo = -1.0,
                                  double hi = 1.0) {
    gequnet::TensorT<T> t(std::move(shape));
    fill_uniform(t, rng, lo, hi);
    return t;
}

template <typename T>
double max_abs_diff(const gequnet::TensorT<T>& a, const gequnet::TensorT<T>& b) {
    double m = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    return m;
}

// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor)
template <typename T>
double max_rel_diff(const gequnet::TensorT<T>& a, const gequnet::TensorT<T>& b,
                    double floor = 1e-6) {
    double m = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i) {
        const double x = static_cast<double>(a[i]);
        const double y = static_cast<double>(b[i]);
        const double denom = std::max({std::abs(x), std::abs(y), floor});
        m = std::max(m, std::abs(x - y) / denom);
    }
    return m;
}

// ||a - b||_inf normalized by the larger tensor magnitude.
template <typename T>
double rel_err_norm(const gequnet::TensorT<T>& a, const gequnet::TensorT<T>& b) {
    double diff = 0.0, scale = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i) {
        const double x = static_cast<double>(a[i]);
        const double y = static_cast<double>(b[i]);
        diff = std::max(diff, std::abs(x - y));
        scale = std::max({scale, std::abs(x), std::abs(y)});
    }
    return scale > 0.0 ? diff / scale : diff;
}

// Reference quadruple-loop correlation, independent of the im2col path.
template <typename T>
gequnet::TensorT<T> conv2d_naive(const gequnet::TensorT<T>& input,
                                 const gequnet::TensorT<T>& kernels, int padding) {
    const int C = input.dim(0), H = input.dim(1), W = input.dim(2);
    const int O = kernels.dim(0), k = kernels.dim(2);
    const int HO = H + 2 * padding - k + 1;
    const int WO = W + 2 * padding - k + 1;
    gequnet::TensorT<T> out({O, HO, WO});
    for (int o = 0; o < O; ++o)
        for (int y = 0; y < HO; ++y)
            for (int x = 0; x < WO; ++x) {
                T acc = T(0);
                for (int c = 0; c < C; ++c)
                    for (int i = 0; i < k; ++i)
                        for (int j = 0; j < k; ++j) {
                            const int sy = y + i - padding;
                            const int sx = x + j - padding;
                            if (sy < 0 || sy >= H || sx < 0 || sx >= W) continue;
                            acc += input.at(c, sy, sx) * kernels.at(o, c, i, j);
                        }
                out.at(o, y, x) = acc;
            }
    return out;
}

template <typename T>
double l2_norm(const gequnet::TensorT<T>& t) {
    double s = 0.0;
    for (std::int64_t i = 0; i < t.size(); ++i)
        s += static_cast<double>(t[i]) * static_cast<double>(t[i]);
    return std::sqrt(s);
}

// Central finite difference of scalar(loss_fn) w.r.t. one scalar slot.
template <class F>
double central_difference(F&& loss_fn, double& slot, double step) {
    const double saved = slot;
    slot = saved + step;
    const double up = loss_fn();
    slot = saved - step;
    const double down = loss_fn();
    slot = saved;
    return (up - down) / (2.0 * step);
}

}  // namespace testutil
