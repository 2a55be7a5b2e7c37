#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "gequnet/tensor.hpp"

namespace gequnet {

constexpr double kDefaultDynamicRangeDb = 80.0;

struct MetricReport {
    double rmse_norm = 0.0;
    double rmse_db = 0.0;
    double nmse = 0.0;
    std::int64_t n_pixels = 0;
};

namespace detail {
template <typename T>
double sum_sq_diff(const TensorT<T>& a, const TensorT<T>& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("metrics: shape mismatch");
    double s = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        s += d * d;
    }
    return s;
}

template <typename T>
double sum_sq(const TensorT<T>& a) {
    double s = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i)
        s += static_cast<double>(a[i]) * static_cast<double>(a[i]);
    return s;
}
}  // namespace detail

// sqrt(mean of squared differences) over all elements.
template <typename T>
double rmse(const TensorT<T>& pred, const TensorT<T>& target) {
    if (pred.size() == 0) throw std::invalid_argument("rmse: empty input");
    return std::sqrt(detail::sum_sq_diff(pred, target) / static_cast<double>(pred.size()));
}

// ||pred - target||^2 / ||target||^2.
template <typename T>
double nmse(const TensorT<T>& pred, const TensorT<T>& target) {
    if (target.size() == 0) throw std::invalid_argument("nmse: empty input");
    const double denom = detail::sum_sq(target);
    if (denom == 0.0) throw std::invalid_argument("nmse: target has zero norm");
    return detail::sum_sq_diff(pred, target) / denom;
}

// Normalized-space RMSE scaled linearly onto the dataset's dB dynamic range.
inline double rmse_db(double rmse_norm, double dynamic_range_db = kDefaultDynamicRangeDb) {
    if (rmse_norm < 0.0) throw std::invalid_argument("rmse_db: rmse must be >= 0");
    return rmse_norm * dynamic_range_db;
}

template <typename T>
MetricReport metric_report(const TensorT<T>& pred, const TensorT<T>& target,
                           double dynamic_range_db = kDefaultDynamicRangeDb) {
    MetricReport r;
    r.rmse_norm = rmse(pred, target);
    r.rmse_db = rmse_db(r.rmse_norm, dynamic_range_db);
    r.nmse = nmse(pred, target);
    r.n_pixels = pred.size();
    return r;
}

}  // namespace gequnet
