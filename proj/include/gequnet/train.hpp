#pragma once

#include <cmath>
#include <cstdint>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include "gequnet/data.hpp"
#include "gequnet/metrics.hpp"
#include "gequnet/model.hpp"

namespace gequnet {

struct TrainConfig {
    double learning_rate = 1e-4;
    int batch_size = 4;
    int max_epochs = 50;
    double lr_decay_factor = 0.5;  // multiplied in on validation plateau
    int lr_patience = 3;           // epochs without improvement before decay
    std::uint64_t seed = 0;
    bool loss_mask_buildings = false;
};

struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

template <typename T>
struct MseLossResult {
    double loss = 0.0;
    TensorT<T> grad;
};

// Mean squared error over unmasked elements (mask entry 1 = include).
// grad = 2 (pred - target) / n_included.
template <typename T>
MseLossResult<T> mse_loss(const TensorT<T>& pred, const TensorT<T>& target,
                          const TensorT<T>* mask = nullptr) {
    if (!pred.same_shape(target)) throw std::invalid_argument("mse_loss: shape mismatch");
    if (mask && !mask->same_shape(pred))
        throw std::invalid_argument("mse_loss: mask shape mismatch");
    std::int64_t n = pred.size();
    if (mask) {
        n = 0;
        for (std::int64_t i = 0; i < mask->size(); ++i)
            if ((*mask)[i] != T(0)) ++n;
        if (n == 0) throw std::invalid_argument("mse_loss: mask excludes every element");
    }
    if (n == 0) throw std::invalid_argument("mse_loss: empty input");
    MseLossResult<T> res;
    res.grad = TensorT<T>(pred.shape());
    double acc = 0.0;
    const double inv = 1.0 / static_cast<double>(n);
    for (std::int64_t i = 0; i < pred.size(); ++i) {
        if (mask && (*mask)[i] == T(0)) continue;
        const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
        acc += d * d;
        res.grad[i] = static_cast<T>(2.0 * d * inv);
    }
    res.loss = acc * inv;
    return res;
}

struct AdamParams {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <typename T>
struct OptimizerStateT {
    std::vector<std::vector<T>> m;  // first moments, one vector per parameter tensor
    std::vector<std::vector<T>> v;  // second moments
    std::int64_t step = 0;

    static OptimizerStateT for_params(const std::vector<std::span<T>>& params) {
        OptimizerStateT s;
        s.m.reserve(params.size());
        s.v.reserve(params.size());
        for (const auto& p : params) {
            s.m.emplace_back(p.size(), T(0));
            s.v.emplace_back(p.size(), T(0));
        }
        return s;
    }
};

using OptimizerState = OptimizerStateT<float>;

// Standard bias-corrected Adam update. Deterministic for fixed inputs.
template <typename T>
void adam_step(const std::vector<std::span<T>>& params, const std::vector<std::span<T>>& grads,
               OptimizerStateT<T>& state, double learning_rate, const AdamParams& ap = {}) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw std::invalid_argument("adam_step: parameter/gradient/state layout mismatch");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(ap.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(ap.beta2, static_cast<double>(state.step));
    for (std::size_t t = 0; t < params.size(); ++t) {
        if (params[t].size() != grads[t].size() || params[t].size() != state.m[t].size())
            throw std::invalid_argument("adam_step: tensor size mismatch");
        T* p = params[t].data();
        const T* g = grads[t].data();
        T* m = state.m[t].data();
        T* v = state.v[t].data();
        for (std::size_t i = 0; i < params[t].size(); ++i) {
            const double gi = static_cast<double>(g[i]);
            const double mi = ap.beta1 * static_cast<double>(m[i]) + (1.0 - ap.beta1) * gi;
            const double vi = ap.beta2 * static_cast<double>(v[i]) + (1.0 - ap.beta2) * gi * gi;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            const double mhat = mi / bc1;
            const double vhat = vi / bc2;
            p[i] = static_cast<T>(static_cast<double>(p[i]) -
                                  learning_rate * mhat / (std::sqrt(vhat) + ap.eps));
        }
    }
}

struct EpochStats {
    int epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_rmse_norm = 0.0;
    double val_rmse_db = 0.0;
    double learning_rate = 0.0;
};

struct TrainResult {
    Model best_model;
    int best_epoch = 0;  // 1-based
    double best_val_rmse = 0.0;
    std::vector<EpochStats> curves;
};

struct PerSampleMetrics {
    std::size_t index = 0;
    std::string map_id;
    std::int64_t n_pixels = 0;
    double sse = 0.0;         // sum of squared differences
    double target_sq = 0.0;   // sum of squared target values
    double rmse_norm = 0.0;
};

// Aggregated metrics over a sample set; RMSE pools squared error over all
// pixels of all samples. Optional per-sample breakdown.
MetricReport evaluate(const Model& model, const std::vector<Sample>& samples,
                      const Normalizer& normalizer, bool mask_buildings = false,
                      std::vector<PerSampleMetrics>* per_sample = nullptr);

// Runs the epoch loop (seeded shuffle, batched forward/backward, Adam,
// per-epoch validation RMSE, plateau LR decay). Returns the checkpoint with
// the lowest validation RMSE. Mutates `model` in place (final weights).
// Throws DivergenceError when the loss stops being finite.
TrainResult train(Model& model, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, const TrainConfig& config,
                  const Normalizer& normalizer, std::ostream* log = nullptr);

void write_curves_csv(const std::string& path, const std::vector<EpochStats>& curves);

}  // namespace gequnet
