#include "gequnet/train.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>

namespace gequnet {

namespace {

// [B,1,H,W] batch tensors from encoded samples.
struct EncodedSet {
    std::vector<Tensor> inputs;   // [C,H,W]
    std::vector<Tensor> targets;  // [H,W]
    std::vector<Tensor> masks;    // [H,W]; empty when masking is off
};

EncodedSet encode_set(const std::vector<Sample>& samples, bool with_cars, bool mask_buildings) {
    EncodedSet out;
    out.inputs.reserve(samples.size());
    out.targets.reserve(samples.size());
    for (const Sample& s : samples) {
        out.inputs.push_back(encode_input<float>(s, with_cars));
        out.targets.push_back(s.target);
        if (mask_buildings) {
            Tensor m(s.building.shape());
            for (std::int64_t i = 0; i < m.size(); ++i)
                m[i] = s.building[i] > 0.5f ? 0.0f : 1.0f;
            out.masks.push_back(std::move(m));
        }
    }
    return out;
}

Tensor stack_batch(const std::vector<Tensor>& items, const std::vector<std::size_t>& order,
                   std::size_t first, std::size_t count, bool add_channel) {
    const Tensor& proto = items[order[first]];
    std::vector<int> shape;
    shape.push_back(static_cast<int>(count));
    if (add_channel) shape.push_back(1);
    for (int d : proto.shape()) shape.push_back(d);
    Tensor batch(shape);
    const std::int64_t sz = proto.size();
    for (std::size_t b = 0; b < count; ++b) {
        const Tensor& item = items[order[first + b]];
        if (!item.same_shape(proto))
            throw std::invalid_argument("train: samples in a batch have mismatched sizes");
        std::copy(item.data(), item.data() + sz, batch.data() + static_cast<std::int64_t>(b) * sz);
    }
    return batch;
}

}  // namespace

MetricReport evaluate(const Model& model, const std::vector<Sample>& samples,
                      const Normalizer& normalizer, bool mask_buildings,
                      std::vector<PerSampleMetrics>* per_sample) {
    if (samples.empty()) throw std::invalid_argument("evaluate: empty dataset");
    double sse = 0.0, target_sq = 0.0;
    std::int64_t n = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const Sample& s = samples[i];
        Tensor x = encode_input<float>(s, model.config().with_cars);
        const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
        Tensor pred = model.forward(std::move(x).reshaped({1, C, H, W}));
        PerSampleMetrics ps;
        ps.index = i;
        ps.map_id = s.map_id;
        for (std::int64_t p = 0; p < s.target.size(); ++p) {
            if (mask_buildings && s.building[p] > 0.5f) continue;
            const double d = static_cast<double>(pred[p]) - static_cast<double>(s.target[p]);
            ps.sse += d * d;
            ps.target_sq += static_cast<double>(s.target[p]) * static_cast<double>(s.target[p]);
            ps.n_pixels += 1;
        }
        if (ps.n_pixels == 0) throw std::invalid_argument("evaluate: mask excludes every pixel");
        ps.rmse_norm = std::sqrt(ps.sse / static_cast<double>(ps.n_pixels));
        sse += ps.sse;
        target_sq += ps.target_sq;
        n += ps.n_pixels;
        if (per_sample) per_sample->push_back(std::move(ps));
    }
    MetricReport r;
    r.rmse_norm = std::sqrt(sse / static_cast<double>(n));
    r.rmse_db = rmse_db(r.rmse_norm, normalizer.dynamic_range_db);
    r.nmse = target_sq > 0.0 ? sse / target_sq : 0.0;
    r.n_pixels = n;
    return r;
}

TrainResult train(Model& model, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, const TrainConfig& config,
                  const Normalizer& normalizer, std::ostream* log) {
    if (train_set.empty() || val_set.empty())
        throw std::invalid_argument("train: train and validation sets must be non-empty");
    if (config.batch_size < 1 || config.max_epochs < 1 ||
        config.learning_rate <= 0.0 || config.lr_patience < 1 ||
        config.lr_decay_factor <= 0.0 || config.lr_decay_factor >= 1.0)
        throw std::invalid_argument("train: invalid hyperparameters");

    const EncodedSet enc = encode_set(train_set, model.config().with_cars,
                                      config.loss_mask_buildings);

    auto params = model.parameter_views();
    auto opt = OptimizerState::for_params(params);
    ModelGradsT<float> grads = model.make_grads();

    std::mt19937_64 shuffle_rng(config.seed);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    TrainResult result{model, 0, std::numeric_limits<double>::infinity(), {}};
    double lr = config.learning_rate;
    int epochs_since_improve = 0;

    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double loss_sum = 0.0;
        std::size_t seen = 0;
        for (std::size_t first = 0; first < order.size(); first += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t count =
                std::min(static_cast<std::size_t>(config.batch_size), order.size() - first);
            Tensor x = stack_batch(enc.inputs, order, first, count, /*add_channel=*/false);
            Tensor y = stack_batch(enc.targets, order, first, count, /*add_channel=*/true);

            ModelTraceT<float> trace;
            Tensor pred = model.forward(x, trace);
            MseLossResult<float> loss;
            if (config.loss_mask_buildings) {
                Tensor mask = stack_batch(enc.masks, order, first, count, /*add_channel=*/true);
                loss = mse_loss(pred, y, &mask);
            } else {
                loss = mse_loss(pred, y);
            }
            if (!std::isfinite(loss.loss))
                throw DivergenceError("train: non-finite loss at epoch " + std::to_string(epoch) +
                                      " (step " + std::to_string(opt.step + 1) + "); aborting");
            grads.zero();
            model.backward(loss.grad, trace, grads);
            auto grad_views = grads.views();
            adam_step(params, grad_views, opt, lr);
            loss_sum += loss.loss * static_cast<double>(count);
            seen += count;
        }

        const double train_loss = loss_sum / static_cast<double>(seen);
        const MetricReport val = evaluate(model, val_set, normalizer, config.loss_mask_buildings);
        result.curves.push_back({epoch, train_loss, val.rmse_norm, val.rmse_db, lr});
        if (log)
            (*log) << "epoch " << epoch << "  train_loss " << train_loss << "  val_rmse "
                   << val.rmse_norm << " (" << val.rmse_db << " dB)  lr " << lr << std::endl;

        if (val.rmse_norm < result.best_val_rmse) {
            result.best_val_rmse = val.rmse_norm;
            result.best_epoch = epoch;
            result.best_model = model;
            epochs_since_improve = 0;
        } else {
            ++epochs_since_improve;
            if (epochs_since_improve >= config.lr_patience) {
                lr *= config.lr_decay_factor;
                epochs_since_improve = 0;
            }
        }
    }
    return result;
}

void write_curves_csv(const std::string& path, const std::vector<EpochStats>& curves) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("curves: cannot write '" + path + "'");
    out.precision(17);
    out << "epoch,train_loss,val_rmse_norm,val_rmse_db,lr\n";
    for (const EpochStats& e : curves)
        out << e.epoch << "," << e.train_loss << "," << e.val_rmse_norm << "," << e.val_rmse_db
            << "," << e.learning_rate << "\n";
    if (!out) throw std::runtime_error("curves: write failed for '" + path + "'");
}

}  // namespace gequnet
