#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gequnet/layers.hpp"

namespace gequnet {

// Rational width multiplier so desk-scale configs round-trip exactly.
struct WidthScale {
    int num = 1;
    int den = 1;
    double value() const { return static_cast<double>(num) / den; }
    bool operator==(const WidthScale&) const = default;
    std::string str() const;
    static WidthScale parse(std::string_view);  // "1", "1/4", ...
};

struct ModelConfig {
    GroupSpec spec{GroupKind::cyclic, 4};
    bool with_cars = false;
    std::array<int, 5> encoder_fields{6, 50, 100, 100, 170};
    int bottleneck_fields = 170;
    std::array<int, 4> decoder_fields{100, 100, 50, 6};
    WidthScale width_scale{};
    std::uint64_t seed = 0;

    int input_channels() const { return with_cars ? 3 : 2; }
    int scaled(int width) const {
        const long long s = std::llround(static_cast<double>(width) * width_scale.value());
        return static_cast<int>(s < 1 ? 1 : s);
    }
};

struct LayerInfo {
    std::string name;
    std::int64_t params = 0;
};

template <typename T>
struct ModelTraceT {
    TensorT<T> input;
    GFeatureMapT<T> lift_out;                          // pre-activation
    std::vector<GFeatureMapT<T>> conv_in;              // per g-conv, canonical order
    std::vector<GFeatureMapT<T>> conv_out;             // per g-conv, pre-activation
    std::array<std::optional<MaxPool2Result<T>>, 5> pools;
    std::array<std::vector<int>, 5> pool_in_shape;
    std::array<bool, 4> dec_upsampled{};
    bool out_upsampled = false;
    std::array<int, 4> concat_split{};                 // fields in the decoder part
    GFeatureMapT<T> gpool_in;
    GroupPoolResult<T> gpool;
};

template <typename T>
struct ModelGradsT {
    std::vector<TensorT<T>> tensors;  // canonical order: (weights, bias) per layer

    void zero() {
        for (auto& t : tensors) t.fill(T(0));
    }
    std::vector<std::span<T>> views() {
        std::vector<std::span<T>> v;
        v.reserve(tensors.size());
        for (auto& t : tensors) v.emplace_back(t.data(), static_cast<std::size_t>(t.size()));
        return v;
    }
};

// Encoder-decoder regression network over a chosen symmetry group:
// five encoder blocks (two g-convs + pool), a three-conv bottleneck, four
// decoder blocks (upsample + skip concat + two g-convs), and an output stage
// (upsample + g-conv to one field + mean fiber pool, no activation).
template <typename T>
class ModelT {
public:
    static constexpr int kNumGConvs = 21;

    explicit ModelT(const ModelConfig& config);

    const ModelConfig& config() const { return config_; }
    const Group& group() const { return group_; }

    // Deterministic He-style initialization; biases start at zero.
    void init_weights(std::uint64_t seed);

    // x: [B, C, S, S] with C matching the config. S must keep every pooled
    // level even until it reaches 1 (any multiple of 32, or exactly 16).
    TensorT<T> forward(const TensorT<T>& x) const;
    TensorT<T> forward(const TensorT<T>& x, ModelTraceT<T>& trace) const;

    // Populates grads (canonical order) and returns the gradient w.r.t. x.
    TensorT<T> backward(const TensorT<T>& grad_output, const ModelTraceT<T>& trace,
                        ModelGradsT<T>& grads) const;

    ModelGradsT<T> make_grads() const;
    std::vector<std::span<T>> parameter_views();
    std::vector<std::span<const T>> parameter_views() const;
    std::int64_t param_count() const;
    std::vector<LayerInfo> layer_table() const;

    template <typename U>
    ModelT<U> cast() const {
        ModelT<U> out(config_);
        out.lift_.weights = lift_.weights.template cast<U>();
        out.lift_.bias = lift_.bias.template cast<U>();
        for (int i = 0; i < kNumGConvs; ++i) {
            out.gconvs_[static_cast<std::size_t>(i)].weights =
                gconvs_[static_cast<std::size_t>(i)].weights.template cast<U>();
            out.gconvs_[static_cast<std::size_t>(i)].bias =
                gconvs_[static_cast<std::size_t>(i)].bias.template cast<U>();
        }
        return out;
    }

    LiftingConvLayerT<T>& lift() { return lift_; }
    const LiftingConvLayerT<T>& lift() const { return lift_; }
    GConvLayerT<T>& gconv(int i) { return gconvs_.at(static_cast<std::size_t>(i)); }
    const GConvLayerT<T>& gconv(int i) const { return gconvs_.at(static_cast<std::size_t>(i)); }

    static std::string gconv_name(int i);

private:
    template <typename U>
    friend class ModelT;

    void validate_input(const TensorT<T>& x) const;

    ModelConfig config_;
    Group group_;
    LiftingConvLayerT<T> lift_;
    std::vector<GConvLayerT<T>> gconvs_;  // canonical order, kNumGConvs entries
};

using Model = ModelT<float>;
using Model64 = ModelT<double>;

// Analytic parameter count for a config, without allocating the model.
std::int64_t count_params(const ModelConfig& config);

// Checkpoint file: text header (key=value), layer blobs, trailing CRC-32.
void save_checkpoint(const std::string& path, const Model& model);
Model load_checkpoint(const std::string& path);

// --- implementation ---

namespace detail {

// g-conv wiring for the base architecture. e = scaled encoder fields,
// b = bottleneck, d = scaled decoder fields.
struct GConvPlan {
    int in_fields;
    int out_fields;
};

inline std::array<GConvPlan, 21> gconv_plans(const ModelConfig& c) {
    std::array<int, 5> e{};
    for (int i = 0; i < 5; ++i) e[static_cast<std::size_t>(i)] = c.scaled(c.encoder_fields[static_cast<std::size_t>(i)]);
    const int bf = c.scaled(c.bottleneck_fields);
    std::array<int, 4> d{};
    for (int i = 0; i < 4; ++i) d[static_cast<std::size_t>(i)] = c.scaled(c.decoder_fields[static_cast<std::size_t>(i)]);

    std::array<GConvPlan, 21> p{};
    int idx = 0;
    p[idx++] = {e[0], e[0]};  // encoder block 1, second conv (first is the lift)
    for (int blk = 1; blk < 5; ++blk) {
        p[idx++] = {e[blk - 1], e[blk]};
        p[idx++] = {e[blk], e[blk]};
    }
    for (int i = 0; i < 3; ++i) p[idx++] = {bf, bf};  // bottleneck
    const std::array<int, 4> skip{e[4], e[3], e[2], e[1]};
    int prev = bf;
    for (int blk = 0; blk < 4; ++blk) {
        p[idx++] = {prev + skip[static_cast<std::size_t>(blk)], d[static_cast<std::size_t>(blk)]};
        p[idx++] = {d[static_cast<std::size_t>(blk)], d[static_cast<std::size_t>(blk)]};
        prev = d[static_cast<std::size_t>(blk)];
    }
    p[idx++] = {d[3], 1};  // output conv
    return p;
}

}  // namespace detail

template <typename T>
ModelT<T>::ModelT(const ModelConfig& config) : config_(config), group_(config.spec) {
    for (int w : config.encoder_fields)
        if (w < 1) throw std::invalid_argument("model: encoder widths must be positive");
    for (int w : config.decoder_fields)
        if (w < 1) throw std::invalid_argument("model: decoder widths must be positive");
    if (config.bottleneck_fields < 1)
        throw std::invalid_argument("model: bottleneck width must be positive");
    if (config.width_scale.num < 1 || config.width_scale.den < 1)
        throw std::invalid_argument("model: width scale must be a positive rational");

    lift_ = make_lifting_conv<T>(config.spec, config.input_channels(),
                                 config.scaled(config.encoder_fields[0]));
    const auto plans = detail::gconv_plans(config);
    gconvs_.reserve(kNumGConvs);
    for (const auto& p : plans) gconvs_.push_back(make_gconv<T>(config.spec, p.in_fields, p.out_fields));
}

template <typename T>
std::string ModelT<T>::gconv_name(int i) {
    if (i == 0) return "enc1.conv2";
    if (i < 9) {
        const int blk = (i - 1) / 2 + 2;
        return "enc" + std::to_string(blk) + ((i - 1) % 2 == 0 ? ".conv1" : ".conv2");
    }
    if (i < 12) return "bottleneck.conv" + std::to_string(i - 8);
    if (i < 20) {
        const int blk = (i - 12) / 2 + 1;
        return "dec" + std::to_string(blk) + ((i - 12) % 2 == 0 ? ".conv1" : ".conv2");
    }
    return "output.conv";
}

template <typename T>
void ModelT<T>::init_weights(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    auto fill = [&](TensorT<T>& w, double scale) {
        for (std::int64_t i = 0; i < w.size(); ++i) w[i] = static_cast<T>(dist(rng) * scale);
    };
    const int k = lift_.ksize();
    fill(lift_.weights, std::sqrt(2.0 / (lift_.in_channels() * k * k)));
    lift_.bias.fill(T(0));
    for (auto& layer : gconvs_) {
        fill(layer.weights, std::sqrt(2.0 / (static_cast<double>(layer.in_fields()) *
                                             group_.order() * k * k)));
        layer.bias.fill(T(0));
    }
}

template <typename T>
void ModelT<T>::validate_input(const TensorT<T>& x) const {
    if (x.rank() != 4) throw std::invalid_argument("model: input must be [B,C,S,S]");
    if (x.dim(1) != config_.input_channels())
        throw std::invalid_argument("model: input has " + std::to_string(x.dim(1)) +
                                    " channels but the configuration expects " +
                                    std::to_string(config_.input_channels()) +
                                    (config_.with_cars ? " (with cars)" : " (without cars)"));
    if (x.dim(2) != x.dim(3)) throw std::invalid_argument("model: input must be square");
    int s = x.dim(2);
    for (int level = 0; level < 5; ++level) {
        if (s == 1) continue;
        if (s % 2 != 0)
            throw std::invalid_argument("model: input size " + std::to_string(x.dim(2)) +
                                        " cannot be pooled five times (use a multiple of 32, or 16)");
        s /= 2;
    }
}

template <typename T>
TensorT<T> ModelT<T>::forward(const TensorT<T>& x) const {
    ModelTraceT<T> trace;
    return forward(x, trace);
}

template <typename T>
TensorT<T> ModelT<T>::forward(const TensorT<T>& x, ModelTraceT<T>& trace) const {
    validate_input(x);
    trace.input = x;
    trace.conv_in.resize(kNumGConvs);
    trace.conv_out.resize(kNumGConvs);

    auto conv_relu = [&](int idx, GFeatureMapT<T> in) {
        trace.conv_in[static_cast<std::size_t>(idx)] = std::move(in);
        GFeatureMapT<T> out =
            gconv_forward(trace.conv_in[static_cast<std::size_t>(idx)],
                          gconvs_[static_cast<std::size_t>(idx)], group_);
        trace.conv_out[static_cast<std::size_t>(idx)] = out;
        return relu_g(out);
    };
    auto pool_if_possible = [&](int block, GFeatureMapT<T> a) {
        if (a.height() == 1) {
            trace.pools[static_cast<std::size_t>(block)].reset();
            return a;
        }
        trace.pool_in_shape[static_cast<std::size_t>(block)] = a.tensor.shape();
        auto pooled = maxpool_g(a);
        GFeatureMapT<T> out(pooled.output, a.spec);
        trace.pools[static_cast<std::size_t>(block)] = std::move(pooled);
        return out;
    };

    // encoder
    trace.lift_out = lift_forward(x, lift_, group_);
    GFeatureMapT<T> a = relu_g(trace.lift_out);
    a = conv_relu(0, std::move(a));
    std::array<GFeatureMapT<T>, 4> skips;  // pre-pool activations of blocks 2..5
    a = pool_if_possible(0, std::move(a));
    for (int blk = 1; blk < 5; ++blk) {
        a = conv_relu(2 * blk - 1, std::move(a));
        a = conv_relu(2 * blk, std::move(a));
        skips[static_cast<std::size_t>(blk - 1)] = a;
        a = pool_if_possible(blk, std::move(a));
    }

    // bottleneck
    for (int i = 9; i < 12; ++i) a = conv_relu(i, std::move(a));

    // decoder
    for (int blk = 0; blk < 4; ++blk) {
        const GFeatureMapT<T>& skip = skips[static_cast<std::size_t>(3 - blk)];
        if (a.height() < skip.height()) {
            a = upsample_g(a);
            trace.dec_upsampled[static_cast<std::size_t>(blk)] = true;
        } else {
            trace.dec_upsampled[static_cast<std::size_t>(blk)] = false;
        }
        if (a.height() != skip.height())
            throw std::runtime_error("model: decoder/skip spatial sizes disagree");
        trace.concat_split[static_cast<std::size_t>(blk)] = a.fields();
        a = conv_relu(12 + 2 * blk, concat_fields(a, skip));
        a = conv_relu(13 + 2 * blk, std::move(a));
    }

    // output stage
    if (a.height() < x.dim(2)) {
        a = upsample_g(a);
        trace.out_upsampled = true;
    } else {
        trace.out_upsampled = false;
    }
    if (a.height() != x.dim(2)) throw std::runtime_error("model: output size mismatch");
    trace.conv_in[20] = std::move(a);
    GFeatureMapT<T> pre = gconv_forward(trace.conv_in[20], gconvs_[20], group_);
    trace.conv_out[20] = pre;
    trace.gpool_in = std::move(pre);
    trace.gpool = group_pool(trace.gpool_in, GroupPoolMode::mean);
    return trace.gpool.output;
}

template <typename T>
ModelGradsT<T> ModelT<T>::make_grads() const {
    ModelGradsT<T> g;
    g.tensors.reserve(2 * (kNumGConvs + 1));
    g.tensors.emplace_back(lift_.weights.shape());
    g.tensors.emplace_back(lift_.bias.shape());
    for (const auto& layer : gconvs_) {
        g.tensors.emplace_back(layer.weights.shape());
        g.tensors.emplace_back(layer.bias.shape());
    }
    return g;
}

template <typename T>
TensorT<T> ModelT<T>::backward(const TensorT<T>& grad_output, const ModelTraceT<T>& trace,
                               ModelGradsT<T>& grads) const {
    auto add_into = [](TensorT<T>& dst, const TensorT<T>& src) {
        for (std::int64_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    };
    auto store = [&](int layer_idx, const LayerGrads<T>& lg) {
        add_into(grads.tensors[static_cast<std::size_t>(2 * (layer_idx + 1))], lg.grad_weights);
        add_into(grads.tensors[static_cast<std::size_t>(2 * (layer_idx + 1) + 1)], lg.grad_bias);
    };
    auto conv_relu_backward = [&](int idx, GFeatureMapT<T> grad) {
        // relu sits after the conv
        GFeatureMapT<T> g(relu_backward(trace.conv_out[static_cast<std::size_t>(idx)].tensor,
                                        grad.tensor),
                          grad.spec);
        LayerGrads<T> lg = gconv_backward(trace.conv_in[static_cast<std::size_t>(idx)],
                                          gconvs_[static_cast<std::size_t>(idx)], group_,
                                          GFeatureMapT<T>(std::move(g.tensor), g.spec));
        store(idx, lg);
        return GFeatureMapT<T>(std::move(lg.grad_input), grad.spec);
    };

    // output stage
    GFeatureMapT<T> g = group_pool_backward(trace.gpool, grad_output, trace.gpool_in,
                                            GroupPoolMode::mean);
    {
        LayerGrads<T> lg = gconv_backward(trace.conv_in[20], gconvs_[20], group_, g);
        store(20, lg);
        g = GFeatureMapT<T>(std::move(lg.grad_input), g.spec);
    }
    if (trace.out_upsampled)
        g = GFeatureMapT<T>(upsample_nearest2_backward(g.tensor), g.spec);

    // decoder, reversed; skip gradients flow back to the encoder blocks
    std::array<GFeatureMapT<T>, 4> skip_grad;
    for (int blk = 3; blk >= 0; --blk) {
        g = conv_relu_backward(13 + 2 * blk, std::move(g));
        g = conv_relu_backward(12 + 2 * blk, std::move(g));
        auto [g_dec, g_skip] = split_fields(g, trace.concat_split[static_cast<std::size_t>(blk)]);
        skip_grad[static_cast<std::size_t>(3 - blk)] = std::move(g_skip);
        if (trace.dec_upsampled[static_cast<std::size_t>(blk)])
            g = GFeatureMapT<T>(upsample_nearest2_backward(g_dec.tensor), g_dec.spec);
        else
            g = std::move(g_dec);
    }

    // bottleneck, reversed
    for (int i = 11; i >= 9; --i) g = conv_relu_backward(i, std::move(g));

    // encoder, reversed
    for (int blk = 4; blk >= 1; --blk) {
        if (trace.pools[static_cast<std::size_t>(blk)]) {
            g = GFeatureMapT<T>(
                maxpool2_backward(*trace.pools[static_cast<std::size_t>(blk)], g.tensor,
                                  trace.pool_in_shape[static_cast<std::size_t>(blk)]),
                g.spec);
        }
        add_into(g.tensor, skip_grad[static_cast<std::size_t>(blk - 1)].tensor);
        g = conv_relu_backward(2 * blk, std::move(g));
        g = conv_relu_backward(2 * blk - 1, std::move(g));
    }
    if (trace.pools[0])
        g = GFeatureMapT<T>(maxpool2_backward(*trace.pools[0], g.tensor, trace.pool_in_shape[0]),
                            g.spec);
    g = conv_relu_backward(0, std::move(g));

    // lifting conv + its relu
    GFeatureMapT<T> lg_in(relu_backward(trace.lift_out.tensor, g.tensor), g.spec);
    LayerGrads<T> lg = lift_backward(trace.input, lift_, group_, lg_in);
    add_into(grads.tensors[0], lg.grad_weights);
    add_into(grads.tensors[1], lg.grad_bias);
    return std::move(lg.grad_input);
}

template <typename T>
std::vector<std::span<T>> ModelT<T>::parameter_views() {
    std::vector<std::span<T>> v;
    v.reserve(2 * (kNumGConvs + 1));
    v.emplace_back(lift_.weights.data(), static_cast<std::size_t>(lift_.weights.size()));
    v.emplace_back(lift_.bias.data(), static_cast<std::size_t>(lift_.bias.size()));
    for (auto& layer : gconvs_) {
        v.emplace_back(layer.weights.data(), static_cast<std::size_t>(layer.weights.size()));
        v.emplace_back(layer.bias.data(), static_cast<std::size_t>(layer.bias.size()));
    }
    return v;
}

template <typename T>
std::vector<std::span<const T>> ModelT<T>::parameter_views() const {
    std::vector<std::span<const T>> v;
    v.reserve(2 * (kNumGConvs + 1));
    v.emplace_back(lift_.weights.data(), static_cast<std::size_t>(lift_.weights.size()));
    v.emplace_back(lift_.bias.data(), static_cast<std::size_t>(lift_.bias.size()));
    for (const auto& layer : gconvs_) {
        v.emplace_back(layer.weights.data(), static_cast<std::size_t>(layer.weights.size()));
        v.emplace_back(layer.bias.data(), static_cast<std::size_t>(layer.bias.size()));
    }
    return v;
}

template <typename T>
std::int64_t ModelT<T>::param_count() const {
    std::int64_t n = lift_.param_count();
    for (const auto& layer : gconvs_) n += layer.param_count();
    return n;
}

template <typename T>
std::vector<LayerInfo> ModelT<T>::layer_table() const {
    std::vector<LayerInfo> t;
    t.push_back({"enc1.lift", lift_.param_count()});
    for (int i = 0; i < kNumGConvs; ++i)
        t.push_back({gconv_name(i), gconvs_[static_cast<std::size_t>(i)].param_count()});
    return t;
}

}  // namespace gequnet
