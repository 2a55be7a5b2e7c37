#pragma once

#include <cstdint>
#include <iosfwd>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "gequnet/group.hpp"
#include "gequnet/tensor.hpp"

namespace gequnet {

// Feature map with an explicit group-fiber axis: [batch, fields, |G|, H, W].
template <typename T>
struct GFeatureMapT {
    TensorT<T> tensor;
    GroupSpec spec;

    GFeatureMapT() = default;
    GFeatureMapT(TensorT<T> t, GroupSpec s) : tensor(std::move(t)), spec(s) {
        if (tensor.rank() != 5)
            throw std::invalid_argument("g-feature map must be [B,F,|G|,H,W]");
        if (tensor.dim(2) != spec.order())
            throw std::invalid_argument("g-feature map fiber axis (" + std::to_string(tensor.dim(2)) +
                                        ") does not match |" + spec.name() + "| = " +
                                        std::to_string(spec.order()));
    }

    int batch() const { return tensor.dim(0); }
    int fields() const { return tensor.dim(1); }
    int fibers() const { return tensor.dim(2); }
    int height() const { return tensor.dim(3); }
    int width() const { return tensor.dim(4); }
};

using GFeatureMap = GFeatureMapT<float>;

// First g-conv of a network: planar input, group-fiber output.
template <typename T>
struct LiftingConvLayerT {
    GroupSpec spec;
    TensorT<T> weights;  // [out_fields, in_channels, k, k]
    TensorT<T> bias;     // [out_fields], shared across fibers

    int in_channels() const { return weights.dim(1); }
    int out_fields() const { return weights.dim(0); }
    int ksize() const { return weights.dim(2); }
    std::int64_t param_count() const { return weights.size() + bias.size(); }
};

// Group convolution over group-fiber feature maps.
template <typename T>
struct GConvLayerT {
    GroupSpec spec;
    TensorT<T> weights;  // [out_fields, in_fields, |G|, k, k]
    TensorT<T> bias;     // [out_fields]

    int in_fields() const { return weights.dim(1); }
    int out_fields() const { return weights.dim(0); }
    int ksize() const { return weights.dim(3); }
    std::int64_t param_count() const { return weights.size() + bias.size(); }
};

template <typename T>
LiftingConvLayerT<T> make_lifting_conv(GroupSpec spec, int in_channels, int out_fields, int k = 3) {
    if (k % 2 == 0) throw std::invalid_argument("lifting conv: kernel size must be odd");
    return {spec, TensorT<T>({out_fields, in_channels, k, k}), TensorT<T>({out_fields})};
}

template <typename T>
GConvLayerT<T> make_gconv(GroupSpec spec, int in_fields, int out_fields, int k = 3) {
    if (k % 2 == 0) throw std::invalid_argument("g-conv: kernel size must be odd");
    return {spec, TensorT<T>({out_fields, in_fields, spec.order(), k, k}), TensorT<T>({out_fields})};
}

namespace detail {

template <typename T>
void add_fiber_bias(TensorT<T>& t5, const TensorT<T>& bias) {
    const int B = t5.dim(0), F = t5.dim(1);
    const std::int64_t per_field = t5.size() / (static_cast<std::int64_t>(B) * F);
    for (int b = 0; b < B; ++b)
        for (int f = 0; f < F; ++f) {
            T* p = t5.data() + (static_cast<std::int64_t>(b) * F + f) * per_field;
            const T bv = bias[f];
            for (std::int64_t i = 0; i < per_field; ++i) p[i] += bv;
        }
}

template <typename T>
TensorT<T> fiber_bias_grad(const TensorT<T>& grad5) {
    const int B = grad5.dim(0), F = grad5.dim(1);
    const std::int64_t per_field = grad5.size() / (static_cast<std::int64_t>(B) * F);
    TensorT<T> gb({F});
    for (int b = 0; b < B; ++b)
        for (int f = 0; f < F; ++f) {
            const T* p = grad5.data() + (static_cast<std::int64_t>(b) * F + f) * per_field;
            T acc = T(0);
            for (std::int64_t i = 0; i < per_field; ++i) acc += p[i];
            gb[f] += acc;
        }
    return gb;
}

inline std::vector<KernelTransform> kernel_transforms(const Group& group, int k) {
    std::vector<KernelTransform> plans;
    plans.reserve(static_cast<std::size_t>(group.order()));
    for (const GroupElement& g : group.elements()) plans.push_back(group.kernel_transform(g, k));
    return plans;
}

// Expanded lifting bank: bank[o*|G| + g][c] = g-transformed weights[o][c].
template <typename T>
TensorT<T> lifting_filter_bank(const LiftingConvLayerT<T>& layer, const Group& group) {
    const int G = group.order(), O = layer.out_fields(), C = layer.in_channels(), k = layer.ksize();
    const auto plans = kernel_transforms(group, k);
    TensorT<T> bank({O * G, C, k, k});
    const int cell = k * k;
    for (int o = 0; o < O; ++o)
        for (int g = 0; g < G; ++g)
            for (int c = 0; c < C; ++c)
                plans[static_cast<std::size_t>(g)].apply(
                    layer.weights.data() + (static_cast<std::int64_t>(o) * C + c) * cell,
                    bank.data() + ((static_cast<std::int64_t>(o) * G + g) * C + c) * cell);
    return bank;
}

// Expanded g-conv bank:
// bank[o*|G| + g][f*|G| + h] = g-transformed weights[o][f][g^{-1} ∘ h].
template <typename T>
TensorT<T> gconv_filter_bank(const GConvLayerT<T>& layer, const Group& group) {
    const int G = group.order(), O = layer.out_fields(), F = layer.in_fields(), k = layer.ksize();
    const auto plans = kernel_transforms(group, k);
    TensorT<T> bank({O * G, F * G, k, k});
    const int cell = k * k;
    for (int o = 0; o < O; ++o)
        for (int g = 0; g < G; ++g) {
            const int ginv = group.inverse_idx(g);
            for (int f = 0; f < F; ++f)
                for (int h = 0; h < G; ++h) {
                    const int src_fiber = group.compose_idx(ginv, h);
                    plans[static_cast<std::size_t>(g)].apply(
                        layer.weights.data() +
                            ((static_cast<std::int64_t>(o) * F + f) * G + src_fiber) * cell,
                        bank.data() +
                            ((static_cast<std::int64_t>(o) * G + g) * (F * G) + f * G + h) * cell);
                }
        }
    return bank;
}

// Transpose of gconv_filter_bank: accumulate bank gradients onto the weights.
template <typename T>
void gconv_bank_adjoint(const TensorT<T>& grad_bank, const GConvLayerT<T>& layer,
                        const Group& group, TensorT<T>& grad_weights) {
    const int G = group.order(), O = layer.out_fields(), F = layer.in_fields(), k = layer.ksize();
    const auto plans = kernel_transforms(group, k);
    const int cell = k * k;
    for (int o = 0; o < O; ++o)
        for (int g = 0; g < G; ++g) {
            const int ginv = group.inverse_idx(g);
            for (int f = 0; f < F; ++f)
                for (int h = 0; h < G; ++h) {
                    const int src_fiber = group.compose_idx(ginv, h);
                    plans[static_cast<std::size_t>(g)].apply_adjoint(
                        grad_bank.data() +
                            ((static_cast<std::int64_t>(o) * G + g) * (F * G) + f * G + h) * cell,
                        grad_weights.data() +
                            ((static_cast<std::int64_t>(o) * F + f) * G + src_fiber) * cell);
                }
        }
}

template <typename T>
void lifting_bank_adjoint(const TensorT<T>& grad_bank, const LiftingConvLayerT<T>& layer,
                          const Group& group, TensorT<T>& grad_weights) {
    const int G = group.order(), O = layer.out_fields(), C = layer.in_channels(), k = layer.ksize();
    const auto plans = kernel_transforms(group, k);
    const int cell = k * k;
    for (int o = 0; o < O; ++o)
        for (int g = 0; g < G; ++g)
            for (int c = 0; c < C; ++c)
                plans[static_cast<std::size_t>(g)].apply_adjoint(
                    grad_bank.data() + ((static_cast<std::int64_t>(o) * G + g) * C + c) * cell,
                    grad_weights.data() + (static_cast<std::int64_t>(o) * C + c) * cell);
}

}  // namespace detail

// Lifts a planar [B,C,H,W] image to a group-fiber map: fiber g holds the
// correlation with the g-transformed kernel.
template <typename T>
GFeatureMapT<T> lift_forward(const TensorT<T>& x, const LiftingConvLayerT<T>& layer,
                             const Group& group) {
    if (x.rank() != 4) throw std::invalid_argument("lift_forward: input must be [B,C,H,W]");
    if (x.dim(1) != layer.in_channels())
        throw std::invalid_argument("lift_forward: input has " + std::to_string(x.dim(1)) +
                                    " channels, layer expects " + std::to_string(layer.in_channels()));
    if (x.dim(2) != x.dim(3))
        throw std::invalid_argument("lift_forward: input spatial dims must be square");
    if (group.spec() != layer.spec) throw std::invalid_argument("lift_forward: group mismatch");

    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int G = group.order(), O = layer.out_fields(), k = layer.ksize();
    const int p = (k - 1) / 2;
    const TensorT<T> bank = detail::lifting_filter_bank(layer, group);
    TensorT<T> out({B, O, G, H, W});
    const std::int64_t in_sz = static_cast<std::int64_t>(C) * H * W;
    const std::int64_t out_sz = static_cast<std::int64_t>(O) * G * H * W;
    for (int b = 0; b < B; ++b)
        detail::conv2d_impl(x.data() + b * in_sz, C, H, W, bank.data(), O * G, k, p,
                            out.data() + b * out_sz);
    detail::add_fiber_bias(out, layer.bias);
    return GFeatureMapT<T>(std::move(out), layer.spec);
}

template <typename T>
struct LayerGrads {
    TensorT<T> grad_input;  // planar for lifting, 5-axis for g-conv
    TensorT<T> grad_weights;
    TensorT<T> grad_bias;
};

template <typename T>
LayerGrads<T> lift_backward(const TensorT<T>& x, const LiftingConvLayerT<T>& layer,
                            const Group& group, const GFeatureMapT<T>& grad_output) {
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int G = group.order(), O = layer.out_fields(), k = layer.ksize();
    const int p = (k - 1) / 2;
    if (grad_output.tensor.shape() != std::vector<int>{B, O, G, H, W})
        throw std::invalid_argument("lift_backward: grad_output shape mismatch");
    const TensorT<T> bank = detail::lifting_filter_bank(layer, group);
    TensorT<T> grad_in(x.shape());
    TensorT<T> grad_bank(bank.shape());
    const std::int64_t in_sz = static_cast<std::int64_t>(C) * H * W;
    const std::int64_t out_sz = static_cast<std::int64_t>(O) * G * H * W;
    for (int b = 0; b < B; ++b)
        detail::conv2d_backward_impl(x.data() + b * in_sz, C, H, W, bank.data(), O * G, k, p,
                                     grad_output.tensor.data() + b * out_sz,
                                     grad_in.data() + b * in_sz, grad_bank.data());
    LayerGrads<T> g{std::move(grad_in), TensorT<T>(layer.weights.shape()),
                    detail::fiber_bias_grad(grad_output.tensor)};
    detail::lifting_bank_adjoint(grad_bank, layer, group, g.grad_weights);
    return g;
}

// Group convolution: output fiber g sums, over input fibers h, the
// correlation of f[h] with the g-transformed kernel slice g^{-1}∘h.
template <typename T>
GFeatureMapT<T> gconv_forward(const GFeatureMapT<T>& f, const GConvLayerT<T>& layer,
                              const Group& group) {
    if (f.spec != layer.spec || group.spec() != layer.spec)
        throw std::invalid_argument("gconv_forward: group mismatch (input " + f.spec.name() +
                                    ", layer " + layer.spec.name() + ")");
    if (f.fields() != layer.in_fields())
        throw std::invalid_argument("gconv_forward: input has " + std::to_string(f.fields()) +
                                    " fields, layer expects " + std::to_string(layer.in_fields()));
    const int B = f.batch(), F = f.fields(), G = f.fibers(), H = f.height(), W = f.width();
    const int O = layer.out_fields(), k = layer.ksize();
    const int p = (k - 1) / 2;
    const TensorT<T> bank = detail::gconv_filter_bank(layer, group);
    TensorT<T> out({B, O, G, H, W});
    const std::int64_t in_sz = static_cast<std::int64_t>(F) * G * H * W;
    const std::int64_t out_sz = static_cast<std::int64_t>(O) * G * H * W;
    for (int b = 0; b < B; ++b)
        detail::conv2d_impl(f.tensor.data() + b * in_sz, F * G, H, W, bank.data(), O * G, k, p,
                            out.data() + b * out_sz);
    detail::add_fiber_bias(out, layer.bias);
    return GFeatureMapT<T>(std::move(out), layer.spec);
}

template <typename T>
LayerGrads<T> gconv_backward(const GFeatureMapT<T>& f, const GConvLayerT<T>& layer,
                             const Group& group, const GFeatureMapT<T>& grad_output) {
    const int B = f.batch(), F = f.fields(), G = f.fibers(), H = f.height(), W = f.width();
    const int O = layer.out_fields(), k = layer.ksize();
    const int p = (k - 1) / 2;
    if (grad_output.tensor.shape() != std::vector<int>{B, O, G, H, W})
        throw std::invalid_argument("gconv_backward: grad_output shape mismatch");
    const TensorT<T> bank = detail::gconv_filter_bank(layer, group);
    TensorT<T> grad_in(f.tensor.shape());
    TensorT<T> grad_bank(bank.shape());
    const std::int64_t in_sz = static_cast<std::int64_t>(F) * G * H * W;
    const std::int64_t out_sz = static_cast<std::int64_t>(O) * G * H * W;
    for (int b = 0; b < B; ++b)
        detail::conv2d_backward_impl(f.tensor.data() + b * in_sz, F * G, H, W, bank.data(), O * G,
                                     k, p, grad_output.tensor.data() + b * out_sz,
                                     grad_in.data() + b * in_sz, grad_bank.data());
    LayerGrads<T> g{std::move(grad_in), TensorT<T>(layer.weights.shape()),
                    detail::fiber_bias_grad(grad_output.tensor)};
    detail::gconv_bank_adjoint(grad_bank, layer, group, g.grad_weights);
    return g;
}

enum class GroupPoolMode { max, mean };

template <typename T>
struct GroupPoolResult {
    TensorT<T> output;                 // [B, F, H, W]
    std::vector<std::int32_t> argmax;  // winning fiber per output element (max mode)
};

// Reduces the fiber axis; the result transforms as a scalar field.
template <typename T>
GroupPoolResult<T> group_pool(const GFeatureMapT<T>& f, GroupPoolMode mode) {
    const int B = f.batch(), F = f.fields(), G = f.fibers(), H = f.height(), W = f.width();
    GroupPoolResult<T> res{TensorT<T>({B, F, H, W}), {}};
    const std::int64_t plane = static_cast<std::int64_t>(H) * W;
    if (mode == GroupPoolMode::max) res.argmax.resize(static_cast<std::size_t>(res.output.size()));
    for (std::int64_t bf = 0; bf < static_cast<std::int64_t>(B) * F; ++bf) {
        const T* in = f.tensor.data() + bf * G * plane;
        T* out = res.output.data() + bf * plane;
        if (mode == GroupPoolMode::mean) {
            const T inv = T(1) / static_cast<T>(G);
            for (std::int64_t i = 0; i < plane; ++i) {
                T acc = T(0);
                for (int h = 0; h < G; ++h) acc += in[h * plane + i];
                out[i] = acc * inv;
            }
        } else {
            std::int32_t* am = res.argmax.data() + bf * plane;
            for (std::int64_t i = 0; i < plane; ++i) {
                T best = in[i];
                std::int32_t bh = 0;
                for (int h = 1; h < G; ++h)
                    if (in[h * plane + i] > best) { best = in[h * plane + i]; bh = h; }
                out[i] = best;
                am[i] = bh;
            }
        }
    }
    return res;
}

template <typename T>
GFeatureMapT<T> group_pool_backward(const GroupPoolResult<T>& fwd, const TensorT<T>& grad_output,
                                    const GFeatureMapT<T>& input, GroupPoolMode mode) {
    if (!grad_output.same_shape(fwd.output))
        throw std::invalid_argument("group_pool_backward: grad_output shape mismatch");
    const int B = input.batch(), F = input.fields(), G = input.fibers();
    const std::int64_t plane = static_cast<std::int64_t>(input.height()) * input.width();
    GFeatureMapT<T> grad(TensorT<T>(input.tensor.shape()), input.spec);
    for (std::int64_t bf = 0; bf < static_cast<std::int64_t>(B) * F; ++bf) {
        const T* go = grad_output.data() + bf * plane;
        T* gi = grad.tensor.data() + bf * G * plane;
        if (mode == GroupPoolMode::mean) {
            const T inv = T(1) / static_cast<T>(G);
            for (std::int64_t i = 0; i < plane; ++i) {
                const T v = go[i] * inv;
                for (int h = 0; h < G; ++h) gi[h * plane + i] = v;
            }
        } else {
            const std::int32_t* am = fwd.argmax.data() + bf * plane;
            for (std::int64_t i = 0; i < plane; ++i) gi[am[i] * plane + i] = go[i];
        }
    }
    return grad;
}

template <typename T>
GFeatureMapT<T> relu_g(const GFeatureMapT<T>& f) {
    return GFeatureMapT<T>(relu(f.tensor), f.spec);
}

template <typename T>
MaxPool2Result<T> maxpool_g(const GFeatureMapT<T>& f) {
    return maxpool2(f.tensor);
}

template <typename T>
GFeatureMapT<T> upsample_g(const GFeatureMapT<T>& f) {
    return GFeatureMapT<T>(upsample_nearest2(f.tensor), f.spec);
}

// Stacks fields: result has f1.fields + f2.fields fields.
template <typename T>
GFeatureMapT<T> concat_fields(const GFeatureMapT<T>& f1, const GFeatureMapT<T>& f2) {
    if (f1.spec != f2.spec)
        throw std::invalid_argument("concat_fields: group mismatch (" + f1.spec.name() + " vs " +
                                    f2.spec.name() + ")");
    if (f1.batch() != f2.batch() || f1.height() != f2.height() || f1.width() != f2.width())
        throw std::invalid_argument("concat_fields: batch/spatial dims mismatch");
    const int B = f1.batch(), F1 = f1.fields(), F2 = f2.fields();
    TensorT<T> out({B, F1 + F2, f1.fibers(), f1.height(), f1.width()});
    const std::int64_t sz1 = f1.tensor.size() / B;
    const std::int64_t sz2 = f2.tensor.size() / B;
    for (int b = 0; b < B; ++b) {
        std::copy(f1.tensor.data() + b * sz1, f1.tensor.data() + (b + 1) * sz1,
                  out.data() + b * (sz1 + sz2));
        std::copy(f2.tensor.data() + b * sz2, f2.tensor.data() + (b + 1) * sz2,
                  out.data() + b * (sz1 + sz2) + sz1);
    }
    return GFeatureMapT<T>(std::move(out), f1.spec);
}

// Backward of concat_fields: splits the gradient at field index f1_fields.
template <typename T>
std::pair<GFeatureMapT<T>, GFeatureMapT<T>> split_fields(const GFeatureMapT<T>& g, int f1_fields) {
    const int B = g.batch(), F = g.fields();
    if (f1_fields < 0 || f1_fields > F) throw std::invalid_argument("split_fields: bad split point");
    const int F2 = F - f1_fields;
    TensorT<T> a({B, f1_fields, g.fibers(), g.height(), g.width()});
    TensorT<T> b({B, F2, g.fibers(), g.height(), g.width()});
    const std::int64_t sz1 = a.size() / B;
    const std::int64_t sz2 = b.size() / B;
    for (int i = 0; i < B; ++i) {
        std::copy(g.tensor.data() + i * (sz1 + sz2), g.tensor.data() + i * (sz1 + sz2) + sz1,
                  a.data() + i * sz1);
        std::copy(g.tensor.data() + i * (sz1 + sz2) + sz1, g.tensor.data() + (i + 1) * (sz1 + sz2),
                  b.data() + i * sz2);
    }
    return {GFeatureMapT<T>(std::move(a), g.spec), GFeatureMapT<T>(std::move(b), g.spec)};
}

// --- group actions on data (used by tests and the verification suite) ---

// Index permutation realizing an exact element on an extent x extent grid:
// src_of[t] = flat source index for target t.
std::vector<int> spatial_index_map(const Group& group, GroupElement g, int extent);

// Transforms the last two axes of a square-spatial tensor by an exact element.
template <typename T>
TensorT<T> apply_spatial_action(const TensorT<T>& t, const Group& group, GroupElement g) {
    const int H = t.dim(t.rank() - 2), W = t.dim(t.rank() - 1);
    if (H != W) throw std::invalid_argument("apply_spatial_action: spatial dims must be square");
    const std::vector<int> src_of = spatial_index_map(group, g, H);
    TensorT<T> out(t.shape());
    const std::int64_t planes = t.size() / (static_cast<std::int64_t>(H) * W);
    for (std::int64_t pl = 0; pl < planes; ++pl) {
        const T* in = t.data() + pl * H * W;
        T* o = out.data() + pl * H * W;
        for (int i = 0; i < H * W; ++i) o[i] = in[src_of[static_cast<std::size_t>(i)]];
    }
    return out;
}

// Full regular action on a g-feature map: spatial transform plus the fiber
// permutation h -> g∘h.
template <typename T>
GFeatureMapT<T> apply_group_action(const GFeatureMapT<T>& f, const Group& group, GroupElement g) {
    if (group.spec() != f.spec) throw std::invalid_argument("apply_group_action: group mismatch");
    const std::vector<int> perm = group.fiber_permutation(g);
    const int B = f.batch(), F = f.fields(), G = f.fibers();
    const std::int64_t plane = static_cast<std::int64_t>(f.height()) * f.width();
    const std::vector<int> src_of = spatial_index_map(group, g, f.height());
    GFeatureMapT<T> out(TensorT<T>(f.tensor.shape()), f.spec);
    for (std::int64_t bf = 0; bf < static_cast<std::int64_t>(B) * F; ++bf)
        for (int h = 0; h < G; ++h) {
            const T* in = f.tensor.data() + (bf * G + h) * plane;
            T* o = out.tensor.data() + (bf * G + perm[static_cast<std::size_t>(h)]) * plane;
            for (std::int64_t i = 0; i < plane; ++i) o[i] = in[src_of[static_cast<std::size_t>(i)]];
        }
    return out;
}

// --- portable layer weight blobs (32-bit little-endian payload) ---

namespace wire {
void write_u8(std::ostream&, std::uint8_t);
void write_u16(std::ostream&, std::uint16_t);
void write_u32(std::ostream&, std::uint32_t);
void write_f32(std::ostream&, float);
std::uint8_t read_u8(std::istream&);
std::uint16_t read_u16(std::istream&);
std::uint32_t read_u32(std::istream&);
float read_f32(std::istream&);
}  // namespace wire

inline constexpr std::uint8_t kLayerTypeLifting = 0;
inline constexpr std::uint8_t kLayerTypeGConv = 1;

template <typename T>
void save_layer(std::ostream& os, const LiftingConvLayerT<T>& layer) {
    wire::write_u8(os, kLayerTypeLifting);
    wire::write_u8(os, layer.spec.kind == GroupKind::dihedral ? 1 : 0);
    wire::write_u16(os, static_cast<std::uint16_t>(layer.spec.n));
    wire::write_u32(os, static_cast<std::uint32_t>(layer.in_channels()));
    wire::write_u32(os, static_cast<std::uint32_t>(layer.out_fields()));
    wire::write_u16(os, static_cast<std::uint16_t>(layer.ksize()));
    for (std::int64_t i = 0; i < layer.weights.size(); ++i)
        wire::write_f32(os, static_cast<float>(layer.weights[i]));
    for (std::int64_t i = 0; i < layer.bias.size(); ++i)
        wire::write_f32(os, static_cast<float>(layer.bias[i]));
}

template <typename T>
void save_layer(std::ostream& os, const GConvLayerT<T>& layer) {
    wire::write_u8(os, kLayerTypeGConv);
    wire::write_u8(os, layer.spec.kind == GroupKind::dihedral ? 1 : 0);
    wire::write_u16(os, static_cast<std::uint16_t>(layer.spec.n));
    wire::write_u32(os, static_cast<std::uint32_t>(layer.in_fields()));
    wire::write_u32(os, static_cast<std::uint32_t>(layer.out_fields()));
    wire::write_u16(os, static_cast<std::uint16_t>(layer.ksize()));
    for (std::int64_t i = 0; i < layer.weights.size(); ++i)
        wire::write_f32(os, static_cast<float>(layer.weights[i]));
    for (std::int64_t i = 0; i < layer.bias.size(); ++i)
        wire::write_f32(os, static_cast<float>(layer.bias[i]));
}

template <typename T>
void load_layer(std::istream& is, LiftingConvLayerT<T>& layer) {
    if (wire::read_u8(is) != kLayerTypeLifting)
        throw std::runtime_error("layer blob: expected a lifting conv record");
    const GroupSpec spec{wire::read_u8(is) ? GroupKind::dihedral : GroupKind::cyclic,
                         static_cast<int>(wire::read_u16(is))};
    const int in = static_cast<int>(wire::read_u32(is));
    const int out = static_cast<int>(wire::read_u32(is));
    const int k = static_cast<int>(wire::read_u16(is));
    if (spec != layer.spec || in != layer.in_channels() || out != layer.out_fields() ||
        k != layer.ksize())
        throw std::runtime_error("layer blob: header does not match the expected lifting conv");
    for (std::int64_t i = 0; i < layer.weights.size(); ++i)
        layer.weights[i] = static_cast<T>(wire::read_f32(is));
    for (std::int64_t i = 0; i < layer.bias.size(); ++i)
        layer.bias[i] = static_cast<T>(wire::read_f32(is));
}

template <typename T>
void load_layer(std::istream& is, GConvLayerT<T>& layer) {
    if (wire::read_u8(is) != kLayerTypeGConv)
        throw std::runtime_error("layer blob: expected a g-conv record");
    const GroupSpec spec{wire::read_u8(is) ? GroupKind::dihedral : GroupKind::cyclic,
                         static_cast<int>(wire::read_u16(is))};
    const int in = static_cast<int>(wire::read_u32(is));
    const int out = static_cast<int>(wire::read_u32(is));
    const int k = static_cast<int>(wire::read_u16(is));
    if (spec != layer.spec || in != layer.in_fields() || out != layer.out_fields() ||
        k != layer.ksize())
        throw std::runtime_error("layer blob: header does not match the expected g-conv");
    for (std::int64_t i = 0; i < layer.weights.size(); ++i)
        layer.weights[i] = static_cast<T>(wire::read_f32(is));
    for (std::int64_t i = 0; i < layer.bias.size(); ++i)
        layer.bias[i] = static_cast<T>(wire::read_f32(is));
}

}  // namespace gequnet
