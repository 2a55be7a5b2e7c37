#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "gequnet/parallel.hpp"

namespace gequnet {

// Dense row-major tensor. float for training, double for gradient checking.
template <typename T>
class TensorT {
public:
    TensorT() = default;

    explicit TensorT(std::vector<int> shape) : shape_(std::move(shape)) {
        data_.assign(static_cast<std::size_t>(compute_size(shape_)), T(0));
    }

    TensorT(std::vector<int> shape, std::vector<T> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (compute_size(shape_) != static_cast<std::int64_t>(data_.size()))
            throw std::invalid_argument("tensor: data length does not match shape");
    }

    static TensorT full(std::vector<int> shape, T value) {
        TensorT t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), value);
        return t;
    }

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    template <class... Ix>
    T& at(Ix... ix) { return data_[static_cast<std::size_t>(offset_of(ix...))]; }
    template <class... Ix>
    const T& at(Ix... ix) const { return data_[static_cast<std::size_t>(offset_of(ix...))]; }

    // Row-major strides for the current shape.
    std::vector<std::int64_t> strides() const {
        std::vector<std::int64_t> s(shape_.size(), 1);
        for (int a = rank() - 2; a >= 0; --a)
            s[static_cast<std::size_t>(a)] =
                s[static_cast<std::size_t>(a + 1)] * shape_[static_cast<std::size_t>(a + 1)];
        return s;
    }

    // Same storage, new axis grouping. Element count must match.
    TensorT reshaped(std::vector<int> shape) const& {
        if (compute_size(shape) != size())
            throw std::invalid_argument("reshape: element count mismatch");
        return TensorT(std::move(shape), data_);
    }
    TensorT reshaped(std::vector<int> shape) && {
        if (compute_size(shape) != size())
            throw std::invalid_argument("reshape: element count mismatch");
        return TensorT(std::move(shape), std::move(data_));
    }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

    bool all_finite() const {
        for (const T& v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    template <typename U>
    TensorT<U> cast() const {
        std::vector<U> out(data_.size());
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return TensorT<U>(shape_, std::move(out));
    }

    bool same_shape(const TensorT& other) const { return shape_ == other.shape_; }

    static std::int64_t compute_size(const std::vector<int>& shape) {
        std::int64_t n = 1;
        for (int d : shape) {
            if (d < 0) throw std::invalid_argument("tensor: negative axis length");
            n *= d;
        }
        return n;
    }

private:
    template <class... Ix>
    std::int64_t offset_of(Ix... ix) const {
        const int idx[] = {static_cast<int>(ix)...};
        constexpr int m = sizeof...(Ix);
        std::int64_t off = 0;
        for (int a = 0; a < m; ++a) off = off * shape_[static_cast<std::size_t>(a)] + idx[a];
        return off;
    }

    std::vector<int> shape_;
    std::vector<T> data_;
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

namespace detail {

// in [C,H,W] -> col [C*k*k, HO*WO]; zero padding p on both spatial axes.
template <typename T>
void im2col(const T* in, int C, int H, int W, int k, int p, T* col) {
    const int HO = H + 2 * p - k + 1;
    const int WO = W + 2 * p - k + 1;
    const std::int64_t plane = static_cast<std::int64_t>(HO) * WO;
    for (int c = 0; c < C; ++c) {
        const T* src = in + static_cast<std::int64_t>(c) * H * W;
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                T* dst = col + (static_cast<std::int64_t>(c) * k * k + ki * k + kj) * plane;
                for (int y = 0; y < HO; ++y) {
                    const int sy = y + ki - p;
                    T* row = dst + static_cast<std::int64_t>(y) * WO;
                    if (sy < 0 || sy >= H) {
                        std::fill(row, row + WO, T(0));
                        continue;
                    }
                    const T* srow = src + static_cast<std::int64_t>(sy) * W;
                    for (int x = 0; x < WO; ++x) {
                        const int sx = x + kj - p;
                        row[x] = (sx >= 0 && sx < W) ? srow[sx] : T(0);
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatter col back into the input layout. Parallel over
// channels; within a channel the accumulation order is fixed.
template <typename T>
void col2im_accumulate(const T* col, int C, int H, int W, int k, int p, T* in) {
    const int HO = H + 2 * p - k + 1;
    const int WO = W + 2 * p - k + 1;
    const std::int64_t plane = static_cast<std::int64_t>(HO) * WO;
    parallel_for(C, [&](std::int64_t c) {
        T* dst = in + c * H * W;
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                const T* src = col + (c * k * k + ki * k + kj) * plane;
                for (int y = 0; y < HO; ++y) {
                    const int sy = y + ki - p;
                    if (sy < 0 || sy >= H) continue;
                    const T* row = src + static_cast<std::int64_t>(y) * WO;
                    T* drow = dst + static_cast<std::int64_t>(sy) * W;
                    for (int x = 0; x < WO; ++x) {
                        const int sx = x + kj - p;
                        if (sx >= 0 && sx < W) drow[sx] += row[x];
                    }
                }
            }
        }
    });
}

// C[M,N] += A[M,K] * B[K,N]. Each output row is produced by one worker with a
// fixed k-order, so the result does not depend on the thread count.
template <typename T>
void gemm_accumulate(const T* A, const T* B, T* C, int M, int K, int N) {
    const bool small = static_cast<std::int64_t>(M) * K * N < (1 << 16);
    auto row = [&](std::int64_t i) {
        T* crow = C + i * N;
        const T* arow = A + i * K;
        for (int kk = 0; kk < K; ++kk) {
            const T a = arow[kk];
            if (a == T(0)) continue;
            const T* brow = B + static_cast<std::int64_t>(kk) * N;
            for (int j = 0; j < N; ++j) crow[j] += a * brow[j];
        }
    };
    if (small) {
        for (int i = 0; i < M; ++i) row(i);
    } else {
        parallel_for(M, row);
    }
}

// Cache-friendly transpose: out[N,K] = in[K,N].
template <typename T>
void transpose(const T* in, int K, int N, T* out) {
    constexpr int B = 32;
    for (int k0 = 0; k0 < K; k0 += B)
        for (int n0 = 0; n0 < N; n0 += B) {
            const int k1 = std::min(K, k0 + B);
            const int n1 = std::min(N, n0 + B);
            for (int k = k0; k < k1; ++k)
                for (int n = n0; n < n1; ++n)
                    out[static_cast<std::int64_t>(n) * K + k] =
                        in[static_cast<std::int64_t>(k) * N + n];
        }
}

inline int conv_out_dim(int in, int k, int p) { return in + 2 * p - k + 1; }

// out [O,HO,WO] = correlate(in [C,H,W], kern [O,C,k,k]) with zero padding p.
template <typename T>
void conv2d_impl(const T* in, int C, int H, int W, const T* kern, int O, int k, int p, T* out) {
    const int HO = conv_out_dim(H, k, p);
    const int WO = conv_out_dim(W, k, p);
    const std::int64_t K = static_cast<std::int64_t>(C) * k * k;
    const std::int64_t N = static_cast<std::int64_t>(HO) * WO;
    std::vector<T> col(static_cast<std::size_t>(K * N));
    im2col(in, C, H, W, k, p, col.data());
    std::fill(out, out + static_cast<std::int64_t>(O) * N, T(0));
    gemm_accumulate(kern, col.data(), out, O, static_cast<int>(K), static_cast<int>(N));
}

// Gradients of sum(grad_out ⊙ conv2d(in, kern)) w.r.t. in and kern.
// grad_kern is accumulated into (callers zero it once per batch).
template <typename T>
void conv2d_backward_impl(const T* in, int C, int H, int W, const T* kern, int O, int k, int p,
                          const T* grad_out, T* grad_in, T* grad_kern) {
    const int HO = conv_out_dim(H, k, p);
    const int WO = conv_out_dim(W, k, p);
    const std::int64_t K = static_cast<std::int64_t>(C) * k * k;
    const std::int64_t N = static_cast<std::int64_t>(HO) * WO;

    std::vector<T> col(static_cast<std::size_t>(K * N));
    im2col(in, C, H, W, k, p, col.data());

    if (grad_kern) {
        // grad_kern[M,K] += grad_out[M,N] * col^T[N,K]
        std::vector<T> colT(static_cast<std::size_t>(N * K));
        transpose(col.data(), static_cast<int>(K), static_cast<int>(N), colT.data());
        parallel_for(O, [&](std::int64_t i) {
            T* gk = grad_kern + i * K;
            const T* go = grad_out + i * N;
            for (std::int64_t n = 0; n < N; ++n) {
                const T g = go[n];
                if (g == T(0)) continue;
                const T* crow = colT.data() + n * K;
                for (std::int64_t kk = 0; kk < K; ++kk) gk[kk] += g * crow[kk];
            }
        });
    }

    if (grad_in) {
        // D[K,N] = kern^T[K,M] * grad_out[M,N], then scatter through col2im.
        std::vector<T> D(static_cast<std::size_t>(K * N), T(0));
        parallel_for(K, [&](std::int64_t kk) {
            T* drow = D.data() + kk * N;
            for (int i = 0; i < O; ++i) {
                const T a = kern[static_cast<std::int64_t>(i) * K + kk];
                if (a == T(0)) continue;
                const T* go = grad_out + static_cast<std::int64_t>(i) * N;
                for (std::int64_t n = 0; n < N; ++n) drow[n] += a * go[n];
            }
        });
        std::fill(grad_in, grad_in + static_cast<std::int64_t>(C) * H * W, T(0));
        col2im_accumulate(D.data(), C, H, W, k, p, grad_in);
    }
}

template <typename T>
void check_conv_args(const TensorT<T>& input, const TensorT<T>& kernels, int rank_expected) {
    if (input.rank() != rank_expected)
        throw std::invalid_argument("conv2d: input rank must be " + std::to_string(rank_expected));
    if (kernels.rank() != 4) throw std::invalid_argument("conv2d: kernels must be [O,C,k,k]");
    const int k = kernels.dim(2);
    if (k != kernels.dim(3)) throw std::invalid_argument("conv2d: kernels must be square");
    if (k % 2 == 0) throw std::invalid_argument("conv2d: kernel size must be odd");
    const int cin = input.dim(rank_expected - 3);
    if (kernels.dim(1) != cin)
        throw std::invalid_argument("conv2d: kernel input channels (" + std::to_string(kernels.dim(1)) +
                                    ") do not match input channels (" + std::to_string(cin) + ")");
    if (input.dim(rank_expected - 2) < 1 || input.dim(rank_expected - 1) < 1)
        throw std::invalid_argument("conv2d: spatial dims must be >= 1");
}

}  // namespace detail

// Cross-correlation of [C,H,W] with [O,C,k,k] and zero padding.
// padding = (k-1)/2 preserves the spatial size.
template <typename T>
TensorT<T> conv2d(const TensorT<T>& input, const TensorT<T>& kernels, int padding) {
    detail::check_conv_args(input, kernels, 3);
    const int C = input.dim(0), H = input.dim(1), W = input.dim(2);
    const int O = kernels.dim(0), k = kernels.dim(2);
    const int HO = detail::conv_out_dim(H, k, padding);
    const int WO = detail::conv_out_dim(W, k, padding);
    if (HO < 1 || WO < 1) throw std::invalid_argument("conv2d: output would be empty");
    TensorT<T> out({O, HO, WO});
    detail::conv2d_impl(input.data(), C, H, W, kernels.data(), O, k, padding, out.data());
    return out;
}

// Batched variant over [B,C,H,W].
template <typename T>
TensorT<T> conv2d_batched(const TensorT<T>& input, const TensorT<T>& kernels, int padding) {
    detail::check_conv_args(input, kernels, 4);
    const int B = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    const int O = kernels.dim(0), k = kernels.dim(2);
    const int HO = detail::conv_out_dim(H, k, padding);
    const int WO = detail::conv_out_dim(W, k, padding);
    if (HO < 1 || WO < 1) throw std::invalid_argument("conv2d: output would be empty");
    TensorT<T> out({B, O, HO, WO});
    const std::int64_t in_sz = static_cast<std::int64_t>(C) * H * W;
    const std::int64_t out_sz = static_cast<std::int64_t>(O) * HO * WO;
    for (int b = 0; b < B; ++b)
        detail::conv2d_impl(input.data() + b * in_sz, C, H, W, kernels.data(), O, k, padding,
                            out.data() + b * out_sz);
    return out;
}

template <typename T>
struct ConvGrads {
    TensorT<T> grad_input;
    TensorT<T> grad_kernels;
};

template <typename T>
ConvGrads<T> conv2d_backward(const TensorT<T>& input, const TensorT<T>& kernels,
                             const TensorT<T>& grad_output, int padding) {
    detail::check_conv_args(input, kernels, 3);
    const int C = input.dim(0), H = input.dim(1), W = input.dim(2);
    const int O = kernels.dim(0), k = kernels.dim(2);
    const int HO = detail::conv_out_dim(H, k, padding);
    const int WO = detail::conv_out_dim(W, k, padding);
    if (grad_output.shape() != std::vector<int>{O, HO, WO})
        throw std::invalid_argument("conv2d_backward: grad_output shape mismatch");
    ConvGrads<T> g{TensorT<T>(input.shape()), TensorT<T>(kernels.shape())};
    detail::conv2d_backward_impl(input.data(), C, H, W, kernels.data(), O, k, padding,
                                 grad_output.data(), g.grad_input.data(), g.grad_kernels.data());
    return g;
}

template <typename T>
ConvGrads<T> conv2d_backward_batched(const TensorT<T>& input, const TensorT<T>& kernels,
                                     const TensorT<T>& grad_output, int padding) {
    detail::check_conv_args(input, kernels, 4);
    const int B = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    const int O = kernels.dim(0), k = kernels.dim(2);
    const int HO = detail::conv_out_dim(H, k, padding);
    const int WO = detail::conv_out_dim(W, k, padding);
    if (grad_output.shape() != std::vector<int>{B, O, HO, WO})
        throw std::invalid_argument("conv2d_backward: grad_output shape mismatch");
    ConvGrads<T> g{TensorT<T>(input.shape()), TensorT<T>(kernels.shape())};
    const std::int64_t in_sz = static_cast<std::int64_t>(C) * H * W;
    const std::int64_t out_sz = static_cast<std::int64_t>(O) * HO * WO;
    for (int b = 0; b < B; ++b)
        detail::conv2d_backward_impl(input.data() + b * in_sz, C, H, W, kernels.data(), O, k,
                                     padding, grad_output.data() + b * out_sz,
                                     g.grad_input.data() + b * in_sz, g.grad_kernels.data());
    return g;
}

template <typename T>
struct MaxPool2Result {
    TensorT<T> output;
    std::vector<std::int64_t> argmax;  // flat input index per output element
};

// Non-overlapping 2x2 max over the last two axes. H and W must be even.
template <typename T>
MaxPool2Result<T> maxpool2(const TensorT<T>& input) {
    if (input.rank() < 2) throw std::invalid_argument("maxpool2: rank must be >= 2");
    const int H = input.dim(input.rank() - 2);
    const int W = input.dim(input.rank() - 1);
    if (H % 2 != 0 || W % 2 != 0)
        throw std::invalid_argument("maxpool2: spatial dims must be even, got " +
                                    std::to_string(H) + "x" + std::to_string(W));
    std::vector<int> out_shape = input.shape();
    out_shape[out_shape.size() - 2] = H / 2;
    out_shape[out_shape.size() - 1] = W / 2;
    MaxPool2Result<T> res{TensorT<T>(out_shape), {}};
    res.argmax.resize(static_cast<std::size_t>(res.output.size()));
    const std::int64_t planes = input.size() / (static_cast<std::int64_t>(H) * W);
    const int HO = H / 2, WO = W / 2;
    for (std::int64_t pl = 0; pl < planes; ++pl) {
        const T* in = input.data() + pl * H * W;
        T* out = res.output.data() + pl * HO * WO;
        std::int64_t* am = res.argmax.data() + pl * HO * WO;
        for (int y = 0; y < HO; ++y) {
            for (int x = 0; x < WO; ++x) {
                std::int64_t best = static_cast<std::int64_t>(2 * y) * W + 2 * x;
                T bv = in[best];
                const std::int64_t cand[3] = {best + 1, best + W, best + W + 1};
                for (std::int64_t c : cand)
                    if (in[c] > bv) { bv = in[c]; best = c; }
                out[y * WO + x] = bv;
                am[y * WO + x] = pl * H * W + best;
            }
        }
    }
    return res;
}

template <typename T>
TensorT<T> maxpool2_backward(const MaxPool2Result<T>& fwd, const TensorT<T>& grad_output,
                             const std::vector<int>& input_shape) {
    if (!grad_output.same_shape(fwd.output))
        throw std::invalid_argument("maxpool2_backward: grad_output shape mismatch");
    TensorT<T> grad_in(input_shape);
    for (std::int64_t i = 0; i < grad_output.size(); ++i)
        grad_in[fwd.argmax[static_cast<std::size_t>(i)]] += grad_output[i];
    return grad_in;
}

// Each pixel becomes a 2x2 block.
template <typename T>
TensorT<T> upsample_nearest2(const TensorT<T>& input) {
    if (input.rank() < 2) throw std::invalid_argument("upsample_nearest2: rank must be >= 2");
    const int H = input.dim(input.rank() - 2);
    const int W = input.dim(input.rank() - 1);
    std::vector<int> out_shape = input.shape();
    out_shape[out_shape.size() - 2] = 2 * H;
    out_shape[out_shape.size() - 1] = 2 * W;
    TensorT<T> out(out_shape);
    const std::int64_t planes = input.size() / (static_cast<std::int64_t>(H) * W);
    for (std::int64_t pl = 0; pl < planes; ++pl) {
        const T* in = input.data() + pl * H * W;
        T* dst = out.data() + pl * 4 * H * W;
        for (int y = 0; y < H; ++y) {
            T* r0 = dst + static_cast<std::int64_t>(2 * y) * 2 * W;
            T* r1 = r0 + 2 * W;
            for (int x = 0; x < W; ++x) {
                const T v = in[y * W + x];
                r0[2 * x] = v; r0[2 * x + 1] = v;
                r1[2 * x] = v; r1[2 * x + 1] = v;
            }
        }
    }
    return out;
}

template <typename T>
TensorT<T> upsample_nearest2_backward(const TensorT<T>& grad_output) {
    if (grad_output.rank() < 2)
        throw std::invalid_argument("upsample_nearest2_backward: rank must be >= 2");
    const int H2 = grad_output.dim(grad_output.rank() - 2);
    const int W2 = grad_output.dim(grad_output.rank() - 1);
    if (H2 % 2 != 0 || W2 % 2 != 0)
        throw std::invalid_argument("upsample_nearest2_backward: dims must be even");
    std::vector<int> in_shape = grad_output.shape();
    in_shape[in_shape.size() - 2] = H2 / 2;
    in_shape[in_shape.size() - 1] = W2 / 2;
    TensorT<T> grad_in(in_shape);
    const int H = H2 / 2, W = W2 / 2;
    const std::int64_t planes = grad_output.size() / (static_cast<std::int64_t>(H2) * W2);
    for (std::int64_t pl = 0; pl < planes; ++pl) {
        const T* go = grad_output.data() + pl * H2 * W2;
        T* gi = grad_in.data() + pl * H * W;
        for (int y = 0; y < H; ++y) {
            const T* r0 = go + static_cast<std::int64_t>(2 * y) * W2;
            const T* r1 = r0 + W2;
            for (int x = 0; x < W; ++x)
                gi[y * W + x] = r0[2 * x] + r0[2 * x + 1] + r1[2 * x] + r1[2 * x + 1];
        }
    }
    return grad_in;
}

template <typename T>
TensorT<T> relu(const TensorT<T>& input) {
    TensorT<T> out(input.shape());
    for (std::int64_t i = 0; i < input.size(); ++i) out[i] = input[i] > T(0) ? input[i] : T(0);
    return out;
}

// Subgradient at exactly 0 is 0.
template <typename T>
TensorT<T> relu_backward(const TensorT<T>& input, const TensorT<T>& grad_output) {
    if (!input.same_shape(grad_output))
        throw std::invalid_argument("relu_backward: shape mismatch");
    TensorT<T> out(input.shape());
    for (std::int64_t i = 0; i < input.size(); ++i)
        out[i] = input[i] > T(0) ? grad_output[i] : T(0);
    return out;
}

// Quarter-turn rotation of the last two axes; convention (i,j) -> (j, k-1-i).
// Requires square spatial dims.
template <typename T>
TensorT<T> rot90(const TensorT<T>& input, int quarter_turns) {
    if (input.rank() < 2) throw std::invalid_argument("rot90: rank must be >= 2");
    const int H = input.dim(input.rank() - 2);
    const int W = input.dim(input.rank() - 1);
    if (H != W) throw std::invalid_argument("rot90: spatial dims must be square");
    int q = quarter_turns % 4;
    if (q < 0) q += 4;
    TensorT<T> cur = input;
    const std::int64_t planes = input.size() / (static_cast<std::int64_t>(H) * W);
    for (int t = 0; t < q; ++t) {
        TensorT<T> next(cur.shape());
        for (std::int64_t pl = 0; pl < planes; ++pl) {
            const T* in = cur.data() + pl * H * W;
            T* out = next.data() + pl * H * W;
            for (int i = 0; i < H; ++i)
                for (int j = 0; j < W; ++j)
                    out[static_cast<std::int64_t>(i) * W + j] =
                        in[static_cast<std::int64_t>(W - 1 - j) * W + i];
        }
        cur = std::move(next);
    }
    return cur;
}

// Mirror of the last axis: (i,j) -> (i, W-1-j).
template <typename T>
TensorT<T> flip_h(const TensorT<T>& input) {
    if (input.rank() < 2) throw std::invalid_argument("flip_h: rank must be >= 2");
    const int H = input.dim(input.rank() - 2);
    const int W = input.dim(input.rank() - 1);
    TensorT<T> out(input.shape());
    const std::int64_t planes = input.size() / (static_cast<std::int64_t>(H) * W);
    for (std::int64_t pl = 0; pl < planes; ++pl) {
        const T* in = input.data() + pl * H * W;
        T* o = out.data() + pl * H * W;
        for (int i = 0; i < H; ++i)
            for (int j = 0; j < W; ++j)
                o[static_cast<std::int64_t>(i) * W + j] =
                    in[static_cast<std::int64_t>(i) * W + (W - 1 - j)];
    }
    return out;
}

}  // namespace gequnet
