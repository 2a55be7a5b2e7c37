#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "gequnet/tensor.hpp"

namespace gequnet {

enum class GroupKind { cyclic, dihedral };

// Finite planar symmetry group: rotations in steps of 360/n degrees, plus
// reflections for the dihedral kind.
struct GroupSpec {
    GroupKind kind = GroupKind::cyclic;
    int n = 1;

    int order() const { return kind == GroupKind::dihedral ? 2 * n : n; }
    bool operator==(const GroupSpec&) const = default;

    std::string name() const;                   // "c4", "d8", ...
    static GroupSpec parse(std::string_view);   // throws std::invalid_argument
};

// Element (r, m): reflect first when m is set, then rotate r steps.
// Identity is (0, false); m is always false for cyclic groups.
struct GroupElement {
    int r = 0;
    bool m = false;
    bool operator==(const GroupElement&) const = default;
};

struct GridPoint {
    int i = 0;
    int j = 0;
    bool operator==(const GridPoint&) const = default;
};

// Sparse resampling plan realizing one group element on a k x k stencil.
// Exact elements are pure index permutations; 45-degree rotations use
// bilinear taps. Targets whose source falls outside the stencil get no taps.
struct KernelTransform {
    struct Tap {
        int src = 0;
        double weight = 0.0;
    };
    int k = 0;
    bool exact = false;
    std::vector<int> offsets;  // size k*k + 1, CSR into taps
    std::vector<Tap> taps;

    template <typename T>
    void apply(const T* src, T* dst) const {
        const int cells = k * k;
        for (int t = 0; t < cells; ++t) {
            T acc = T(0);
            for (int a = offsets[t]; a < offsets[t + 1]; ++a)
                acc += static_cast<T>(taps[a].weight) * src[taps[a].src];
            dst[t] = acc;
        }
    }

    // Transpose: scatter target-side gradients back onto the sources.
    template <typename T>
    void apply_adjoint(const T* dst_grad, T* src_grad) const {
        const int cells = k * k;
        for (int t = 0; t < cells; ++t)
            for (int a = offsets[t]; a < offsets[t + 1]; ++a)
                src_grad[taps[a].src] += static_cast<T>(taps[a].weight) * dst_grad[t];
    }
};

// A group with its Cayley table, inverses, and cached element order.
// Immutable after construction; safe to share across threads.
class Group {
public:
    explicit Group(GroupSpec spec);  // throws for n not in {1, 2, 4, 8}

    const GroupSpec& spec() const { return spec_; }
    int order() const { return static_cast<int>(elements_.size()); }

    // Canonical order: rotations by r, then reflected elements by r.
    const std::vector<GroupElement>& elements() const { return elements_; }
    GroupElement element(int idx) const;
    int index_of(GroupElement g) const;  // throws for out-of-range elements

    GroupElement compose(GroupElement a, GroupElement b) const;
    GroupElement inverse(GroupElement g) const;
    int compose_idx(int a, int b) const { return compose_[idx_checked(a) * order() + idx_checked(b)]; }
    int inverse_idx(int a) const { return inverse_[idx_checked(a)]; }

    // True when the element's rotation angle is a multiple of 90 degrees.
    bool is_exact(GroupElement g) const;

    // Image of p under the element, on a k x k stencil (or grid of extent k).
    // Only defined for exact elements; throws otherwise.
    GridPoint act_on_point(GroupElement g, GridPoint p, int extent) const;

    // Left-action permutation: perm[i] = index_of(g ∘ elements()[i]).
    std::vector<int> fiber_permutation(GroupElement g) const;

    // Resampling plan for transforming k x k kernels by g (k odd).
    KernelTransform kernel_transform(GroupElement g, int k) const;

private:
    int idx_checked(int i) const;

    GroupSpec spec_;
    std::vector<GroupElement> elements_;
    std::vector<int> compose_;  // order x order, row-major
    std::vector<int> inverse_;
};

// Applies g to a k x k kernel tensor (odd k). 90-degree multiples are exact
// index permutations; 45-degree rotations interpolate bilinearly about the
// stencil center.
template <typename T>
TensorT<T> transform_kernel(const TensorT<T>& kernel, GroupElement g, const Group& group) {
    if (kernel.rank() != 2 || kernel.dim(0) != kernel.dim(1))
        throw std::invalid_argument("transform_kernel: kernel must be square [k,k]");
    const KernelTransform plan = group.kernel_transform(g, kernel.dim(0));
    TensorT<T> out(kernel.shape());
    plan.apply(kernel.data(), out.data());
    return out;
}

}  // namespace gequnet
