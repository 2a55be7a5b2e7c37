#include "gequnet/group.hpp"

#include <cmath>
#include <stdexcept>

namespace gequnet {

namespace {

int mod(int a, int n) {
    int r = a % n;
    return r < 0 ? r + n : r;
}

// Offset maps about the stencil center.
std::pair<int, int> quarter_turn(int di, int dj) { return {dj, -di}; }
std::pair<int, int> mirror(int di, int dj) { return {di, -dj}; }

}  // namespace

std::string GroupSpec::name() const {
    return (kind == GroupKind::dihedral ? "d" : "c") + std::to_string(n);
}

GroupSpec GroupSpec::parse(std::string_view s) {
    if (s.size() < 2 || (s[0] != 'c' && s[0] != 'C' && s[0] != 'd' && s[0] != 'D'))
        throw std::invalid_argument("group: expected c<n> or d<n>, got '" + std::string(s) + "'");
    GroupSpec spec;
    spec.kind = (s[0] == 'd' || s[0] == 'D') ? GroupKind::dihedral : GroupKind::cyclic;
    int n = 0;
    for (std::size_t i = 1; i < s.size(); ++i) {
        if (s[i] < '0' || s[i] > '9')
            throw std::invalid_argument("group: bad order in '" + std::string(s) + "'");
        n = n * 10 + (s[i] - '0');
    }
    spec.n = n;
    return spec;
}

Group::Group(GroupSpec spec) : spec_(spec) {
    if (spec.n != 1 && spec.n != 2 && spec.n != 4 && spec.n != 8)
        throw std::invalid_argument("group: unsupported rotation order n=" + std::to_string(spec.n) +
                                    " (supported: 1, 2, 4, 8)");
    const bool dihedral = spec.kind == GroupKind::dihedral;
    elements_.reserve(static_cast<std::size_t>(spec.order()));
    for (int r = 0; r < spec.n; ++r) elements_.push_back({r, false});
    if (dihedral)
        for (int r = 0; r < spec.n; ++r) elements_.push_back({r, true});

    const int ord = order();
    compose_.resize(static_cast<std::size_t>(ord) * ord);
    inverse_.resize(static_cast<std::size_t>(ord));
    for (int a = 0; a < ord; ++a) {
        const GroupElement ga = elements_[static_cast<std::size_t>(a)];
        for (int b = 0; b < ord; ++b) {
            const GroupElement gb = elements_[static_cast<std::size_t>(b)];
            const GroupElement gc{mod(ga.r + (ga.m ? -gb.r : gb.r), spec.n),
                                  ga.m != gb.m};
            compose_[static_cast<std::size_t>(a) * ord + b] =
                (gc.m ? spec.n : 0) + gc.r;
        }
        inverse_[static_cast<std::size_t>(a)] =
            ga.m ? (spec.n + ga.r) : mod(-ga.r, spec.n);
    }
}

int Group::idx_checked(int i) const {
    if (i < 0 || i >= order())
        throw std::invalid_argument("group: element index out of range");
    return i;
}

GroupElement Group::element(int idx) const { return elements_[static_cast<std::size_t>(idx_checked(idx))]; }

int Group::index_of(GroupElement g) const {
    if (g.r < 0 || g.r >= spec_.n || (g.m && spec_.kind != GroupKind::dihedral))
        throw std::invalid_argument("group: element (r=" + std::to_string(g.r) +
                                    ", m=" + std::to_string(g.m) + ") not in " + spec_.name());
    return (g.m ? spec_.n : 0) + g.r;
}

GroupElement Group::compose(GroupElement a, GroupElement b) const {
    return elements_[static_cast<std::size_t>(compose_idx(index_of(a), index_of(b)))];
}

GroupElement Group::inverse(GroupElement g) const {
    return elements_[static_cast<std::size_t>(inverse_idx(index_of(g)))];
}

bool Group::is_exact(GroupElement g) const {
    index_of(g);
    return (4 * g.r) % spec_.n == 0;
}

GridPoint Group::act_on_point(GroupElement g, GridPoint p, int extent) const {
    if (!is_exact(g))
        throw std::invalid_argument("act_on_point: rotation of " + spec_.name() + " element r=" +
                                    std::to_string(g.r) +
                                    " is not a multiple of 90 degrees; use kernel_transform");
    if (p.i < 0 || p.i >= extent || p.j < 0 || p.j >= extent)
        throw std::invalid_argument("act_on_point: point outside stencil");
    // Work in doubled offsets so half-integer centers stay integral.
    int di = 2 * p.i - (extent - 1);
    int dj = 2 * p.j - (extent - 1);
    if (g.m) std::tie(di, dj) = mirror(di, dj);
    const int q = (spec_.n >= 4) ? (4 * g.r / spec_.n) : (g.r * 4 / spec_.n) % 4;
    for (int t = 0; t < q % 4; ++t) std::tie(di, dj) = quarter_turn(di, dj);
    return {(di + extent - 1) / 2, (dj + extent - 1) / 2};
}

std::vector<int> Group::fiber_permutation(GroupElement g) const {
    const int gi = index_of(g);
    std::vector<int> perm(static_cast<std::size_t>(order()));
    for (int i = 0; i < order(); ++i) perm[static_cast<std::size_t>(i)] = compose_idx(gi, i);
    return perm;
}

KernelTransform Group::kernel_transform(GroupElement g, int k) const {
    if (k < 1 || k % 2 == 0)
        throw std::invalid_argument("kernel_transform: stencil size must be odd");
    KernelTransform plan;
    plan.k = k;
    plan.exact = is_exact(g);
    plan.offsets.assign(static_cast<std::size_t>(k * k + 1), 0);

    if (plan.exact) {
        // dst[A(p)] = src[p]  <=>  dst[t] = src[A^{-1}(t)]
        const GroupElement ginv = inverse(g);
        for (int ti = 0; ti < k; ++ti)
            for (int tj = 0; tj < k; ++tj) {
                const GridPoint s = act_on_point(ginv, {ti, tj}, k);
                const int t = ti * k + tj;
                plan.taps.push_back({s.i * k + s.j, 1.0});
                plan.offsets[static_cast<std::size_t>(t) + 1] = static_cast<int>(plan.taps.size());
            }
        return plan;
    }

    // Interpolated path: splat each source cell onto P u, with
    // P = R(r * 360/n) ∘ mirror^m and bilinear hat weights. Splatting keeps a
    // center delta exactly fixed (the center maps to itself with weight 1).
    const double theta = 2.0 * M_PI * g.r / spec_.n;
    const double c = std::cos(theta), s = std::sin(theta);
    const double center = (k - 1) / 2.0;
    std::vector<std::vector<KernelTransform::Tap>> per_target(static_cast<std::size_t>(k * k));
    for (int si = 0; si < k; ++si) {
        for (int sj = 0; sj < k; ++sj) {
            double ui = si - center, uj = sj - center;
            if (g.m) uj = -uj;
            // R(theta) with the convention R(90): (di,dj) -> (dj,-di)
            const double ti = c * ui + s * uj + center;
            const double tj = -s * ui + c * uj + center;
            const int i0 = static_cast<int>(std::floor(ti));
            const int j0 = static_cast<int>(std::floor(tj));
            const double fi = ti - i0, fj = tj - j0;
            const double w[4] = {(1 - fi) * (1 - fj), (1 - fi) * fj, fi * (1 - fj), fi * fj};
            const int ii[4] = {i0, i0, i0 + 1, i0 + 1};
            const int jj[4] = {j0, j0 + 1, j0, j0 + 1};
            for (int a = 0; a < 4; ++a) {
                if (w[a] <= 1e-12) continue;
                if (ii[a] < 0 || ii[a] >= k || jj[a] < 0 || jj[a] >= k) continue;
                per_target[static_cast<std::size_t>(ii[a] * k + jj[a])].push_back(
                    {si * k + sj, w[a]});
            }
        }
    }
    for (int t = 0; t < k * k; ++t) {
        for (const auto& tap : per_target[static_cast<std::size_t>(t)]) plan.taps.push_back(tap);
        plan.offsets[static_cast<std::size_t>(t) + 1] = static_cast<int>(plan.taps.size());
    }
    return plan;
}

}  // namespace gequnet
