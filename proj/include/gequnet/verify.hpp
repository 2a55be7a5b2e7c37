#pragma once

#include <string>
#include <vector>

#include "gequnet/group.hpp"

namespace gequnet {

struct CheckResult {
    std::string name;
    bool pass = false;
    double max_err = 0.0;
    std::string detail;
};

struct VerifyOptions {
    bool full = false;               // adds the 64-bit finite-difference suite
    bool inject_fiber_fault = false; // test hook: corrupts the permutation the
                                     // equivariance checks compare against
    int model_size = 64;             // input size for the full-model check
};

// Exhaustive associativity/identity/inverse checks for one group.
std::vector<CheckResult> verify_group_axioms(GroupSpec spec);

// Kernel-transform identities: delta fixpoint, 90-degree composition,
// r90 order, energy bound.
std::vector<CheckResult> verify_kernel_transforms(GroupSpec spec);

// Lifting and g-conv layers commute with every exact group action.
std::vector<CheckResult> verify_layer_equivariance(GroupSpec spec, bool inject_fiber_fault = false);

// Full network commutes with the exact subgroup action at width_scale 1/4.
std::vector<CheckResult> verify_model_equivariance(GroupSpec spec, int input_size = 64);

// 64-bit finite-difference checks: each primitive's backward pass, each
// layer's backward pass, and the end-to-end loss gradient.
std::vector<CheckResult> verify_gradients(GroupSpec spec, bool full = false);

// Full-width parameter-count ratios across the six group variants.
std::vector<CheckResult> verify_param_ratios();

// Everything above for one group, in reporting order.
std::vector<CheckResult> run_verification(GroupSpec spec, const VerifyOptions& options);

}  // namespace gequnet
