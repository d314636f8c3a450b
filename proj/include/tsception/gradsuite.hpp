#pragma once

// The full float64 finite-difference suite: every differentiable primitive
// (conv2d, avgpool2d, batchnorm2d in training mode, linear, relu,
// softmax-cross-entropy) plus a composed miniature model, checked against
// central differences. Used by the gradcheck command and the acceptance run.

#include <cstdint>
#include <string>

#include "tsception/gradcheck.hpp"

namespace tsception {

struct GradSuiteReport {
    double max_rel_err = 0.0;
    long coords_checked = 0;
    std::string worst;  // "component: tensor t coord i: analytic=... numeric=..."

    bool ok(double threshold = 1e-4) const { return max_rel_err < threshold; }
};

// Deterministic in the seed. inject_conv_fault routes the convolution check
// through an identity op with a deliberately wrong backward — the negative
// control that proves the suite can fail.
GradSuiteReport gradcheck_suite(std::uint64_t seed, bool inject_conv_fault = false);

}  // namespace tsception
