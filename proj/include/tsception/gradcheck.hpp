#pragma once

// Central finite-difference gradient verification. Runs in float64: the loss
// function is re-evaluated with each checked coordinate perturbed by ±epsilon
// and the slope is compared against the analytic gradient from backward().
//
// The loss function must be deterministic in the parameter values — anything
// stochastic inside (e.g. dropout) has to reseed its own Rng on every call.

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "tsception/rng.hpp"
#include "tsception/tensor.hpp"

namespace tsception {

struct GradCheckReport {
    double max_rel_err = 0.0;
    long coords_checked = 0;
    std::string worst;  // human-readable location of the largest discrepancy

    bool ok(double threshold = 1e-4) const { return max_rel_err < threshold; }
};

// loss_fn: callable () -> Tensor<double> scalar, rebuilding the graph from the
// current values of `params` on every call.
// max_coords_per_tensor: 0 checks every coordinate; otherwise a deterministic
// random subset of that size is checked per tensor (for large models).
template <typename LossFn>
GradCheckReport gradient_check(LossFn&& loss_fn, const std::vector<Tensor<double>>& params,
                               double epsilon = 1e-5, long max_coords_per_tensor = 0,
                               std::uint64_t coord_seed = 0) {
    for (const auto& p : params) p.zero_grad();
    Tensor<double> loss = loss_fn();
    backward(loss);

    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (const auto& p : params)
        analytic.push_back(p.has_grad() ? p.node()->grad
                                        : std::vector<double>(p.size(), 0.0));

    GradCheckReport report;
    for (std::size_t t = 0; t < params.size(); ++t) {
        const Tensor<double>& p = params[t];
        std::vector<long> coords(p.size());
        std::iota(coords.begin(), coords.end(), 0L);
        if (max_coords_per_tensor > 0 && p.size() > max_coords_per_tensor) {
            Rng rng(mix_seed(coord_seed, static_cast<std::uint64_t>(t)));
            rng.shuffle(coords);
            coords.resize(max_coords_per_tensor);
        }

        double* data = p.node()->data.data();
        for (long i : coords) {
            const double saved = data[i];
            double f_plus, f_minus;
            {
                NoGradGuard no_grad;
                data[i] = saved + epsilon;
                f_plus = loss_fn().item();
                data[i] = saved - epsilon;
                f_minus = loss_fn().item();
            }
            data[i] = saved;
            const double numeric = (f_plus - f_minus) / (2.0 * epsilon);
            const double a = analytic[t][i];
            const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
            const double rel = std::abs(a - numeric) / denom;
            ++report.coords_checked;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst = "tensor " + std::to_string(t) + " coord " + std::to_string(i) +
                               ": analytic=" + std::to_string(a) +
                               " numeric=" + std::to_string(numeric);
            }
        }
    }
    return report;
}

}  // namespace tsception
