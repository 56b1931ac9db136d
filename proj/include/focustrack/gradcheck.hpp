#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "focustrack/autograd.hpp"

namespace focustrack {

// Builds one or more scalar losses from parameters bound through `params`.
using GraphLoss = std::function<std::vector<ad::Var>(ad::Binding& params)>;

enum class Probe {
    random,   // uniformly drawn coordinates, every term compared at each
    largest,  // per term, the coordinates with the largest |analytic gradient|
};

struct GradCheckOptions {
    double eps = 1e-6;
    // Coordinates probed per parameter tensor (capped at its size); with
    // Probe::largest this is per term.
    std::size_t coords_per_tensor = 2;
    Probe probe = Probe::random;
    std::uint64_t seed = 0;
    // Restricts the probe to parameters accepted by this filter when set.
    std::function<bool(const std::string&)> filter;
};

struct GradCheckReport {
    // One entry per loss returned by the GraphLoss.
    std::vector<double> max_rel_err;
    std::vector<std::string> worst_param;
    std::size_t coordinates = 0;
    // (coordinate, term) pairs whose gradient is below the loss's floating-point resolution.
    std::size_t skipped = 0;
};

// Compares reverse-mode gradients with central differences
//   rel = |analytic - numeric| / max(1e-8, |analytic| + |numeric|)
// over sampled coordinates. The step starts at `eps` and grows per coordinate
// (to at most 1e-2) where roundoff would swamp a small gradient; enlarged
// steps are Richardson-extrapolated. `params` is perturbed in place and restored.
GradCheckReport grad_check(const GraphLoss& loss, GradientTape& params, const GradCheckOptions& options);

double grad_check(const std::function<ad::Var(ad::Binding&)>& loss, GradientTape& params, double eps);

}  // namespace focustrack
