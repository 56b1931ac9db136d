#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include "focustrack/rng.hpp"
#include "focustrack/tensor.hpp"

namespace testutil {

inline focustrack::Tensor random_tensor(focustrack::Shape shape, focustrack::Rng& rng, double lo = -1.0,
                                        double hi = 1.0, focustrack::DType dtype = focustrack::DType::f64) {
    focustrack::Tensor t(std::move(shape), dtype);
    for (double& v : t.values()) v = rng.uniform(lo, hi);
    t.finalize("random_tensor");
    return t;
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / ("focustrack_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(1e-8, std::abs(a) + std::abs(b)); }

}  // namespace testutil
