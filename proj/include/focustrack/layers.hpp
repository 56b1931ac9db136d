#pragma once

#include <cstddef>
#include <string>

#include "focustrack/autograd.hpp"
#include "focustrack/rng.hpp"

namespace focustrack {

constexpr double kInitStd = 0.02;
constexpr double kLayerNormEps = 1e-6;

// "<prefix>.w" [in x out] truncated-normal, "<prefix>.b" [out] zeros.
void add_linear(GradientTape& tape, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng,
                DType dtype);
// "<prefix>.w" ones, "<prefix>.b" zeros.
void add_layer_norm(GradientTape& tape, const std::string& prefix, std::size_t channels, DType dtype);
void add_embedding(GradientTape& tape, const std::string& name, Shape shape, Rng& rng, DType dtype);

ad::Var apply_linear(ad::Binding& bind, const std::string& prefix, const ad::Var& x);
ad::Var apply_layer_norm(ad::Binding& bind, const std::string& prefix, const ad::Var& x);

}  // namespace focustrack
