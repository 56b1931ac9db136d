#include "focustrack/layers.hpp"

namespace focustrack {

void add_embedding(GradientTape& tape, const std::string& name, Shape shape, Rng& rng, DType dtype) {
    Tensor t(std::move(shape), dtype);
    for (auto& v : t.values()) v = rng.truncated_normal(kInitStd);
    t.finalize(name);
    tape.add(name, std::move(t));
}

void add_linear(GradientTape& tape, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng,
                DType dtype) {
    add_embedding(tape, prefix + ".w", {in, out}, rng, dtype);
    tape.add(prefix + ".b", Tensor({out}, dtype));
}

void add_layer_norm(GradientTape& tape, const std::string& prefix, std::size_t channels, DType dtype) {
    tape.add(prefix + ".w", Tensor::full({channels}, 1.0, dtype));
    tape.add(prefix + ".b", Tensor({channels}, dtype));
}

ad::Var apply_linear(ad::Binding& bind, const std::string& prefix, const ad::Var& x) {
    return ad::linear(x, bind(prefix + ".w"), bind(prefix + ".b"));
}

ad::Var apply_layer_norm(ad::Binding& bind, const std::string& prefix, const ad::Var& x) {
    return ad::layer_norm(x, bind(prefix + ".w"), bind(prefix + ".b"), kLayerNormEps);
}

}  // namespace focustrack
