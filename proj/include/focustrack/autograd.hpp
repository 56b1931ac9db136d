#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "focustrack/tensor.hpp"

namespace focustrack {

// Parameter registry with one gradient accumulator per parameter.
class GradientTape {
public:
    void add(const std::string& name, Tensor value);
    bool contains(const std::string& name) const { return params_.count(name) != 0; }

    const Tensor& param(const std::string& name) const;
    Tensor& param(const std::string& name);
    const Tensor& grad(const std::string& name) const;

    // Adds `g` into the accumulator of `name`; shapes must agree.
    void accumulate(const std::string& name, const Tensor& g);
    // Adds every accumulator of `other` into this tape.
    void accumulate(const GradientTape& other);
    void zero_grad();
    // Multiplies every accumulator by `s`.
    void scale_grads(double s);

    std::vector<std::string> names() const;
    const std::map<std::string, Tensor>& params() const { return params_; }
    std::size_t parameter_count() const;
    DType dtype() const;
    GradientTape as_dtype(DType dtype) const;

private:
    std::map<std::string, Tensor> params_;
    std::map<std::string, Tensor> grads_;
};

namespace ad {

struct Node {
    Tensor value;
    Tensor grad;  // allocated lazily, same shape as value
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward;

    Tensor& grad_buffer();
    void add_grad(const Tensor& g);
};

// Handle to a node of the dynamic computation graph.
class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    const Tensor& value() const { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    std::size_t dim(std::size_t axis) const { return node_->value.dim(axis); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    const std::shared_ptr<Node>& node() const { return node_; }
    // Gradient after backward(); zeros if nothing reached this node.
    Tensor grad() const;

private:
    std::shared_ptr<Node> node_;
};

Var constant(Tensor value);
Var leaf(Tensor value, bool requires_grad);

// Seeds d(root)/d(root) = 1 (root must hold one element) and propagates.
void backward(const Var& root);

// Creates one graph leaf per parameter on first use. Parameters rejected by
// `trainable` become constants, which also prunes their backward work.
class Binding {
public:
    using Filter = std::function<bool(const std::string&)>;

    explicit Binding(const GradientTape& tape, bool track_grads = false, Filter trainable = {});

    Var operator()(const std::string& name);
    bool tracking() const { return track_; }
    // Adds the gradients of every bound trainable parameter into `tape`.
    void accumulate_grads(GradientTape& tape) const;

private:
    const GradientTape& tape_;
    bool track_;
    Filter trainable_;
    std::map<std::string, Var> bound_;
};

// ---- differentiable ops --------------------------------------------------

Var matmul(const Var& a, const Var& b);
// a * b^T
Var matmul_nt(const Var& a, const Var& b);
Var transpose(const Var& a);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
// x: [N x C], row: C elements, broadcast over rows.
Var add_row(const Var& x, const Var& row);
// x * s where s holds a single element.
Var scale_by(const Var& x, const Var& s);
// Softmax over the last axis.
Var softmax_rows(const Var& x);
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps);
Var sigmoid(const Var& x);
Var gelu(const Var& x);
Var reshape(const Var& x, Shape shape);
Var slice_rows(const Var& x, std::size_t begin, std::size_t end);
Var slice_cols(const Var& x, std::size_t begin, std::size_t end);
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
Var sum_all(const Var& x);
Var mean_all(const Var& x);
// Picks flat-indexed elements into a 1-D result.
Var gather(const Var& x, const std::vector<std::size_t>& flat_indices);
// Mean of equally-shaped tensors.
Var mean_of(const std::vector<Var>& parts);
Var im2col3x3(const Var& x);
Var unfold_patches(const Var& image, std::size_t patch);
// Sum of scalar vars each weighted by the matching coefficient.
Var weighted_sum(const std::vector<Var>& scalars, const std::vector<double>& weights);

// Node with a hand-written backward. The closure reads n.grad and pushes into
// n.inputs[i] (same order as `inputs`); it only runs if an input needs a gradient.
Var custom(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward);

// y = x * w + b, x: [N x in], w: [in x out], b: out elements.
Var linear(const Var& x, const Var& w, const Var& b);

}  // namespace ad
}  // namespace focustrack
