#include "focustrack/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "focustrack/errors.hpp"
#include "focustrack/kernels.hpp"

namespace focustrack {

// ---- GradientTape -------------------------------------------------------------

void GradientTape::add(const std::string& name, Tensor value) {
    if (params_.count(name)) throw ConfigError("duplicate parameter '" + name + "'");
    grads_.emplace(name, Tensor(value.shape(), value.dtype()));
    params_.emplace(name, std::move(value));
}

const Tensor& GradientTape::param(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return it->second;
}

Tensor& GradientTape::param(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return it->second;
}

const Tensor& GradientTape::grad(const std::string& name) const {
    auto it = grads_.find(name);
    if (it == grads_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return it->second;
}

void GradientTape::accumulate(const std::string& name, const Tensor& g) {
    auto it = grads_.find(name);
    if (it == grads_.end()) throw ConfigError("unknown parameter '" + name + "'");
    if (it->second.shape() != g.shape()) {
        throw DimensionError("gradient for '" + name + "' has shape " + shape_string(g.shape()) + ", parameter is " +
                             shape_string(it->second.shape()));
    }
    double* dst = it->second.data();
    const double* src = g.data();
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += src[i];
}

void GradientTape::accumulate(const GradientTape& other) {
    for (const auto& [name, g] : other.grads_) accumulate(name, g);
}

void GradientTape::zero_grad() {
    for (auto& [name, g] : grads_) g.fill(0.0);
}

void GradientTape::scale_grads(double s) {
    for (auto& [name, g] : grads_)
        for (auto& v : g.values()) v *= s;
}

std::vector<std::string> GradientTape::names() const {
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const auto& [name, t] : params_) out.push_back(name);
    return out;
}

std::size_t GradientTape::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : params_) n += t.size();
    return n;
}

DType GradientTape::dtype() const { return params_.empty() ? DType::f64 : params_.begin()->second.dtype(); }

GradientTape GradientTape::as_dtype(DType dtype) const {
    GradientTape out;
    for (const auto& [name, t] : params_) out.add(name, t.as_dtype(dtype));
    return out;
}

namespace ad {

// ---- graph core ------------------------------------------------------------------

Tensor& Node::grad_buffer() {
    if (grad.empty()) grad = Tensor(value.shape(), value.dtype());
    return grad;
}

void Node::add_grad(const Tensor& g) {
    if (g.shape() != value.shape()) {
        throw DimensionError("gradient shape " + shape_string(g.shape()) + " does not match value " +
                             shape_string(value.shape()));
    }
    if (grad.empty()) {
        grad = g;
        return;
    }
    double* dst = grad.data();
    const double* src = g.data();
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += src[i];
}

Tensor Var::grad() const {
    if (!node_) return {};
    if (node_->grad.empty()) return Tensor(node_->value.shape(), node_->value.dtype());
    return node_->grad;
}

Var constant(Tensor value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    return Var(std::move(n));
}

Var leaf(Tensor value, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return Var(std::move(n));
}

namespace {

using Backward = std::function<void(Node&)>;

// Builds a result node; the backward closure is only retained when some input
// needs a gradient.
Var make(Tensor value, std::vector<Var> inputs, Backward bw) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    bool rg = false;
    for (const auto& v : inputs) rg = rg || v.requires_grad();
    if (rg) {
        n->requires_grad = true;
        n->inputs.reserve(inputs.size());
        for (auto& v : inputs) n->inputs.push_back(v.node());
        n->backward = std::move(bw);
    }
    return Var(std::move(n));
}

void push(const std::shared_ptr<Node>& n, const Tensor& g) {
    if (n->requires_grad) n->add_grad(g);
}

}  // namespace

void backward(const Var& root) {
    if (!root.node()) throw PreconditionError("backward on an empty Var");
    if (root.value().size() != 1) throw DimensionError("backward root must be a single element");
    if (!root.requires_grad()) return;

    // Iterative post-order DFS gives a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
    seen.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node* child = node->inputs[next++].get();
            if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root.node()->grad_buffer().fill(1.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward && !n->grad.empty()) n->backward(*n);
    }
}

// ---- Binding ---------------------------------------------------------------------

Binding::Binding(const GradientTape& tape, bool track_grads, Filter trainable)
    : tape_(tape), track_(track_grads), trainable_(std::move(trainable)) {}

Var Binding::operator()(const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    const bool rg = track_ && (!trainable_ || trainable_(name));
    Var v = leaf(tape_.param(name), rg);
    bound_.emplace(name, v);
    return v;
}

void Binding::accumulate_grads(GradientTape& tape) const {
    for (const auto& [name, v] : bound_) {
        if (v.requires_grad() && !v.node()->grad.empty()) tape.accumulate(name, v.node()->grad);
    }
}

// ---- ops -------------------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
    return make(focustrack::matmul(a.value(), b.value()), {a, b}, [](Node& n) {
        const auto& A = n.inputs[0];
        const auto& B = n.inputs[1];
        if (A->requires_grad) A->add_grad(focustrack::matmul_nt(n.grad, B->value));
        if (B->requires_grad) B->add_grad(focustrack::matmul_tn(A->value, n.grad));
    });
}

Var matmul_nt(const Var& a, const Var& b) {
    return make(focustrack::matmul_nt(a.value(), b.value()), {a, b}, [](Node& n) {
        const auto& A = n.inputs[0];
        const auto& B = n.inputs[1];
        if (A->requires_grad) A->add_grad(focustrack::matmul(n.grad, B->value));
        if (B->requires_grad) B->add_grad(focustrack::matmul_tn(n.grad, A->value));
    });
}

Var transpose(const Var& a) {
    return make(focustrack::transpose(a.value()), {a},
                [](Node& n) { push(n.inputs[0], focustrack::transpose(n.grad)); });
}

Var add(const Var& a, const Var& b) {
    return make(focustrack::add(a.value(), b.value()), {a, b}, [](Node& n) {
        push(n.inputs[0], n.grad);
        push(n.inputs[1], n.grad);
    });
}

Var sub(const Var& a, const Var& b) {
    return make(focustrack::sub(a.value(), b.value()), {a, b}, [](Node& n) {
        push(n.inputs[0], n.grad);
        if (n.inputs[1]->requires_grad) n.inputs[1]->add_grad(focustrack::scale(n.grad, -1.0));
    });
}

Var mul(const Var& a, const Var& b) {
    return make(focustrack::mul(a.value(), b.value()), {a, b}, [](Node& n) {
        const auto& A = n.inputs[0];
        const auto& B = n.inputs[1];
        if (A->requires_grad) A->add_grad(focustrack::mul(n.grad, B->value));
        if (B->requires_grad) B->add_grad(focustrack::mul(n.grad, A->value));
    });
}

Var scale(const Var& a, double s) {
    return make(focustrack::scale(a.value(), s), {a},
                [s](Node& n) { push(n.inputs[0], focustrack::scale(n.grad, s)); });
}

Var add_row(const Var& x, const Var& row) {
    const Tensor& xv = x.value();
    const Tensor& rv = row.value();
    if (xv.rank() != 2 || rv.size() != xv.dim(1)) {
        throw DimensionError("add_row: " + shape_string(xv.shape()) + " + " + shape_string(rv.shape()));
    }
    const std::size_t rows = xv.dim(0), cols = xv.dim(1);
    Tensor y(xv.shape(), common_dtype(xv.dtype(), rv.dtype()));
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) y(i, j) = xv(i, j) + rv[j];
    y.finalize("add_row");
    return make(std::move(y), {x, row}, [rows, cols](Node& n) {
        push(n.inputs[0], n.grad);
        if (n.inputs[1]->requires_grad) {
            Tensor g(n.inputs[1]->value.shape(), n.grad.dtype());
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < cols; ++j) g[j] += n.grad(i, j);
            n.inputs[1]->add_grad(g);
        }
    });
}

Var scale_by(const Var& x, const Var& s) {
    if (s.value().size() != 1) throw DimensionError("scale_by: factor must be a single element");
    const double sv = s.value()[0];
    Tensor y = focustrack::scale(x.value(), sv);
    return make(std::move(y), {x, s}, [sv](Node& n) {
        const auto& X = n.inputs[0];
        const auto& S = n.inputs[1];
        if (X->requires_grad) X->add_grad(focustrack::scale(n.grad, sv));
        if (S->requires_grad) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n.grad.size(); ++i) acc += n.grad[i] * X->value[i];
            S->add_grad(Tensor(S->value.shape(), {acc}, n.grad.dtype()));
        }
    });
}

Var softmax_rows(const Var& x) {
    const std::size_t axis = x.value().rank() - 1;
    Tensor y = focustrack::softmax(x.value(), axis);
    const std::size_t len = x.value().dim(axis);
    return make(y, {x}, [y, len](Node& n) {
        if (!n.inputs[0]->requires_grad) return;
        Tensor g(y.shape(), n.grad.dtype());
        const std::size_t rows = y.size() / len;
        for (std::size_t r = 0; r < rows; ++r) {
            const double* yr = y.data() + r * len;
            const double* gr = n.grad.data() + r * len;
            double dot = 0.0;
            for (std::size_t j = 0; j < len; ++j) dot += yr[j] * gr[j];
            double* out = g.data() + r * len;
            for (std::size_t j = 0; j < len; ++j) out[j] = yr[j] * (gr[j] - dot);
        }
        g.finalize("softmax backward");
        n.inputs[0]->add_grad(g);
    });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
    if (!(eps > 0.0)) throw ParameterError("layer_norm: eps must be positive");
    const Tensor& xv = x.value();
    const std::size_t c = xv.dim(xv.rank() - 1);
    if (gamma.value().size() != c || beta.value().size() != c) {
        throw DimensionError("layer_norm: gamma/beta extent mismatch");
    }
    const std::size_t rows = xv.size() / c;
    Tensor xhat(xv.shape(), xv.dtype());
    std::vector<double> rstd(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = xv.data() + r * c;
        double mean = 0.0;
        for (std::size_t j = 0; j < c; ++j) mean += xr[j];
        mean /= static_cast<double>(c);
        double var = 0.0;
        for (std::size_t j = 0; j < c; ++j) var += (xr[j] - mean) * (xr[j] - mean);
        var /= static_cast<double>(c);
        rstd[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < c; ++j) xhat[r * c + j] = (xr[j] - mean) * rstd[r];
    }
    const Tensor& gv = gamma.value();
    const Tensor& bv = beta.value();
    Tensor y(xv.shape(), common_dtype(xv.dtype(), gv.dtype()));
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < c; ++j) y[r * c + j] = xhat[r * c + j] * gv[j] + bv[j];
    y.finalize("layer_norm");
    return make(std::move(y), {x, gamma, beta}, [xhat, rstd, rows, c](Node& n) {
        const auto& X = n.inputs[0];
        const auto& G = n.inputs[1];
        const auto& B = n.inputs[2];
        const Tensor& g = n.grad;
        if (G->requires_grad || B->requires_grad) {
            Tensor dg(G->value.shape(), g.dtype());
            Tensor db(B->value.shape(), g.dtype());
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t j = 0; j < c; ++j) {
                    dg[j] += g[r * c + j] * xhat[r * c + j];
                    db[j] += g[r * c + j];
                }
            if (G->requires_grad) G->add_grad(dg);
            if (B->requires_grad) B->add_grad(db);
        }
        if (X->requires_grad) {
            Tensor dx(X->value.shape(), g.dtype());
            const double inv_c = 1.0 / static_cast<double>(c);
            for (std::size_t r = 0; r < rows; ++r) {
                double m1 = 0.0, m2 = 0.0;
                for (std::size_t j = 0; j < c; ++j) {
                    const double dxh = g[r * c + j] * G->value[j];
                    m1 += dxh;
                    m2 += dxh * xhat[r * c + j];
                }
                m1 *= inv_c;
                m2 *= inv_c;
                for (std::size_t j = 0; j < c; ++j) {
                    const double dxh = g[r * c + j] * G->value[j];
                    dx[r * c + j] = rstd[r] * (dxh - m1 - xhat[r * c + j] * m2);
                }
            }
            dx.finalize("layer_norm backward");
            X->add_grad(dx);
        }
    });
}

Var sigmoid(const Var& x) {
    Tensor y = focustrack::sigmoid(x.value());
    return make(y, {x}, [y](Node& n) {
        if (!n.inputs[0]->requires_grad) return;
        Tensor g(y.shape(), n.grad.dtype());
        for (std::size_t i = 0; i < y.size(); ++i) g[i] = n.grad[i] * y[i] * (1.0 - y[i]);
        n.inputs[0]->add_grad(g);
    });
}

Var gelu(const Var& x) {
    return make(focustrack::gelu(x.value()), {x}, [](Node& n) {
        const auto& X = n.inputs[0];
        if (!X->requires_grad) return;
        Tensor g(X->value.shape(), n.grad.dtype());
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = n.grad[i] * gelu_derivative(X->value[i]);
        g.finalize("gelu backward");
        X->add_grad(g);
    });
}

Var reshape(const Var& x, Shape shape) {
    Shape original = x.shape();
    return make(x.value().reshaped(std::move(shape)), {x},
                [original](Node& n) { push(n.inputs[0], n.grad.reshaped(original)); });
}

Var slice_rows(const Var& x, std::size_t begin, std::size_t end) {
    const Tensor& xv = x.value();
    require_rank(xv, 2, "slice_rows");
    if (begin >= end || end > xv.dim(0)) throw DimensionError("slice_rows: bad range");
    const std::size_t cols = xv.dim(1);
    std::vector<double> v(xv.data() + begin * cols, xv.data() + end * cols);
    Tensor y({end - begin, cols}, std::move(v), xv.dtype());
    return make(std::move(y), {x}, [begin, cols](Node& n) {
        const auto& X = n.inputs[0];
        if (!X->requires_grad) return;
        Tensor& g = X->grad_buffer();
        for (std::size_t i = 0; i < n.grad.size(); ++i) g[begin * cols + i] += n.grad[i];
    });
}

Var slice_cols(const Var& x, std::size_t begin, std::size_t end) {
    const Tensor& xv = x.value();
    require_rank(xv, 2, "slice_cols");
    if (begin >= end || end > xv.dim(1)) throw DimensionError("slice_cols: bad range");
    const std::size_t rows = xv.dim(0), cols = xv.dim(1), w = end - begin;
    Tensor y({rows, w}, xv.dtype());
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < w; ++j) y(i, j) = xv(i, begin + j);
    return make(std::move(y), {x}, [begin, rows, cols, w](Node& n) {
        const auto& X = n.inputs[0];
        if (!X->requires_grad) return;
        Tensor& g = X->grad_buffer();
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < w; ++j) g[i * cols + begin + j] += n.grad(i, j);
    });
}

Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw DimensionError("concat_rows: no inputs");
    const std::size_t cols = parts[0].dim(1);
    std::size_t rows = 0;
    DType dt = parts[0].value().dtype();
    std::vector<std::size_t> offsets;
    for (const auto& p : parts) {
        require_rank(p.value(), 2, "concat_rows");
        if (p.dim(1) != cols) throw DimensionError("concat_rows: column mismatch");
        offsets.push_back(rows);
        rows += p.dim(0);
        dt = common_dtype(dt, p.value().dtype());
    }
    Tensor y({rows, cols}, dt);
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const Tensor& pv = parts[k].value();
        std::copy(pv.data(), pv.data() + pv.size(), y.data() + offsets[k] * cols);
    }
    return make(std::move(y), parts, [offsets, cols](Node& n) {
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
            const auto& in = n.inputs[k];
            if (!in->requires_grad) continue;
            Tensor& g = in->grad_buffer();
            const double* src = n.grad.data() + offsets[k] * cols;
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += src[i];
        }
    });
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols: no inputs");
    const std::size_t rows = parts[0].dim(0);
    std::size_t cols = 0;
    DType dt = parts[0].value().dtype();
    std::vector<std::size_t> offsets;
    for (const auto& p : parts) {
        require_rank(p.value(), 2, "concat_cols");
        if (p.dim(0) != rows) throw DimensionError("concat_cols: row mismatch");
        offsets.push_back(cols);
        cols += p.dim(1);
        dt = common_dtype(dt, p.value().dtype());
    }
    Tensor y({rows, cols}, dt);
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const Tensor& pv = parts[k].value();
        const std::size_t w = pv.dim(1);
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < w; ++j) y(i, offsets[k] + j) = pv(i, j);
    }
    return make(std::move(y), parts, [offsets, rows, cols](Node& n) {
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
            const auto& in = n.inputs[k];
            if (!in->requires_grad) continue;
            Tensor& g = in->grad_buffer();
            const std::size_t w = g.dim(1);
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < w; ++j) g(i, j) += n.grad[i * cols + offsets[k] + j];
        }
    });
}

Var sum_all(const Var& x) {
    Tensor y({1}, {focustrack::sum(x.value())}, x.value().dtype());
    return make(std::move(y), {x}, [](Node& n) {
        const auto& X = n.inputs[0];
        if (X->requires_grad) X->add_grad(Tensor::full(X->value.shape(), n.grad[0], n.grad.dtype()));
    });
}

Var mean_all(const Var& x) { return scale(sum_all(x), 1.0 / static_cast<double>(x.value().size())); }

Var gather(const Var& x, const std::vector<std::size_t>& idx) {
    const Tensor& xv = x.value();
    Tensor y({idx.size()}, xv.dtype());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= xv.size()) throw DimensionError("gather: index out of range");
        y[i] = xv[idx[i]];
    }
    return make(std::move(y), {x}, [idx](Node& n) {
        const auto& X = n.inputs[0];
        if (!X->requires_grad) return;
        Tensor& g = X->grad_buffer();
        for (std::size_t i = 0; i < idx.size(); ++i) g[idx[i]] += n.grad[i];
    });
}

Var mean_of(const std::vector<Var>& parts) {
    if (parts.empty()) throw DimensionError("mean_of: no inputs");
    Tensor acc = parts[0].value();
    for (std::size_t k = 1; k < parts.size(); ++k) acc = focustrack::add(acc, parts[k].value());
    const double w = 1.0 / static_cast<double>(parts.size());
    return make(focustrack::scale(acc, w), parts, [w](Node& n) {
        const Tensor g = focustrack::scale(n.grad, w);
        for (const auto& in : n.inputs) push(in, g);
    });
}

Var im2col3x3(const Var& x) {
    const Shape s = x.shape();
    return make(focustrack::im2col3x3(x.value()), {x}, [s](Node& n) {
        if (n.inputs[0]->requires_grad) n.inputs[0]->add_grad(col2im3x3(n.grad, s[0], s[1], s[2]));
    });
}

Var unfold_patches(const Var& image, std::size_t patch) {
    const Shape s = image.shape();
    return make(focustrack::unfold_patches(image.value(), patch), {image}, [s, patch](Node& n) {
        if (n.inputs[0]->requires_grad) n.inputs[0]->add_grad(fold_patches(n.grad, s[0], s[1], patch));
    });
}

Var weighted_sum(const std::vector<Var>& scalars, const std::vector<double>& weights) {
    if (scalars.size() != weights.size() || scalars.empty()) throw DimensionError("weighted_sum: size mismatch");
    double total = 0.0;
    DType dt = scalars[0].value().dtype();
    for (std::size_t i = 0; i < scalars.size(); ++i) {
        if (scalars[i].value().size() != 1) throw DimensionError("weighted_sum: non-scalar term");
        total += weights[i] * scalars[i].value()[0];
        dt = common_dtype(dt, scalars[i].value().dtype());
    }
    return make(Tensor({1}, {total}, dt), scalars, [weights](Node& n) {
        for (std::size_t i = 0; i < n.inputs.size(); ++i) {
            if (n.inputs[i]->requires_grad) {
                n.inputs[i]->add_grad(Tensor({1}, {weights[i] * n.grad[0]}, n.grad.dtype()));
            }
        }
    });
}

Var custom(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> bw) {
    return make(std::move(value), std::move(inputs), std::move(bw));
}

Var linear(const Var& x, const Var& w, const Var& b) { return add_row(matmul(x, w), b); }

}  // namespace ad
}  // namespace focustrack
