#include "focustrack/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "focustrack/errors.hpp"

namespace focustrack {

DType common_dtype(DType a, DType b) {
    return (a == DType::f32 || b == DType::f32) ? DType::f32 : DType::f64;
}

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}

Tensor::Tensor(Shape shape, DType dtype) : shape_(std::move(shape)), dtype_(dtype) {
    for (auto e : shape_) {
        if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_string(shape_));
    }
    data_.assign(shape_numel(shape_), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> values, DType dtype)
    : shape_(std::move(shape)), data_(std::move(values)), dtype_(dtype) {
    for (auto e : shape_) {
        if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_string(shape_));
    }
    if (shape_numel(shape_) != data_.size()) {
        throw DimensionError("shape " + shape_string(shape_) + " does not match " + std::to_string(data_.size()) +
                             " values");
    }
    finalize("Tensor");
}

Tensor Tensor::full(Shape shape, double value, DType dtype) {
    Tensor t(std::move(shape), dtype);
    t.fill(value);
    return t;
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows, DType dtype) {
    const std::size_t m = rows.size();
    const std::size_t n = m ? rows.begin()->size() : 0;
    std::vector<double> v;
    v.reserve(m * n);
    for (const auto& r : rows) {
        if (r.size() != n) throw DimensionError("ragged matrix literal");
        v.insert(v.end(), r.begin(), r.end());
    }
    return Tensor({m, n}, std::move(v), dtype);
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != data_.size()) {
        throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    Tensor t = *this;
    t.shape_ = std::move(shape);
    return t;
}

Tensor Tensor::as_dtype(DType dtype) const {
    Tensor t = *this;
    t.dtype_ = dtype;
    t.finalize("as_dtype");
    return t;
}

void Tensor::finalize(std::string_view where) {
    if (dtype_ == DType::f32) {
        for (auto& v : data_) v = static_cast<double>(static_cast<float>(v));
    }
    for (double v : data_) {
        if (!std::isfinite(v)) throw NumericError("non-finite value produced by " + std::string(where));
    }
}

void Tensor::fill(double value) {
    std::fill(data_.begin(), data_.end(), value);
    if (dtype_ == DType::f32) finalize("fill");
}

void require_shape(const Tensor& t, const Shape& shape, std::string_view what) {
    if (t.shape() != shape) {
        throw DimensionError(std::string(what) + ": expected " + shape_string(shape) + ", got " +
                             shape_string(t.shape()));
    }
}

void require_rank(const Tensor& t, std::size_t rank, std::string_view what) {
    if (t.rank() != rank) {
        throw DimensionError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                             shape_string(t.shape()));
    }
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw DimensionError("max_abs_diff: shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace focustrack
