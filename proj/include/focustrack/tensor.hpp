#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace focustrack {

using Shape = std::vector<std::size_t>;

// Storage precision. Values are always held as double; an f32 tensor has every
// element rounded to the nearest float after each kernel.
enum class DType { f32 = 0, f64 = 1 };

DType common_dtype(DType a, DType b);
std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, DType dtype = DType::f64);
    Tensor(Shape shape, std::vector<double> values, DType dtype = DType::f64);

    static Tensor zeros(Shape shape, DType dtype = DType::f64) { return Tensor(std::move(shape), dtype); }
    static Tensor full(Shape shape, double value, DType dtype = DType::f64);
    static Tensor scalar(double value, DType dtype = DType::f64) { return full({1}, value, dtype); }
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows, DType dtype = DType::f64);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }
    DType dtype() const { return dtype_; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& operator()(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
    double& operator()(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    double operator()(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }

    // Same data, new extents; the element count must match.
    Tensor reshaped(Shape shape) const;
    Tensor as_dtype(DType dtype) const;

    // Rounds to the storage precision and throws NumericError on NaN/Inf.
    void finalize(std::string_view where);
    void fill(double value);

private:
    Shape shape_;
    std::vector<double> data_;
    DType dtype_ = DType::f64;
};

void require_shape(const Tensor& t, const Shape& shape, std::string_view what);
void require_rank(const Tensor& t, std::size_t rank, std::string_view what);
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace focustrack
