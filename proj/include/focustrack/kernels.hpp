#pragma once

#include <cstddef>

#include "focustrack/tensor.hpp"

// Dense forward kernels on plain tensors. The autograd layer (autograd.hpp)
// reuses these for both its forward and backward passes.
namespace focustrack {

// [m x k] * [k x n]
Tensor matmul(const Tensor& a, const Tensor& b);
// a^T * b, a: [k x m], b: [k x n]
Tensor matmul_tn(const Tensor& a, const Tensor& b);
// a * b^T, a: [m x k], b: [n x k]
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Max-subtracted softmax along `axis`.
Tensor softmax(const Tensor& x, std::size_t axis);

// Normalizes over the last axis then applies gamma/beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);

Tensor sigmoid(const Tensor& x);
// tanh approximation
Tensor gelu(const Tensor& x);
double sigmoid(double x);
double gelu(double x);
double gelu_derivative(double x);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
double sum(const Tensor& a);

// 3x3, stride 1, zero padding 1. x: [C x H x W] -> [(H*W) x (C*9)], column
// index = c*9 + ky*3 + kx.
Tensor im2col3x3(const Tensor& x);
// Adjoint of im2col3x3.
Tensor col2im3x3(const Tensor& cols, std::size_t channels, std::size_t height, std::size_t width);

// Non-overlapping patch unfold. image: [ch x S x S] -> [(S/P)^2 x (ch*P*P)],
// patches row-major, patch vector ordered (c, py, px).
Tensor unfold_patches(const Tensor& image, std::size_t patch);
// Adjoint of unfold_patches.
Tensor fold_patches(const Tensor& patches, std::size_t channels, std::size_t side, std::size_t patch);

}  // namespace focustrack
