#include "focustrack/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "focustrack/errors.hpp"

namespace focustrack {

namespace {

// c[m x n] += a[m x k] * b[k x n], all row-major and contiguous.
void gemm_accumulate(const double* __restrict a, const double* __restrict b, double* __restrict c, std::size_t m,
                     std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = c + i * n;
        const double* ai = a + i * k;
        for (std::size_t t = 0; t < k; ++t) {
            const double s = ai[t];
            if (s == 0.0) continue;
            const double* bt = b + t * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += s * bt[j];
        }
    }
}

void require_matrix(const Tensor& t, const char* what) {
    if (t.rank() != 2) throw DimensionError(std::string(what) + ": expected a matrix, got " + shape_string(t.shape()));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul lhs");
    require_matrix(b, "matmul rhs");
    if (a.dim(1) != b.dim(0)) {
        throw DimensionError("matmul: inner dimensions differ " + shape_string(a.shape()) + " * " +
                             shape_string(b.shape()));
    }
    Tensor c({a.dim(0), b.dim(1)}, common_dtype(a.dtype(), b.dtype()));
    gemm_accumulate(a.data(), b.data(), c.data(), a.dim(0), a.dim(1), b.dim(1));
    c.finalize("matmul");
    return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul_tn lhs");
    require_matrix(b, "matmul_tn rhs");
    if (a.dim(0) != b.dim(0)) throw DimensionError("matmul_tn: leading dimensions differ");
    const std::size_t k = a.dim(0), m = a.dim(1), n = b.dim(1);
    Tensor c({m, n}, common_dtype(a.dtype(), b.dtype()));
    double* cp = c.data();
    const double* ap = a.data();
    const double* bp = b.data();
    for (std::size_t t = 0; t < k; ++t) {
        const double* bt = bp + t * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double s = ap[t * m + i];
            if (s == 0.0) continue;
            double* ci = cp + i * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += s * bt[j];
        }
    }
    c.finalize("matmul_tn");
    return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul_nt lhs");
    require_matrix(b, "matmul_nt rhs");
    if (a.dim(1) != b.dim(1)) throw DimensionError("matmul_nt: trailing dimensions differ");
    return matmul(a, transpose(b));
}

Tensor transpose(const Tensor& a) {
    require_matrix(a, "transpose");
    const std::size_t m = a.dim(0), n = a.dim(1);
    Tensor t({n, m}, a.dtype());
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) t(j, i) = a(i, j);
    return t;
}

Tensor softmax(const Tensor& x, std::size_t axis) {
    if (axis >= x.rank()) throw DimensionError("softmax: axis out of range");
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
    for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
    const std::size_t len = x.dim(axis);
    Tensor y(x.shape(), x.dtype());
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * len * inner + in;
            double mx = x[base];
            for (std::size_t i = 1; i < len; ++i) mx = std::max(mx, x[base + i * inner]);
            double total = 0.0;
            for (std::size_t i = 0; i < len; ++i) {
                const double e = std::exp(x[base + i * inner] - mx);
                y[base + i * inner] = e;
                total += e;
            }
            for (std::size_t i = 0; i < len; ++i) y[base + i * inner] /= total;
        }
    }
    y.finalize("softmax");
    return y;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    if (!(eps > 0.0)) throw ParameterError("layer_norm: eps must be positive");
    if (x.rank() == 0) throw DimensionError("layer_norm: scalar input");
    const std::size_t c = x.dim(x.rank() - 1);
    if (gamma.size() != c || beta.size() != c) throw DimensionError("layer_norm: gamma/beta extent mismatch");
    const std::size_t rows = x.size() / c;
    Tensor y(x.shape(), common_dtype(x.dtype(), gamma.dtype()));
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.data() + r * c;
        double mean = 0.0;
        for (std::size_t j = 0; j < c; ++j) mean += xr[j];
        mean /= static_cast<double>(c);
        double var = 0.0;
        for (std::size_t j = 0; j < c; ++j) var += (xr[j] - mean) * (xr[j] - mean);
        var /= static_cast<double>(c);
        const double rstd = 1.0 / std::sqrt(var + eps);
        double* yr = y.data() + r * c;
        for (std::size_t j = 0; j < c; ++j) yr[j] = (xr[j] - mean) * rstd * gamma[j] + beta[j];
    }
    y.finalize("layer_norm");
    return y;
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

namespace {
constexpr double kGeluC = 0.044715;
const double kSqrt2OverPi = std::sqrt(2.0 / std::numbers::pi);
}  // namespace

double gelu(double x) { return 0.5 * x * (1.0 + std::tanh(kSqrt2OverPi * (x + kGeluC * x * x * x))); }

double gelu_derivative(double x) {
    const double u = kSqrt2OverPi * (x + kGeluC * x * x * x);
    const double t = std::tanh(u);
    const double du = kSqrt2OverPi * (1.0 + 3.0 * kGeluC * x * x);
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

Tensor sigmoid(const Tensor& x) {
    Tensor y(x.shape(), x.dtype());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = sigmoid(x[i]);
    y.finalize("sigmoid");
    return y;
}

Tensor gelu(const Tensor& x) {
    Tensor y(x.shape(), x.dtype());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = gelu(x[i]);
    y.finalize("gelu");
    return y;
}

namespace {
template <typename F>
Tensor zip(const Tensor& a, const Tensor& b, const char* what, F f) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(what) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                             shape_string(b.shape()));
    }
    Tensor c(a.shape(), common_dtype(a.dtype(), b.dtype()));
    for (std::size_t i = 0; i < a.size(); ++i) c[i] = f(a[i], b[i]);
    c.finalize(what);
    return c;
}
}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return zip(a, b, "add", [](double x, double y) { return x + y; });
}
Tensor sub(const Tensor& a, const Tensor& b) {
    return zip(a, b, "sub", [](double x, double y) { return x - y; });
}
Tensor mul(const Tensor& a, const Tensor& b) {
    return zip(a, b, "mul", [](double x, double y) { return x * y; });
}

Tensor scale(const Tensor& a, double s) {
    Tensor c(a.shape(), a.dtype());
    for (std::size_t i = 0; i < a.size(); ++i) c[i] = a[i] * s;
    c.finalize("scale");
    return c;
}

double sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.values()) s += v;
    return s;
}

Tensor im2col3x3(const Tensor& x) {
    require_rank(x, 3, "im2col3x3");
    const std::size_t ch = x.dim(0), h = x.dim(1), w = x.dim(2);
    Tensor cols({h * w, ch * 9}, x.dtype());
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t xx = 0; xx < w; ++xx) {
            double* row = cols.data() + (y * w + xx) * ch * 9;
            for (std::size_t c = 0; c < ch; ++c) {
                for (int ky = 0; ky < 3; ++ky) {
                    const long sy = static_cast<long>(y) + ky - 1;
                    for (int kx = 0; kx < 3; ++kx) {
                        const long sx = static_cast<long>(xx) + kx - 1;
                        double v = 0.0;
                        if (sy >= 0 && sy < static_cast<long>(h) && sx >= 0 && sx < static_cast<long>(w)) {
                            v = x(c, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
                        }
                        row[c * 9 + static_cast<std::size_t>(ky * 3 + kx)] = v;
                    }
                }
            }
        }
    }
    return cols;
}

Tensor col2im3x3(const Tensor& cols, std::size_t ch, std::size_t h, std::size_t w) {
    require_shape(cols, {h * w, ch * 9}, "col2im3x3");
    Tensor x({ch, h, w}, cols.dtype());
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t xx = 0; xx < w; ++xx) {
            const double* row = cols.data() + (y * w + xx) * ch * 9;
            for (std::size_t c = 0; c < ch; ++c) {
                for (int ky = 0; ky < 3; ++ky) {
                    const long sy = static_cast<long>(y) + ky - 1;
                    if (sy < 0 || sy >= static_cast<long>(h)) continue;
                    for (int kx = 0; kx < 3; ++kx) {
                        const long sx = static_cast<long>(xx) + kx - 1;
                        if (sx < 0 || sx >= static_cast<long>(w)) continue;
                        x(c, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx)) +=
                            row[c * 9 + static_cast<std::size_t>(ky * 3 + kx)];
                    }
                }
            }
        }
    }
    x.finalize("col2im3x3");
    return x;
}

Tensor unfold_patches(const Tensor& image, std::size_t patch) {
    require_rank(image, 3, "unfold_patches");
    const std::size_t ch = image.dim(0), side = image.dim(1);
    if (image.dim(2) != side) throw DimensionError("unfold_patches: image must be square");
    if (patch == 0 || side % patch != 0) {
        throw ConfigError("unfold_patches: side " + std::to_string(side) + " not divisible by patch " +
                          std::to_string(patch));
    }
    const std::size_t g = side / patch;
    Tensor out({g * g, ch * patch * patch}, image.dtype());
    for (std::size_t gy = 0; gy < g; ++gy)
        for (std::size_t gx = 0; gx < g; ++gx) {
            double* row = out.data() + (gy * g + gx) * ch * patch * patch;
            for (std::size_t c = 0; c < ch; ++c)
                for (std::size_t py = 0; py < patch; ++py)
                    for (std::size_t px = 0; px < patch; ++px)
                        row[(c * patch + py) * patch + px] = image(c, gy * patch + py, gx * patch + px);
        }
    return out;
}

Tensor fold_patches(const Tensor& patches, std::size_t ch, std::size_t side, std::size_t patch) {
    const std::size_t g = side / patch;
    require_shape(patches, {g * g, ch * patch * patch}, "fold_patches");
    Tensor image({ch, side, side}, patches.dtype());
    for (std::size_t gy = 0; gy < g; ++gy)
        for (std::size_t gx = 0; gx < g; ++gx) {
            const double* row = patches.data() + (gy * g + gx) * ch * patch * patch;
            for (std::size_t c = 0; c < ch; ++c)
                for (std::size_t py = 0; py < patch; ++py)
                    for (std::size_t px = 0; px < patch; ++px)
                        image(c, gy * patch + py, gx * patch + px) = row[(c * patch + py) * patch + px];
        }
    return image;
}

}  // namespace focustrack
