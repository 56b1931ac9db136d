#include "focustrack/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "focustrack/errors.hpp"

namespace focustrack {

std::size_t crop_side(const MaybeBox& box, double factor) {
    if (!box || !box->valid()) throw PreconditionError("crop_side: box is absent or degenerate");
    if (!(factor > 0.0)) throw PreconditionError("crop_side: factor must be positive");
    const long double target = static_cast<long double>(factor) * static_cast<long double>(factor) *
                               static_cast<long double>(box->w) * static_cast<long double>(box->h);
    auto side = static_cast<long long>(std::ceil(factor * std::sqrt(box->w * box->h)));
    // Settle the boundary with squared comparisons: side is the least n with n^2 >= f^2 w h.
    while (side > 1 && static_cast<long double>(side - 1) * static_cast<long double>(side - 1) >= target) --side;
    while (static_cast<long double>(side) * static_cast<long double>(side) < target) ++side;
    return static_cast<std::size_t>(std::max<long long>(side, 1));
}

namespace {

double sample_zero_padded(const double* plane, std::size_t h, std::size_t w, double sx, double sy) {
    const double fx = std::floor(sx), fy = std::floor(sy);
    const auto x0 = static_cast<long>(fx), y0 = static_cast<long>(fy);
    const double ax = sx - fx, ay = sy - fy;
    auto at = [&](long y, long x) -> double {
        if (x < 0 || y < 0 || x >= static_cast<long>(w) || y >= static_cast<long>(h)) return 0.0;
        return plane[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)];
    };
    double v = 0.0;
    if ((1 - ax) * (1 - ay) != 0.0) v += (1 - ax) * (1 - ay) * at(y0, x0);
    if (ax * (1 - ay) != 0.0) v += ax * (1 - ay) * at(y0, x0 + 1);
    if ((1 - ax) * ay != 0.0) v += (1 - ax) * ay * at(y0 + 1, x0);
    if (ax * ay != 0.0) v += ax * ay * at(y0 + 1, x0 + 1);
    return v;
}

// Source offsets (window-local, clamped) for each output index.
std::vector<double> local_coords(std::size_t out, std::size_t side) {
    const double scale = static_cast<double>(out) / static_cast<double>(side);
    std::vector<double> c(out);
    for (std::size_t d = 0; d < out; ++d) {
        c[d] = std::clamp((static_cast<double>(d) + 0.5) / scale - 0.5, 0.0, static_cast<double>(side) - 1.0);
    }
    return c;
}

}  // namespace

Region extract_region(const Tensor& frame, Point center, std::size_t side, std::size_t out_side) {
    if (frame.empty()) throw PreconditionError("extract_region: empty frame");
    if (side < 1 || out_side < 1) throw PreconditionError("extract_region: side and out_side must be >= 1");
    if (frame.rank() != 2 && frame.rank() != 3) throw DimensionError("extract_region: frame must be [H x W] or [C x H x W]");
    const bool planar = frame.rank() == 3;
    const std::size_t ch = planar ? frame.dim(0) : 1;
    const std::size_t h = frame.dim(planar ? 1 : 0), w = frame.dim(planar ? 2 : 1);

    Region r;
    CropTransform& t = r.transform;
    t.center = center;
    t.side = side;
    t.out_side = out_side;
    t.scale = static_cast<double>(out_side) / static_cast<double>(side);
    t.pad_mask.assign(out_side * out_side, 0);

    const auto lc = local_coords(out_side, side);
    const double ox = t.origin_x(), oy = t.origin_y();
    r.patch = planar ? Tensor({ch, out_side, out_side}, frame.dtype()) : Tensor({out_side, out_side}, frame.dtype());
    for (std::size_t v = 0; v < out_side; ++v) {
        const double sy = oy + lc[v];
        const bool row_in = sy >= -0.5 && sy <= static_cast<double>(h) - 0.5;
        for (std::size_t u = 0; u < out_side; ++u) {
            const double sx = ox + lc[u];
            const bool in = row_in && sx >= -0.5 && sx <= static_cast<double>(w) - 0.5;
            t.pad_mask[v * out_side + u] = in ? 1 : 0;
            for (std::size_t c = 0; c < ch; ++c) {
                r.patch[(c * out_side + v) * out_side + u] =
                    sample_zero_padded(frame.data() + c * h * w, h, w, sx, sy);
            }
        }
    }
    r.patch.finalize("extract_region");
    return r;
}

MaybeBox to_crop(const MaybeBox& box, const CropTransform& t) {
    if (!box) return std::nullopt;
    if (!(t.scale > 0.0)) throw PreconditionError("to_crop: invalid transform");
    return BoundingBox{(box->cx - t.origin_x()) * t.scale, (box->cy - t.origin_y()) * t.scale, box->w * t.scale,
                       box->h * t.scale};
}

MaybeBox from_crop(const MaybeBox& box, const CropTransform& t) {
    if (!box) return std::nullopt;
    if (!(t.scale > 0.0)) throw PreconditionError("from_crop: invalid transform");
    return BoundingBox{box->cx / t.scale + t.origin_x(), box->cy / t.scale + t.origin_y(), box->w / t.scale,
                       box->h / t.scale};
}

Tensor hanning2d(std::size_t n) {
    if (n == 0) throw ParameterError("hanning2d: n must be >= 1");
    std::vector<double> w1(n, 1.0);
    if (n > 1) {
        for (std::size_t i = 0; i < n; ++i) {
            w1[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n - 1));
        }
        // Endpoints are exactly zero and the window exactly symmetric.
        for (std::size_t i = 0; i < n / 2; ++i) w1[n - 1 - i] = w1[i];
        w1.front() = w1.back() = 0.0;
    }
    Tensor out({n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) out(i, j) = w1[i] * w1[j];
    return out;
}

Tensor resize_bilinear(const Tensor& image, std::size_t out_h, std::size_t out_w) {
    require_rank(image, 2, "resize_bilinear");
    const std::size_t h = image.dim(0), w = image.dim(1);
    const auto cy = local_coords(out_h, h);
    const auto cx = local_coords(out_w, w);
    Tensor out({out_h, out_w}, image.dtype());
    for (std::size_t v = 0; v < out_h; ++v)
        for (std::size_t u = 0; u < out_w; ++u) out(v, u) = sample_zero_padded(image.data(), h, w, cx[u], cy[v]);
    out.finalize("resize_bilinear");
    return out;
}

}  // namespace focustrack
