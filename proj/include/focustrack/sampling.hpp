#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "focustrack/tensor.hpp"

namespace focustrack {

// Axis-aligned box, center convention, pixel units.
struct BoundingBox {
    double cx = 0.0;
    double cy = 0.0;
    double w = 0.0;
    double h = 0.0;

    bool valid() const { return w > 0.0 && h > 0.0; }
    double area() const { return w * h; }
    double x1() const { return cx - 0.5 * w; }
    double y1() const { return cy - 0.5 * h; }
    double x2() const { return cx + 0.5 * w; }
    double y2() const { return cy + 0.5 * h; }

    static BoundingBox from_corner(double x, double y, double w, double h) {
        return {x + 0.5 * w, y + 0.5 * h, w, h};
    }
    bool operator==(const BoundingBox&) const = default;
};

// std::nullopt is the "absent" box.
using MaybeBox = std::optional<BoundingBox>;

struct Point {
    double x = 0.0;
    double y = 0.0;
};

// Crop-and-resize bookkeeping for one sampled region.
struct CropTransform {
    Point center;                 // source center, pixels
    std::size_t side = 1;         // source window side, pixels
    std::size_t out_side = 1;     // resized side, pixels
    double scale = 1.0;           // out_side / side
    std::vector<std::uint8_t> pad_mask;  // out_side^2, 1 where source pixels existed

    double origin_x() const { return center.x - 0.5 * static_cast<double>(side); }
    double origin_y() const { return center.y - 0.5 * static_cast<double>(side); }
};

// ceil(factor * sqrt(w * h)), exact at the integer boundary.
std::size_t crop_side(const MaybeBox& box, double factor);

struct Region {
    Tensor patch;  // [out x out] or [ch x out x out], matching the frame rank
    CropTransform transform;
};

// Samples a `side`-pixel window centred on `center`, zero padded outside the
// frame, and resizes it to `out_side` bilinearly. Source coordinate of output
// pixel d (per axis) is origin + clamp((d + 0.5) / scale - 0.5, 0, side - 1).
Region extract_region(const Tensor& frame, Point center, std::size_t side, std::size_t out_side);

MaybeBox to_crop(const MaybeBox& box, const CropTransform& t);
MaybeBox from_crop(const MaybeBox& box, const CropTransform& t);

// Outer product of symmetric 1-D Hann windows; n == 1 gives [[1]].
Tensor hanning2d(std::size_t n);

// Bilinear resize of a single-channel map with the half-pixel convention and
// edge clamping.
Tensor resize_bilinear(const Tensor& image, std::size_t out_h, std::size_t out_w);

}  // namespace focustrack
