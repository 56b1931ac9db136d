#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "focustrack/tensor.hpp"

namespace focustrack {

// Grayscale PNG through libpng. Reading accepts 1-16 bit gray, palette and
// RGB(A) inputs (color is converted to luminance) and normalizes to [0, 1].
Tensor read_png_gray(const std::filesystem::path& path);

// Writes an [H x W] tensor with values in [0, 1] at 8 or 16 bits per pixel.
void write_png_gray(const std::filesystem::path& path, const Tensor& image, int bit_depth = 8);
void write_png_gray8(const std::filesystem::path& path, const std::vector<std::uint8_t>& pixels, std::size_t width,
                     std::size_t height);

}  // namespace focustrack
