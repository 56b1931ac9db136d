#include "focustrack/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>

#include "focustrack/errors.hpp"

namespace focustrack {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) throw FormatError("png: cannot open '" + path.string() + "'");
    return f;
}

void write_rows(const std::filesystem::path& path, std::size_t width, std::size_t height, int bit_depth,
                std::vector<png_bytep>& rows) {
    FilePtr f = open_file(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw FormatError("png: cannot allocate writer for '" + path.string() + "'");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw FormatError("png: write failed for '" + path.string() + "'");
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth,
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace

Tensor read_png_gray(const std::filesystem::path& path) {
    FilePtr f = open_file(path, "rb");
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
        throw FormatError("png: '" + path.string() + "' is not a PNG file");
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("png: cannot allocate reader for '" + path.string() + "'");
    }
    std::vector<unsigned char> buffer;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("png: '" + path.string() + "' is corrupt");
    }
    png_init_io(png, f.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const int color = png_get_color_type(png, info);
    int depth = png_get_bit_depth(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA || color == PNG_COLOR_TYPE_PALETTE) {
        png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    }
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const std::size_t width = png_get_image_width(png, info);
    const std::size_t height = png_get_image_height(png, info);
    depth = png_get_bit_depth(png, info);
    const std::size_t row_bytes = png_get_rowbytes(png, info);
    if (png_get_channels(png, info) != 1) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("png: '" + path.string() + "' did not reduce to one channel");
    }
    buffer.resize(row_bytes * height);
    rows.resize(height);
    for (std::size_t y = 0; y < height; ++y) rows[y] = buffer.data() + y * row_bytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Tensor img({height, width}, DType::f32);
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            if (depth == 16) {
                const unsigned v = (static_cast<unsigned>(rows[y][2 * x]) << 8) | rows[y][2 * x + 1];
                img(y, x) = v / 65535.0;
            } else {
                img(y, x) = rows[y][x] / 255.0;
            }
        }
    }
    img.finalize("read_png_gray");
    return img;
}

void write_png_gray(const std::filesystem::path& path, const Tensor& image, int bit_depth) {
    require_rank(image, 2, "write_png_gray");
    if (bit_depth != 8 && bit_depth != 16) throw ParameterError("write_png_gray: bit depth must be 8 or 16");
    const std::size_t h = image.dim(0), w = image.dim(1);
    const std::size_t bpp = bit_depth / 8;
    const double top = bit_depth == 8 ? 255.0 : 65535.0;
    std::vector<unsigned char> buffer(w * h * bpp);
    for (std::size_t i = 0; i < w * h; ++i) {
        const auto v = static_cast<std::uint32_t>(std::lround(std::clamp(image[i], 0.0, 1.0) * top));
        if (bpp == 1) {
            buffer[i] = static_cast<unsigned char>(v);
        } else {
            buffer[2 * i] = static_cast<unsigned char>(v >> 8);  // PNG stores big-endian
            buffer[2 * i + 1] = static_cast<unsigned char>(v & 0xff);
        }
    }
    std::vector<png_bytep> rows(h);
    for (std::size_t y = 0; y < h; ++y) rows[y] = buffer.data() + y * w * bpp;
    write_rows(path, w, h, bit_depth, rows);
}

void write_png_gray8(const std::filesystem::path& path, const std::vector<std::uint8_t>& pixels, std::size_t width,
                     std::size_t height) {
    if (pixels.size() != width * height || width == 0) throw DimensionError("write_png_gray8: size mismatch");
    std::vector<unsigned char> buffer(pixels.begin(), pixels.end());
    std::vector<png_bytep> rows(height);
    for (std::size_t y = 0; y < height; ++y) rows[y] = buffer.data() + y * width;
    write_rows(path, width, height, 8, rows);
}

}  // namespace focustrack
