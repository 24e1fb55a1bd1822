#pragma once

#include <cstdio>
#include <csetjmp>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <png.h>

#include "depthfill/raster.hpp"

namespace depthfill {

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const { if (f) std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_file(const std::string& path, const char* mode) {
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) throw std::runtime_error("cannot open file: " + path);
    return f;
}

[[noreturn]] inline void png_error_handler(png_structp png, png_const_charp msg) {
    // Error text is recovered after the longjmp via the error pointer.
    *static_cast<std::string*>(png_get_error_ptr(png)) = msg ? msg : "libpng error";
    longjmp(png_jmpbuf(png), 1);
}

inline void png_warning_handler(png_structp, png_const_charp) {}

} // namespace detail

// Reads a single-channel 16-bit grayscale PNG (the dataset convention for
// disparity ground truth). Any other layout is rejected.
inline DisparityRaster read_disparity_png(const std::string& path) {
    detail::FilePtr file = detail::open_file(path, "rb");
    std::string err;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err,
                                             detail::png_error_handler,
                                             detail::png_warning_handler);
    if (!png) throw std::runtime_error("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw std::runtime_error("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("failed to read " + path + ": " + err);
    }
    png_init_io(png, file.get());
    png_read_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const int depth = png_get_bit_depth(png, info);
    const int color = png_get_color_type(png, info);
    if (color != PNG_COLOR_TYPE_GRAY || depth != 16) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error(path + ": expected 16-bit grayscale PNG");
    }
    png_set_swap(png);  // PNG stores 16-bit samples big-endian

    DisparityRaster raster(static_cast<int>(w), static_cast<int>(h));
    std::vector<png_bytep> rows(h);
    for (png_uint_32 y = 0; y < h; ++y)
        rows[y] = reinterpret_cast<png_bytep>(raster.codes.data() + static_cast<std::size_t>(y) * w);
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return raster;
}

inline void write_disparity_png(const std::string& path, const DisparityRaster& raster) {
    detail::FilePtr file = detail::open_file(path, "wb");
    std::string err;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err,
                                              detail::png_error_handler,
                                              detail::png_warning_handler);
    if (!png) throw std::runtime_error("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("failed to write " + path + ": " + err);
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, raster.width, raster.height, 16, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_set_swap(png);
    std::vector<png_bytep> rows(raster.height);
    for (int y = 0; y < raster.height; ++y)
        rows[y] = reinterpret_cast<png_bytep>(
            const_cast<std::uint16_t*>(raster.codes.data() + static_cast<std::size_t>(y) * raster.width));
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

// Reads an RGB PNG, converting palette/gray/alpha variants to plain 8-bit RGB.
inline RgbImage read_rgb_png(const std::string& path) {
    detail::FilePtr file = detail::open_file(path, "rb");
    std::string err;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err,
                                             detail::png_error_handler,
                                             detail::png_warning_handler);
    if (!png) throw std::runtime_error("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw std::runtime_error("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("failed to read " + path + ": " + err);
    }
    png_init_io(png, file.get());
    png_read_info(png, info);

    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    if (png_get_channels(png, info) != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error(path + ": cannot convert to 8-bit RGB");
    }

    RgbImage img(static_cast<int>(w), static_cast<int>(h));
    std::vector<png_bytep> rows(h);
    for (png_uint_32 y = 0; y < h; ++y)
        rows[y] = img.data.data() + static_cast<std::size_t>(y) * w * 3;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

inline void write_rgb_png(const std::string& path, const RgbImage& img) {
    detail::FilePtr file = detail::open_file(path, "wb");
    std::string err;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err,
                                              detail::png_error_handler,
                                              detail::png_warning_handler);
    if (!png) throw std::runtime_error("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("failed to write " + path + ": " + err);
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(img.height);
    for (int y = 0; y < img.height; ++y)
        rows[y] = const_cast<png_bytep>(img.data.data() + static_cast<std::size_t>(y) * img.width * 3);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

} // namespace depthfill
