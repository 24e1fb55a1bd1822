#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

namespace depthfill {

// A disparity measurement in pixels, or empty when the measurement is invalid.
using Disparity = std::optional<double>;
using Depth = std::optional<double>;

// Row-major 16-bit disparity codes. Code 0 denotes an invalid measurement;
// code p >= 1 decodes to a disparity of (p - 1) / 256 pixels.
struct DisparityRaster {
    int width = 0;
    int height = 0;
    std::vector<std::uint16_t> codes;

    DisparityRaster() = default;

    DisparityRaster(int w, int h) : width(w), height(h), codes(check_dims(w, h), 0) {}

    DisparityRaster(int w, int h, std::vector<std::uint16_t> c)
        : width(w), height(h), codes(std::move(c)) {
        if (codes.size() != check_dims(w, h))
            throw std::invalid_argument("DisparityRaster: code count does not match dimensions");
    }

    std::size_t pixel_count() const { return codes.size(); }

    std::uint16_t at(int x, int y) const { return codes[static_cast<std::size_t>(y) * width + x]; }
    std::uint16_t& at(int x, int y) { return codes[static_cast<std::size_t>(y) * width + x]; }

    bool same_size(const DisparityRaster& other) const {
        return width == other.width && height == other.height;
    }

private:
    static std::size_t check_dims(int w, int h) {
        if (w <= 0 || h <= 0)
            throw std::invalid_argument("DisparityRaster: dimensions must be positive");
        return static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    }
};

// 8-bit RGB image, row-major, interleaved channels.
struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;

    RgbImage() = default;

    RgbImage(int w, int h) : width(w), height(h), data(byte_count(w, h), 0) {}

    RgbImage(int w, int h, std::vector<std::uint8_t> d)
        : width(w), height(h), data(std::move(d)) {
        if (data.size() != byte_count(w, h))
            throw std::invalid_argument("RgbImage: buffer length must equal width*height*3");
    }

    std::uint8_t at(int x, int y, int ch) const {
        return data[(static_cast<std::size_t>(y) * width + x) * 3 + ch];
    }
    std::uint8_t& at(int x, int y, int ch) {
        return data[(static_cast<std::size_t>(y) * width + x) * 3 + ch];
    }

private:
    static std::size_t byte_count(int w, int h) {
        if (w <= 0 || h <= 0)
            throw std::invalid_argument("RgbImage: dimensions must be positive");
        return static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3;
    }
};

// Stereo rig geometry: baseline B in meters, focal length f in pixels.
struct CameraRig {
    double baseline_m = 0.22;
    double focal_px = 0.0;

    CameraRig() = default;
    CameraRig(double baseline, double focal) : baseline_m(baseline), focal_px(focal) {
        if (baseline_m <= 0.0 || focal_px <= 0.0)
            throw std::invalid_argument("CameraRig: baseline and focal length must be positive");
    }

    bool operator==(const CameraRig&) const = default;
};

// Per-pixel metric depth with an explicit validity mask. Invalid positions
// carry NaN so an accidental read is loud in any downstream arithmetic.
struct DepthMap {
    int width = 0;
    int height = 0;
    std::vector<double> depth_m;
    std::vector<std::uint8_t> valid;

    DepthMap() = default;
    DepthMap(int w, int h)
        : width(w), height(h),
          depth_m(static_cast<std::size_t>(w) * h, std::numeric_limits<double>::quiet_NaN()),
          valid(static_cast<std::size_t>(w) * h, 0) {
        if (w <= 0 || h <= 0)
            throw std::invalid_argument("DepthMap: dimensions must be positive");
    }

    double depth_at(int x, int y) const { return depth_m[static_cast<std::size_t>(y) * width + x]; }
    bool valid_at(int x, int y) const { return valid[static_cast<std::size_t>(y) * width + x] != 0; }
};

// disparity = (p - 1) / 256, with code 0 as the invalid sentinel.
inline Disparity decode_disparity(std::uint16_t p) {
    if (p == 0) return std::nullopt;
    return (static_cast<double>(p) - 1.0) / 256.0;
}

// Inverse of decode_disparity: round(d * 256) + 1, clamped to [1, 65535].
// Rounding is half-away-from-zero so the round trip over all codes is exact.
inline std::uint16_t encode_disparity(Disparity d) {
    if (!d) return 0;
    if (*d < 0.0) throw std::invalid_argument("encode_disparity: disparity must be non-negative");
    const double code = std::round(*d * 256.0) + 1.0;
    if (code >= 65535.0) return 65535;
    return static_cast<std::uint16_t>(code);
}

// Z = B*f / disparity. Zero disparity is the infinite-depth singularity and
// maps to Invalid rather than to a large finite value.
inline Depth disparity_to_depth(Disparity d, const CameraRig& rig) {
    if (!d) return std::nullopt;
    if (*d < 0.0) throw std::invalid_argument("disparity_to_depth: disparity must be non-negative");
    if (*d == 0.0) return std::nullopt;
    return rig.baseline_m * rig.focal_px / *d;
}

// d = B*f / Z.
inline Disparity depth_to_disparity(Depth z, const CameraRig& rig) {
    if (!z) return std::nullopt;
    if (*z <= 0.0) throw std::invalid_argument("depth_to_disparity: depth must be positive");
    return rig.baseline_m * rig.focal_px / *z;
}

// Per-pixel decode + disparity_to_depth. The mask marks every pixel whose
// code is 0 or whose decoded disparity is 0.
inline DepthMap raster_to_depth_map(const DisparityRaster& r, const CameraRig& rig) {
    DepthMap out(r.width, r.height);
    for (std::size_t i = 0; i < r.codes.size(); ++i) {
        const Depth z = disparity_to_depth(decode_disparity(r.codes[i]), rig);
        if (z) {
            out.depth_m[i] = *z;
            out.valid[i] = 1;
        }
    }
    return out;
}

// Quantizes a real-valued code (the scale used by normalized network outputs
// after multiplying by 65535) onto the 16-bit grid. Non-negative values round
// half-away-from-zero and clamp to the valid range [1, 65535], so a zero
// output lands on the minimum valid code. Negative values have no disparity
// reading at all and become the invalid code 0 — the one place a
// floating-point prediction can legitimately turn into an invalid pixel.
inline std::uint16_t quantize_code(double code_value) {
    if (!(code_value >= 0.0)) return 0;  // negative or NaN
    const long long r = std::llround(code_value);
    return static_cast<std::uint16_t>(r < 1 ? 1 : (r > 65535 ? 65535 : r));
}

// Nearest-neighbor resample. Used for disparity codes, where interpolation
// would invent disparities between objects at depth discontinuities.
inline DisparityRaster resize_nearest(const DisparityRaster& src, int w, int h) {
    if (w <= 0 || h <= 0) throw std::invalid_argument("resize_nearest: bad size");
    if (w == src.width && h == src.height) return src;
    DisparityRaster out(w, h);
    for (int y = 0; y < h; ++y) {
        int sy = static_cast<int>((y + 0.5) * src.height / h);
        if (sy >= src.height) sy = src.height - 1;
        for (int x = 0; x < w; ++x) {
            int sx = static_cast<int>((x + 0.5) * src.width / w);
            if (sx >= src.width) sx = src.width - 1;
            out.at(x, y) = src.at(sx, sy);
        }
    }
    return out;
}

// Bilinear resample for RGB input images.
inline RgbImage resize_bilinear(const RgbImage& src, int w, int h) {
    if (w <= 0 || h <= 0) throw std::invalid_argument("resize_bilinear: bad size");
    if (w == src.width && h == src.height) return src;
    RgbImage out(w, h);
    const double sx_scale = static_cast<double>(src.width) / w;
    const double sy_scale = static_cast<double>(src.height) / h;
    for (int y = 0; y < h; ++y) {
        double fy = (y + 0.5) * sy_scale - 0.5;
        if (fy < 0) fy = 0;
        int y0 = static_cast<int>(fy);
        if (y0 > src.height - 2) y0 = src.height - 2;
        if (y0 < 0) y0 = 0;
        double wy = src.height > 1 ? fy - y0 : 0.0;
        if (wy > 1) wy = 1;  // fy past the last sample pair after clamping y0
        for (int x = 0; x < w; ++x) {
            double fx = (x + 0.5) * sx_scale - 0.5;
            if (fx < 0) fx = 0;
            int x0 = static_cast<int>(fx);
            if (x0 > src.width - 2) x0 = src.width - 2;
            if (x0 < 0) x0 = 0;
            double wx = src.width > 1 ? fx - x0 : 0.0;
            if (wx > 1) wx = 1;
            const int x1 = src.width > 1 ? x0 + 1 : x0;
            const int y1 = src.height > 1 ? y0 + 1 : y0;
            for (int c = 0; c < 3; ++c) {
                const double v =
                    (1 - wy) * ((1 - wx) * src.at(x0, y0, c) + wx * src.at(x1, y0, c)) +
                    wy * ((1 - wx) * src.at(x0, y1, c) + wx * src.at(x1, y1, c));
                out.at(x, y, c) = static_cast<std::uint8_t>(std::lround(v));
            }
        }
    }
    return out;
}

} // namespace depthfill
