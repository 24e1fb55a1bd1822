#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "depthfill/raster.hpp"
#include "depthfill/rng.hpp"

namespace depthfill {

// Deterministic synthetic stereo-like scenes: rectangular objects layered
// over a sloped ground plane, all placed in metric depth and converted to
// disparity codes through the rig. The green channel is a monotone function
// of depth (near = bright), so appearance carries the depth signal; red/blue
// are per-object hues. Holes combine occlusion strips at object left edges
// with uniform speckle, adjusted to exactly round(hole_fraction * pixels)
// invalid pixels.
struct SceneConfig {
    int width = 64;
    int height = 48;
    int object_count = 6;
    double depth_near_m = 2.0;
    double depth_far_m = 30.0;
    double hole_fraction = 0.25;
    CameraRig rig{0.22, 2262.52};
    std::uint64_t seed = 0;

    bool operator==(const SceneConfig&) const = default;
};

inline void validate(const SceneConfig& cfg) {
    if (cfg.width < 4 || cfg.height < 4)
        throw std::invalid_argument("SceneConfig: size must be at least 4x4");
    if (cfg.object_count < 0)
        throw std::invalid_argument("SceneConfig: object_count must be >= 0");
    if (!(cfg.depth_near_m > 0.0) || !(cfg.depth_near_m < cfg.depth_far_m))
        throw std::invalid_argument("SceneConfig: need 0 < depth_near_m < depth_far_m");
    if (!(cfg.hole_fraction >= 0.0) || !(cfg.hole_fraction < 1.0))
        throw std::invalid_argument("SceneConfig: hole_fraction must be in [0, 1)");
    if (cfg.rig.baseline_m <= 0.0 || cfg.rig.focal_px <= 0.0)
        throw std::invalid_argument("SceneConfig: rig baseline and focal length must be positive");
    // The nearest depth must still encode below the 16-bit ceiling, or truth
    // codes would saturate and the round-trip oracle would break.
    const double d_near = cfg.rig.baseline_m * cfg.rig.focal_px / cfg.depth_near_m;
    if (std::lround(d_near * 256.0) + 1 > 65535)
        throw std::invalid_argument("SceneConfig: depth_near_m too close for the 16-bit code range");
}

struct SyntheticSample {
    RgbImage rgb;
    DisparityRaster truth;  // fully valid ground truth
    DisparityRaster holed;  // truth with invalid pixels punched
};

namespace detail {

struct SceneObject {
    int x0, y0, x1, y1;  // clipped, half-open
    double depth_m;
    std::uint8_t r, b;
};

inline std::uint8_t green_of_depth(double z, const SceneConfig& cfg) {
    const double t =
        std::clamp((z - cfg.depth_near_m) / (cfg.depth_far_m - cfg.depth_near_m), 0.0, 1.0);
    return static_cast<std::uint8_t>(std::lround(15.0 + 224.0 * (1.0 - t)));
}

} // namespace detail

// Draw order is fixed: per object (center x, center y, width, height, depth,
// red, blue), then one shuffle for the hole-count adjustment. Identical
// configs therefore produce identical samples.
inline SyntheticSample generate_scene(const SceneConfig& cfg) {
    validate(cfg);
    const int w = cfg.width;
    const int h = cfg.height;
    Rng rng(cfg.seed);

    std::vector<detail::SceneObject> objects;
    objects.reserve(static_cast<std::size_t>(cfg.object_count));
    const double span = cfg.depth_far_m - cfg.depth_near_m;
    for (int i = 0; i < cfg.object_count; ++i) {
        const int cx = static_cast<int>(rng.uniform_int(0, w - 1));
        const int cy = static_cast<int>(rng.uniform_int(h / 4, h - 1));
        const int ow = static_cast<int>(rng.uniform_int(std::max(2, w / 8), std::max(3, w / 3)));
        const int oh = static_cast<int>(rng.uniform_int(std::max(2, h / 8), std::max(3, h / 3)));
        detail::SceneObject obj;
        obj.depth_m = rng.uniform(cfg.depth_near_m, cfg.depth_near_m + 0.45 * span);
        obj.r = static_cast<std::uint8_t>(rng.uniform_int(30, 225));
        obj.b = static_cast<std::uint8_t>(rng.uniform_int(30, 225));
        obj.x0 = std::clamp(cx - ow / 2, 0, w);
        obj.x1 = std::clamp(cx - ow / 2 + ow, 0, w);
        obj.y0 = std::clamp(cy - oh / 2, 0, h);
        obj.y1 = std::clamp(cy - oh / 2 + oh, 0, h);
        if (obj.x0 < obj.x1 && obj.y0 < obj.y1) objects.push_back(obj);
    }
    // Painter's order: far objects first, nearer ones overwrite.
    std::stable_sort(objects.begin(), objects.end(),
                     [](const auto& a, const auto& b) { return a.depth_m > b.depth_m; });

    SyntheticSample s{RgbImage(w, h), DisparityRaster(w, h), DisparityRaster(w, h)};

    // Ground plane: far at the horizon, sloping toward the viewer at the
    // bottom row; the whole ramp stays inside [near, far].
    for (int y = 0; y < h; ++y) {
        const double t = h > 1 ? static_cast<double>(y) / (h - 1) : 0.0;
        const double z = cfg.depth_far_m - 0.9 * span * t;
        const std::uint16_t code = encode_disparity(depth_to_disparity(z, cfg.rig));
        const std::uint8_t g = detail::green_of_depth(z, cfg);
        for (int x = 0; x < w; ++x) {
            s.truth.at(x, y) = code;
            s.rgb.at(x, y, 0) = 60;
            s.rgb.at(x, y, 1) = g;
            s.rgb.at(x, y, 2) = 90;
        }
    }
    for (const auto& obj : objects) {
        const std::uint16_t code = encode_disparity(depth_to_disparity(obj.depth_m, cfg.rig));
        const std::uint8_t g = detail::green_of_depth(obj.depth_m, cfg);
        for (int y = obj.y0; y < obj.y1; ++y) {
            for (int x = obj.x0; x < obj.x1; ++x) {
                s.truth.at(x, y) = code;
                s.rgb.at(x, y, 0) = obj.r;
                s.rgb.at(x, y, 1) = g;
                s.rgb.at(x, y, 2) = obj.b;
            }
        }
    }

    s.holed = s.truth;
    if (cfg.hole_fraction == 0.0) return s;

    const std::size_t total = s.truth.pixel_count();
    const std::size_t target =
        static_cast<std::size_t>(std::llround(cfg.hole_fraction * static_cast<double>(total)));

    // Structured holes: a narrow left border band (unmatchable in the right
    // view) plus an occlusion strip at each object's left edge, wider for
    // nearer objects, mimicking stereo shadowing.
    const int border = std::max(1, static_cast<int>(std::lround(0.02 * w)));
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < border; ++x) s.holed.at(x, y) = 0;
    for (const auto& obj : objects) {
        const double disp = cfg.rig.baseline_m * cfg.rig.focal_px / obj.depth_m;
        const int strip =
            std::clamp(static_cast<int>(std::lround(disp / 32.0)), 1, std::max(1, w / 10));
        for (int y = obj.y0; y < obj.y1; ++y)
            for (int x = std::max(0, obj.x0 - strip); x < obj.x0; ++x) s.holed.at(x, y) = 0;
    }

    std::size_t structured = 0;
    for (const auto code : s.holed.codes)
        if (code == 0) ++structured;
    if (static_cast<double>(structured) >
        static_cast<double>(target) + 0.02 * static_cast<double>(total))
        throw std::invalid_argument(
            "SceneConfig: hole_fraction too small for the structured occlusions");

    if (structured > target) {
        // Restore a random subset of structured holes to hit the target exactly.
        std::vector<std::size_t> holes;
        holes.reserve(structured);
        for (std::size_t i = 0; i < s.holed.codes.size(); ++i)
            if (s.holed.codes[i] == 0) holes.push_back(i);
        rng.shuffle(holes);
        for (std::size_t k = 0; k < structured - target; ++k)
            s.holed.codes[holes[k]] = s.truth.codes[holes[k]];
    } else if (structured < target) {
        // Speckle: punch uniformly random valid pixels up to the target.
        std::vector<std::size_t> valid;
        valid.reserve(total - structured);
        for (std::size_t i = 0; i < s.holed.codes.size(); ++i)
            if (s.holed.codes[i] != 0) valid.push_back(i);
        rng.shuffle(valid);
        for (std::size_t k = 0; k < target - structured; ++k) s.holed.codes[valid[k]] = 0;
    }
    return s;
}

// Sample i uses seed cfg.seed + i.
inline std::vector<SyntheticSample> generate_dataset(const SceneConfig& cfg, int count) {
    if (count < 0) throw std::invalid_argument("generate_dataset: count must be >= 0");
    std::vector<SyntheticSample> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        SceneConfig c = cfg;
        c.seed = cfg.seed + static_cast<std::uint64_t>(i);
        out.push_back(generate_scene(c));
    }
    return out;
}

} // namespace depthfill
