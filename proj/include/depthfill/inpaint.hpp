#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "depthfill/metrics.hpp"
#include "depthfill/raster.hpp"

namespace depthfill {

struct FillOutcome {
    DisparityRaster filled;
    std::uint64_t replaced_count = 0;    // zero pixels that received a nonzero prediction
    std::uint64_t remaining_invalid = 0; // zero pixels the prediction could not repair
};

// Replace every zero-valued pixel with the predicted pixel at the same
// position. Nonzero target pixels pass through untouched.
inline FillOutcome fill_missing(const DisparityRaster& target, const DisparityRaster& predicted) {
    require_same_size(target, predicted, "fill_missing");
    FillOutcome out;
    out.filled = target;
    for (std::size_t i = 0; i < target.codes.size(); ++i) {
        if (target.codes[i] != 0) continue;
        out.filled.codes[i] = predicted.codes[i];
        if (predicted.codes[i] != 0)
            ++out.replaced_count;
        else
            ++out.remaining_invalid;
    }
    return out;
}

// Non-learned stand-in predictor: Gauss-Seidel neighbor-averaging diffusion
// from the valid pixels. Converges to the discrete Laplace solution over the
// holes; iteration stops once the maximum per-pixel change drops below half a
// code quantum, which is invisible after encoding.
inline DisparityRaster baseline_predict(const DisparityRaster& target) {
    const std::size_t n = target.codes.size();
    std::vector<double> field(n);
    std::vector<std::size_t> holes;
    double valid_sum = 0.0;
    std::size_t valid_n = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (target.codes[i] != 0) {
            field[i] = target.codes[i];
            valid_sum += target.codes[i];
            ++valid_n;
        } else {
            holes.push_back(i);
        }
    }
    if (valid_n == 0)
        throw std::invalid_argument("baseline_predict: raster has no valid pixels");

    const double mean = valid_sum / static_cast<double>(valid_n);
    for (const auto i : holes) field[i] = mean;

    const int w = target.width;
    const int h = target.height;
    for (int sweep = 0; sweep < 10000 && !holes.empty(); ++sweep) {
        double max_change = 0.0;
        for (const auto i : holes) {
            const int x = static_cast<int>(i % w);
            const int y = static_cast<int>(i / w);
            double sum = 0.0;
            int count = 0;
            if (y > 0) { sum += field[i - w]; ++count; }
            if (y + 1 < h) { sum += field[i + w]; ++count; }
            if (x > 0) { sum += field[i - 1]; ++count; }
            if (x + 1 < w) { sum += field[i + 1]; ++count; }
            if (count == 0) continue;  // 1x1 raster cannot occur here (valid_n >= 1)
            const double next = sum / count;
            const double change = std::abs(next - field[i]);
            if (change > max_change) max_change = change;
            field[i] = next;
        }
        if (max_change < 0.5) break;
    }

    DisparityRaster out = target;
    for (const auto i : holes) {
        double v = std::round(field[i]);
        if (v < 1.0) v = 1.0;
        if (v > 65535.0) v = 65535.0;
        out.codes[i] = static_cast<std::uint16_t>(v);
    }
    return out;
}

} // namespace depthfill
