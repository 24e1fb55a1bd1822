#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "depthfill/raster.hpp"

namespace depthfill {

// Raised when a metric's denominator is empty (all-zero target, dataset with
// no invalid pixels, empty mask).
struct UndefinedMetricError : std::domain_error {
    using std::domain_error::domain_error;
};

// Which pixels participate in the error sum. The literal formula runs over
// all pixels; the masked variant restricts to pixels whose target code is
// nonzero and is the right tool when exact ground truth is available.
enum class AccuracyDomain { all_pixels, valid_target_only };

struct PixelErrorSummary {
    std::uint64_t absolute_error_sum = 0;
    std::uint64_t target_sum = 0;
    double error_ratio_pct = 0.0;  // 100 * absolute_error_sum / target_sum
    double accuracy_pct = 0.0;     // 100 - error_ratio_pct
};

struct InvalidStats {
    std::vector<std::uint64_t> per_image_counts;
    double average_invalid = 0.0;
    double invalid_fraction_pct = 0.0;  // average_invalid / (width*height) * 100
};

struct CorrectionStats {
    std::vector<std::uint64_t> per_image_corrected;
    double average_corrected = 0.0;
    double corrected_pct = 0.0;  // 100 * average_corrected / average_invalid
};

inline void require_same_size(const DisparityRaster& a, const DisparityRaster& b,
                              const char* what) {
    if (!a.same_size(b))
        throw std::invalid_argument(std::string(what) + ": dimension mismatch");
}

// Sum over all pixels of |P - P_hat|, in exact integer arithmetic on codes.
inline std::uint64_t absolute_error_sum(const DisparityRaster& pred,
                                        const DisparityRaster& target,
                                        AccuracyDomain domain = AccuracyDomain::all_pixels) {
    require_same_size(pred, target, "absolute_error_sum");
    std::uint64_t sum = 0;
    for (std::size_t i = 0; i < target.codes.size(); ++i) {
        if (domain == AccuracyDomain::valid_target_only && target.codes[i] == 0) continue;
        const int diff = static_cast<int>(target.codes[i]) - static_cast<int>(pred.codes[i]);
        sum += static_cast<std::uint64_t>(diff < 0 ? -diff : diff);
    }
    return sum;
}

// Raw error and target sums only, no division: safe on any input and the
// right building block for pooling across images.
inline PixelErrorSummary accuracy_parts(const DisparityRaster& pred,
                                        const DisparityRaster& target,
                                        AccuracyDomain domain = AccuracyDomain::all_pixels) {
    require_same_size(pred, target, "accuracy_parts");
    PixelErrorSummary s;
    s.absolute_error_sum = absolute_error_sum(pred, target, domain);
    for (std::size_t i = 0; i < target.codes.size(); ++i) {
        if (domain == AccuracyDomain::valid_target_only && target.codes[i] == 0) continue;
        s.target_sum += target.codes[i];
    }
    return s;
}

// Error ratio per the absolute-error formula, plus its complement. The
// reported quantity in every table is accuracy_pct = 100 - error ratio.
inline PixelErrorSummary accuracy(const DisparityRaster& pred, const DisparityRaster& target,
                                  AccuracyDomain domain = AccuracyDomain::all_pixels) {
    PixelErrorSummary s = accuracy_parts(pred, target, domain);
    if (s.target_sum == 0)
        throw UndefinedMetricError("accuracy: target pixel sum is zero");
    s.error_ratio_pct = 100.0 * static_cast<double>(s.absolute_error_sum) /
                        static_cast<double>(s.target_sum);
    s.accuracy_pct = 100.0 - s.error_ratio_pct;
    return s;
}

// Pools the error and target sums of several prediction/target pairs into one
// summary (the dataset-level figure reported per refinement iteration).
inline PixelErrorSummary pooled_accuracy(std::span<const PixelErrorSummary> parts) {
    PixelErrorSummary s;
    for (const auto& p : parts) {
        s.absolute_error_sum += p.absolute_error_sum;
        s.target_sum += p.target_sum;
    }
    if (s.target_sum == 0)
        throw UndefinedMetricError("pooled_accuracy: target pixel sum is zero");
    s.error_ratio_pct = 100.0 * static_cast<double>(s.absolute_error_sum) /
                        static_cast<double>(s.target_sum);
    s.accuracy_pct = 100.0 - s.error_ratio_pct;
    return s;
}

// Number of pixels with code 0.
inline std::uint64_t invalid_count(const DisparityRaster& r) {
    std::uint64_t n = 0;
    for (const auto c : r.codes)
        if (c == 0) ++n;
    return n;
}

// Mean invalid-pixel count over a dataset of uniform dimensions, plus the
// fraction of the image area it represents.
inline InvalidStats average_invalid(std::span<const DisparityRaster> dataset) {
    if (dataset.empty())
        throw std::invalid_argument("average_invalid: empty dataset");
    const int w = dataset.front().width;
    const int h = dataset.front().height;
    InvalidStats stats;
    stats.per_image_counts.reserve(dataset.size());
    std::uint64_t total = 0;
    for (const auto& r : dataset) {
        if (r.width != w || r.height != h)
            throw std::invalid_argument("average_invalid: dataset dimensions are not uniform");
        const std::uint64_t n = invalid_count(r);
        stats.per_image_counts.push_back(n);
        total += n;
    }
    stats.average_invalid = static_cast<double>(total) / static_cast<double>(dataset.size());
    stats.invalid_fraction_pct =
        stats.average_invalid / (static_cast<double>(w) * static_cast<double>(h)) * 100.0;
    return stats;
}

// A pixel counts as corrected when its code is 0 in `before` and nonzero in
// `after`. Predictions that quantize back to code 0 therefore stay
// uncorrected, which is what keeps the percentage below 100.
inline CorrectionStats corrected_pixels(std::span<const DisparityRaster> before,
                                        std::span<const DisparityRaster> after) {
    if (before.size() != after.size())
        throw std::invalid_argument("corrected_pixels: sequence lengths differ");
    if (before.empty())
        throw std::invalid_argument("corrected_pixels: empty dataset");
    const InvalidStats inv = average_invalid(before);
    if (inv.average_invalid == 0.0)
        throw UndefinedMetricError("corrected_pixels: no invalid pixels in `before`");

    CorrectionStats stats;
    stats.per_image_corrected.reserve(before.size());
    std::uint64_t total = 0;
    for (std::size_t i = 0; i < before.size(); ++i) {
        require_same_size(before[i], after[i], "corrected_pixels");
        std::uint64_t n = 0;
        for (std::size_t p = 0; p < before[i].codes.size(); ++p)
            if (before[i].codes[p] == 0 && after[i].codes[p] != 0) ++n;
        stats.per_image_corrected.push_back(n);
        total += n;
    }
    stats.average_corrected = static_cast<double>(total) / static_cast<double>(before.size());
    stats.corrected_pct = 100.0 * stats.average_corrected / inv.average_invalid;
    return stats;
}

inline nlohmann::json to_json(const PixelErrorSummary& s) {
    return nlohmann::json{{"absolute_error_sum", s.absolute_error_sum},
                          {"target_sum", s.target_sum},
                          {"error_ratio_pct", s.error_ratio_pct},
                          {"accuracy_pct", s.accuracy_pct}};
}

inline nlohmann::json to_json(const InvalidStats& s) {
    return nlohmann::json{{"average_invalid", s.average_invalid},
                          {"invalid_fraction_pct", s.invalid_fraction_pct}};
}

inline nlohmann::json to_json(const CorrectionStats& s) {
    return nlohmann::json{{"average_corrected", s.average_corrected},
                          {"corrected_pct", s.corrected_pct}};
}

} // namespace depthfill
