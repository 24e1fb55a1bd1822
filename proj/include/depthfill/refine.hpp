#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "depthfill/inpaint.hpp"
#include "depthfill/metrics.hpp"
#include "depthfill/predictor.hpp"
#include "depthfill/raster.hpp"

namespace depthfill {

// One image flowing through the refinement loop. `target` starts as the
// damaged raster and accumulates fills across iterations.
struct RefineSample {
    std::string id;
    RgbImage rgb;
    DisparityRaster target;
    bool eval = false;
};

struct RefineConfig {
    int iterations = 3;
    // Used only when no sample is marked eval: the last round(n * fraction)
    // samples become the evaluation split.
    double eval_fraction = 0.2;
    NetworkSpec network;  // base seed; iteration t trains with seed + (t - 1)
    TrainConfig train;    // likewise shuffled with train.seed + (t - 1)
};

struct IterationReport {
    int iteration = 0;  // 1-based
    std::vector<double> loss_trace;
    double accuracy_pct = 0.0;       // eval split, predictions vs current targets
    double error_ratio_pct = 0.0;
    std::optional<double> corrected_pct;  // train split, vs the original holes;
                                          // empty when the originals had none
    double remaining_invalid_avg = 0.0;   // all images, after this iteration's fill
    std::uint64_t replaced_total = 0;     // pixels filled this iteration, all images
};

struct RefineResult {
    std::vector<IterationReport> reports;
    std::vector<PredictorModel> models;  // the model trained in each iteration
    std::vector<RefineSample> samples;   // final refined targets
};

// Train-predict-fill loop. Every iteration trains a fresh network on the
// training split's current targets, predicts a full raster for every image,
// scores the evaluation split against the targets as they stood before the
// fill, then replaces invalid pixels everywhere a prediction is available.
inline RefineResult iterative_refine(std::vector<RefineSample> samples, const RefineConfig& cfg) {
    if (samples.empty()) throw std::invalid_argument("iterative_refine: no samples");
    if (cfg.iterations < 1)
        throw std::invalid_argument("iterative_refine: iterations must be >= 1");
    if (!(cfg.eval_fraction > 0.0) || !(cfg.eval_fraction < 1.0))
        throw std::invalid_argument("iterative_refine: eval_fraction must be in (0, 1)");
    if (cfg.network.in_channels != 3)
        throw std::invalid_argument("iterative_refine: predictor takes 3 input channels");
    validate(cfg.network);
    validate(cfg.train);
    const int w = samples.front().target.width;
    const int h = samples.front().target.height;
    for (const auto& s : samples)
        if (s.target.width != w || s.target.height != h)
            throw std::invalid_argument("iterative_refine: target dimensions are not uniform");

    bool any_eval = false;
    for (const auto& s : samples) any_eval = any_eval || s.eval;
    if (!any_eval) {
        const auto k = static_cast<std::size_t>(
            std::llround(cfg.eval_fraction * static_cast<double>(samples.size())));
        for (std::size_t i = samples.size() - k; i < samples.size(); ++i) samples[i].eval = true;
    }
    std::vector<std::size_t> train_idx, eval_idx;
    for (std::size_t i = 0; i < samples.size(); ++i)
        (samples[i].eval ? eval_idx : train_idx).push_back(i);
    if (train_idx.empty() || eval_idx.empty())
        throw std::invalid_argument("iterative_refine: both splits must be non-empty");

    // Network inputs depend only on the RGB images; prepare them once.
    std::vector<Tensor> inputs;
    inputs.reserve(samples.size());
    for (const auto& s : samples) inputs.push_back(rgb_to_input(s.rgb, cfg.network));
    std::vector<Tensor> train_inputs;
    train_inputs.reserve(train_idx.size());
    for (const auto i : train_idx) train_inputs.push_back(inputs[i]);

    // corrected_pct is cumulative: every iteration scores the current targets
    // against the holes the dataset started with, so the number can only grow.
    std::vector<DisparityRaster> train_original;
    train_original.reserve(train_idx.size());
    for (const auto i : train_idx) train_original.push_back(samples[i].target);

    RefineResult result;
    for (int t = 1; t <= cfg.iterations; ++t) {
        NetworkSpec spec = cfg.network;
        spec.seed = cfg.network.seed + static_cast<std::uint64_t>(t - 1);
        TrainConfig tcfg = cfg.train;
        tcfg.seed = cfg.train.seed + static_cast<std::uint64_t>(t - 1);

        std::vector<DisparityRaster> train_targets;
        train_targets.reserve(train_idx.size());
        for (const auto i : train_idx)
            train_targets.push_back(resize_nearest(samples[i].target, spec.width, spec.height));

        TrainResult trained;
        try {
            trained = train_on_tensors(init_model(spec), train_inputs, train_targets, tcfg);
        } catch (const std::runtime_error& e) {
            throw std::runtime_error("iteration " + std::to_string(t) + ": " + e.what());
        }

        std::vector<DisparityRaster> predictions;
        predictions.reserve(samples.size());
        for (std::size_t i = 0; i < samples.size(); ++i) {
            ForwardTrace trace = forward_traced(trained.model, Tensor(inputs[i]));
            predictions.push_back(field_to_raster(trace.output, w, h));
        }

        IterationReport report;
        report.iteration = t;
        report.loss_trace = trained.loss_trace;

        std::vector<PixelErrorSummary> parts;
        parts.reserve(eval_idx.size());
        for (const auto i : eval_idx)
            parts.push_back(accuracy_parts(predictions[i], samples[i].target,
                                           AccuracyDomain::valid_target_only));
        const PixelErrorSummary pooled = pooled_accuracy(parts);
        report.accuracy_pct = pooled.accuracy_pct;
        report.error_ratio_pct = pooled.error_ratio_pct;

        std::vector<DisparityRaster> all_after;
        all_after.reserve(samples.size());
        for (std::size_t i = 0; i < samples.size(); ++i) {
            FillOutcome outcome = fill_missing(samples[i].target, predictions[i]);
            report.replaced_total += outcome.replaced_count;
            samples[i].target = std::move(outcome.filled);
            all_after.push_back(samples[i].target);
        }
        std::vector<DisparityRaster> train_after;
        train_after.reserve(train_idx.size());
        for (const auto i : train_idx) train_after.push_back(samples[i].target);

        try {
            report.corrected_pct = corrected_pixels(train_original, train_after).corrected_pct;
        } catch (const UndefinedMetricError&) {
            report.corrected_pct.reset();
        }
        report.remaining_invalid_avg = average_invalid(all_after).average_invalid;

        result.reports.push_back(std::move(report));
        result.models.push_back(std::move(trained.model));
    }
    result.samples = std::move(samples);
    return result;
}

// --- second-stage corrector -------------------------------------------------
//
// A single-channel network mapping a damaged raster directly to a repaired
// one. The input channel count is forced to 1 (the normalized raster itself;
// RGB plays no part here). Train it with mask_invalid_targets enabled when
// the reference rasters retain holes, so the network never learns to
// reproduce the zeros — that is what makes corrected outputs hole-free.

inline PredictorModel train_corrector(
    std::span<const std::pair<DisparityRaster, DisparityRaster>> pairs,  // damaged, reference
    NetworkSpec spec, const TrainConfig& cfg) {
    if (pairs.empty()) throw std::invalid_argument("train_corrector: empty dataset");
    spec.in_channels = 1;
    validate(spec);

    std::vector<Tensor> inputs;
    std::vector<DisparityRaster> targets;
    inputs.reserve(pairs.size());
    targets.reserve(pairs.size());
    for (const auto& [damaged, reference] : pairs) {
        require_same_size(damaged, reference, "train_corrector");
        inputs.push_back(raster_to_input(damaged, spec));
        targets.push_back(resize_nearest(reference, spec.width, spec.height));
    }
    return train_on_tensors(init_model(spec), inputs, targets, cfg).model;
}

// Valid pixels pass through untouched; invalid pixels take the network's
// prediction.
inline DisparityRaster correct(const PredictorModel& model, const DisparityRaster& damaged) {
    const DisparityRaster predicted =
        predict_from_raster(model, damaged, damaged.width, damaged.height);
    return fill_missing(damaged, predicted).filled;
}

// --- report serialization ---------------------------------------------------

inline nlohmann::json to_json(const IterationReport& r) {
    nlohmann::json j{{"iteration", r.iteration},
                     {"loss_trace", r.loss_trace},
                     {"accuracy_pct", r.accuracy_pct},
                     {"error_ratio_pct", r.error_ratio_pct},
                     {"remaining_invalid_avg", r.remaining_invalid_avg},
                     {"replaced_total", r.replaced_total}};
    if (r.corrected_pct)
        j["corrected_pct"] = *r.corrected_pct;
    else
        j["corrected_pct"] = nullptr;
    return j;
}

inline void write_reports_jsonl(const std::string& path, std::span<const IterationReport> reports) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open report file for writing: " + path);
    for (const auto& r : reports) out << to_json(r).dump() << '\n';
    if (!out) throw std::runtime_error("report write failed: " + path);
}

// Per-iteration results in the layout of the paper-style summary table. The
// corrected column is left empty on iterations where it is undefined.
inline void write_table_csv(const std::string& path, std::span<const IterationReport> reports) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open table file for writing: " + path);
    out << "iteration,accuracy_pct,corrected_pct,remaining_invalid_avg,replaced_total\n";
    char buf[160];
    for (const auto& r : reports) {
        if (r.corrected_pct)
            std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,%.6f,%llu\n", r.iteration,
                          r.accuracy_pct, *r.corrected_pct, r.remaining_invalid_avg,
                          static_cast<unsigned long long>(r.replaced_total));
        else
            std::snprintf(buf, sizeof buf, "%d,%.6f,,%.6f,%llu\n", r.iteration, r.accuracy_pct,
                          r.remaining_invalid_avg,
                          static_cast<unsigned long long>(r.replaced_total));
        out << buf;
    }
    if (!out) throw std::runtime_error("table write failed: " + path);
}

} // namespace depthfill
