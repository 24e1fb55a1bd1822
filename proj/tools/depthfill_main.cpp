// depthfill: batch depth-map completion over PNG disparity rasters.
//
// Subcommands: synth, stats, refine, fill, correct, train-corrector, eval,
// manifest-gen. All randomness flows from config seeds; reruns with the same
// inputs produce byte-identical outputs.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "depthfill/config.hpp"
#include "depthfill/inpaint.hpp"
#include "depthfill/manifest.hpp"
#include "depthfill/metrics.hpp"
#include "depthfill/png_io.hpp"
#include "depthfill/pool.hpp"
#include "depthfill/predictor.hpp"
#include "depthfill/refine.hpp"
#include "depthfill/synth.hpp"

namespace fs = std::filesystem;
using namespace depthfill;

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

std::string fmt2(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

// Commas and newlines would corrupt the CSV; strip them from error text.
std::string csv_safe(std::string s) {
    for (auto& c : s)
        if (c == ',' || c == '\n' || c == '\r') c = ';';
    return s;
}

void write_text(const std::string& path, const std::string& body) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << body;
    if (!out) throw std::runtime_error("write failed: " + path);
}

struct SynthOpts {
    std::string config_path;
    std::string out_dir;
    int count = -1;             // -1: take scene.count from the config
    std::int64_t seed = -1;     // -1: keep the config seed
};

int run_synth(const SynthOpts& opt) {
    PipelineConfig cfg = load_config(opt.config_path);
    if (!cfg.scene) {
        std::cerr << "error: config has no scene section\n";
        return 1;
    }
    SceneConfig scene = *cfg.scene;
    if (opt.seed >= 0) scene.seed = static_cast<std::uint64_t>(opt.seed);
    const int n = opt.count > 0 ? opt.count : cfg.scene_count;
    if (n < 1) {
        std::cerr << "error: sample count must be >= 1\n";
        return 1;
    }
    const fs::path out = opt.out_dir.empty() ? fs::path(cfg.output_dir) : fs::path(opt.out_dir);
    fs::create_directories(out);

    const auto samples = generate_dataset(scene, n);
    const auto eval_from = static_cast<std::size_t>(
        n - std::llround(cfg.refine.eval_fraction * static_cast<double>(n)));

    Manifest manifest;
    std::vector<DisparityRaster> holed;
    holed.reserve(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        char id[32];
        std::snprintf(id, sizeof id, "synth_%04zu", i);
        const std::string rgb_name = std::string(id) + "_rgb.png";
        const std::string truth_name = std::string(id) + "_truth.png";
        const std::string holed_name = std::string(id) + "_holed.png";
        write_rgb_png((out / rgb_name).string(), samples[i].rgb);
        write_disparity_png((out / truth_name).string(), samples[i].truth);
        write_disparity_png((out / holed_name).string(), samples[i].holed);
        ManifestEntry e;
        e.id = id;
        e.rgb_path = rgb_name;
        e.disparity_path = holed_name;
        e.truth_path = truth_name;
        e.split = i >= eval_from ? Split::eval : Split::train;
        manifest.entries.push_back(std::move(e));
        holed.push_back(samples[i].holed);
    }
    save_manifest((out / "manifest.jsonl").string(), manifest);

    const InvalidStats stats = average_invalid(holed);
    std::cout << "samples," << n << "\n"
              << "average_invalid," << fmt2(stats.average_invalid) << "\n"
              << "invalid_fraction_pct," << fmt2(stats.invalid_fraction_pct) << "\n";
    return 0;
}

int run_stats(const std::string& manifest_path) {
    const Manifest m = load_manifest(manifest_path);
    std::vector<DisparityRaster> rasters;
    rasters.reserve(m.entries.size());
    std::cout << "id,invalid_count\n";
    for (const auto& e : m.entries) {
        rasters.push_back(read_disparity_png(e.disparity_path));
        std::cout << e.id << "," << invalid_count(rasters.back()) << "\n";
    }
    const InvalidStats stats = average_invalid(rasters);
    std::cout << "average_invalid," << fmt2(stats.average_invalid) << "\n"
              << "invalid_fraction_pct," << fmt2(stats.invalid_fraction_pct) << "\n";
    return 0;
}

struct RefineOpts {
    std::string manifest_path;
    std::string config_path;
    std::string out_dir;
    int iterations = -1;
    std::int64_t seed = -1;
};

int run_refine(const RefineOpts& opt) {
    PipelineConfig cfg = load_config(opt.config_path);
    RefineConfig rc = make_refine_config(cfg);
    if (opt.iterations > 0) rc.iterations = opt.iterations;
    if (opt.seed >= 0) {
        rc.network.seed = static_cast<std::uint64_t>(opt.seed);
        rc.train.seed = static_cast<std::uint64_t>(opt.seed);
    }

    const Manifest m = load_manifest(opt.manifest_path);
    std::vector<RefineSample> samples;
    samples.reserve(m.entries.size());
    for (const auto& e : m.entries) {
        RefineSample s;
        s.id = e.id;
        s.rgb = read_rgb_png(e.rgb_path);
        s.target = read_disparity_png(e.disparity_path);
        s.eval = e.split == Split::eval;
        samples.push_back(std::move(s));
    }

    RefineResult result = iterative_refine(std::move(samples), rc);

    const fs::path out = opt.out_dir.empty() ? fs::path(cfg.output_dir) : fs::path(opt.out_dir);
    fs::create_directories(out / "refined");
    fs::create_directories(out / "checkpoints");
    for (std::size_t t = 0; t < result.models.size(); ++t) {
        char name[32];
        std::snprintf(name, sizeof name, "iter_%02zu.ckpt", t + 1);
        save_checkpoint((out / "checkpoints" / name).string(), result.models[t]);
    }
    Manifest refined;
    for (std::size_t i = 0; i < result.samples.size(); ++i) {
        const auto& s = result.samples[i];
        write_disparity_png((out / "refined" / (s.id + ".png")).string(), s.target);
        ManifestEntry e;
        e.id = s.id;
        e.rgb_path = m.entries[i].rgb_path;
        e.disparity_path = s.id + ".png";
        e.truth_path = m.entries[i].truth_path;
        e.split = s.eval ? Split::eval : Split::train;
        refined.entries.push_back(std::move(e));
    }
    save_manifest((out / "refined" / "manifest.jsonl").string(), refined);
    write_reports_jsonl((out / "reports.jsonl").string(), result.reports);
    write_table_csv((out / "table.csv").string(), result.reports);

    for (const auto& r : result.reports) {
        std::cout << "iteration " << r.iteration << ": accuracy_pct=" << fmt(r.accuracy_pct)
                  << " corrected_pct=" << (r.corrected_pct ? fmt(*r.corrected_pct) : "n/a")
                  << " remaining_invalid_avg=" << fmt(r.remaining_invalid_avg) << "\n";
    }
    return 0;
}

struct BatchOpts {
    std::string manifest_path;
    std::string checkpoint_path;
    std::string out_dir;
    int jobs = 1;
};

int run_fill(const BatchOpts& opt) {
    const PredictorModel model = load_checkpoint(opt.checkpoint_path);
    if (model.spec.in_channels != 3) {
        std::cerr << "error: fill expects an RGB predictor checkpoint (3 input channels)\n";
        return 1;
    }
    const Manifest m = load_manifest(opt.manifest_path);
    const fs::path out = opt.out_dir.empty() ? fs::path("fill_out") : fs::path(opt.out_dir);
    fs::create_directories(out);

    struct Row {
        std::string error;
        std::uint64_t invalid_before = 0, replaced = 0, remaining = 0;
    };
    std::vector<Row> rows(m.entries.size());
    parallel_for(m.entries.size(), opt.jobs, [&](std::size_t i) {
        Row& row = rows[i];
        try {
            const auto& e = m.entries[i];
            const RgbImage rgb = read_rgb_png(e.rgb_path);
            const DisparityRaster target = read_disparity_png(e.disparity_path);
            row.invalid_before = invalid_count(target);
            const DisparityRaster pred = predict(model, rgb, target.width, target.height);
            FillOutcome outcome = fill_missing(target, pred);
            row.replaced = outcome.replaced_count;
            row.remaining = outcome.remaining_invalid;
            write_disparity_png((out / (e.id + ".png")).string(), outcome.filled);
        } catch (const std::exception& ex) {
            row.error = ex.what();
        }
    });

    std::string csv = "id,status,invalid_before,replaced,remaining_invalid\n";
    std::uint64_t invalid_total = 0, replaced_total = 0, remaining_total = 0, failures = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (r.error.empty()) {
            csv += m.entries[i].id + ",ok," + std::to_string(r.invalid_before) + "," +
                   std::to_string(r.replaced) + "," + std::to_string(r.remaining) + "\n";
            invalid_total += r.invalid_before;
            replaced_total += r.replaced;
            remaining_total += r.remaining;
        } else {
            csv += m.entries[i].id + ",error: " + csv_safe(r.error) + ",,,\n";
            ++failures;
        }
    }
    write_text((out / "report.csv").string(), csv);

    nlohmann::ordered_json summary;
    summary["images"] = m.entries.size();
    summary["failures"] = failures;
    summary["invalid_before_total"] = invalid_total;
    summary["replaced_total"] = replaced_total;
    summary["remaining_invalid_total"] = remaining_total;
    if (invalid_total > 0)
        summary["corrected_pct"] =
            100.0 * static_cast<double>(replaced_total) / static_cast<double>(invalid_total);
    else
        summary["corrected_pct"] = nullptr;
    write_text((out / "summary.json").string(), summary.dump(2) + "\n");
    std::cout << summary.dump(2) << "\n";
    return failures == 0 ? 0 : 1;
}

int run_correct(const BatchOpts& opt) {
    const PredictorModel model = load_checkpoint(opt.checkpoint_path);
    if (model.spec.in_channels != 1) {
        std::cerr << "error: correct expects a corrector checkpoint (1 input channel)\n";
        return 1;
    }
    const Manifest m = load_manifest(opt.manifest_path);
    const fs::path out = opt.out_dir.empty() ? fs::path("correct_out") : fs::path(opt.out_dir);
    fs::create_directories(out);

    struct Row {
        std::string error;
        std::uint64_t invalid_before = 0, remaining = 0;
    };
    std::vector<Row> rows(m.entries.size());
    parallel_for(m.entries.size(), opt.jobs, [&](std::size_t i) {
        Row& row = rows[i];
        try {
            const auto& e = m.entries[i];
            const DisparityRaster damaged = read_disparity_png(e.disparity_path);
            row.invalid_before = invalid_count(damaged);
            const DisparityRaster fixed = correct(model, damaged);
            row.remaining = invalid_count(fixed);
            write_disparity_png((out / (e.id + ".png")).string(), fixed);
        } catch (const std::exception& ex) {
            row.error = ex.what();
        }
    });

    std::string csv = "id,status,invalid_before,remaining_invalid\n";
    std::uint64_t invalid_total = 0, remaining_total = 0, failures = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (r.error.empty()) {
            csv += m.entries[i].id + ",ok," + std::to_string(r.invalid_before) + "," +
                   std::to_string(r.remaining) + "\n";
            invalid_total += r.invalid_before;
            remaining_total += r.remaining;
        } else {
            csv += m.entries[i].id + ",error: " + csv_safe(r.error) + ",,\n";
            ++failures;
        }
    }
    write_text((out / "report.csv").string(), csv);

    nlohmann::ordered_json summary;
    summary["images"] = m.entries.size();
    summary["failures"] = failures;
    summary["invalid_before_total"] = invalid_total;
    summary["remaining_invalid_total"] = remaining_total;
    write_text((out / "summary.json").string(), summary.dump(2) + "\n");
    std::cout << summary.dump(2) << "\n";
    return failures == 0 ? 0 : 1;
}

struct TrainCorrectorOpts {
    std::string manifest_path;
    std::string config_path;
    std::string out_dir;
    std::int64_t seed = -1;
};

int run_train_corrector(const TrainCorrectorOpts& opt) {
    PipelineConfig cfg = load_config(opt.config_path);
    NetworkSpec spec = cfg.network;
    TrainConfig tcfg = cfg.training;
    tcfg.mask_invalid_targets = true;  // reference rasters may retain holes
    if (opt.seed >= 0) {
        spec.seed = static_cast<std::uint64_t>(opt.seed);
        tcfg.seed = static_cast<std::uint64_t>(opt.seed);
    }

    const Manifest m = load_manifest(opt.manifest_path);
    std::vector<std::pair<DisparityRaster, DisparityRaster>> dataset;
    for (const auto& e : m.entries) {
        if (e.split != Split::train) continue;
        if (e.truth_path.empty())
            throw std::runtime_error("entry \"" + e.id + "\" has no truth_path");
        dataset.emplace_back(read_disparity_png(e.disparity_path),
                             read_disparity_png(e.truth_path));
    }
    if (dataset.empty()) throw std::runtime_error("no train-split entries in manifest");

    const PredictorModel model = train_corrector(dataset, spec, tcfg);
    const fs::path out = opt.out_dir.empty() ? fs::path(cfg.output_dir) : fs::path(opt.out_dir);
    fs::create_directories(out);
    save_checkpoint((out / "corrector.ckpt").string(), model);
    std::cout << "trained corrector on " << dataset.size() << " pairs\n"
              << "checkpoint," << (out / "corrector.ckpt").string() << "\n";
    return 0;
}

struct EvalOpts {
    std::string manifest_path;
    std::string pred_dir;
    std::string out_dir;
    int jobs = 1;
};

int run_eval(const EvalOpts& opt) {
    const Manifest m = load_manifest(opt.manifest_path);
    const fs::path out = opt.out_dir.empty() ? fs::path("eval_out") : fs::path(opt.out_dir);
    fs::create_directories(out);

    struct Row {
        std::string error;
        PixelErrorSummary all, masked;
    };
    std::vector<Row> rows(m.entries.size());
    parallel_for(m.entries.size(), opt.jobs, [&](std::size_t i) {
        Row& row = rows[i];
        try {
            const auto& e = m.entries[i];
            const DisparityRaster target = read_disparity_png(e.disparity_path);
            const DisparityRaster pred =
                read_disparity_png((fs::path(opt.pred_dir) / (e.id + ".png")).string());
            row.all = accuracy(pred, target, AccuracyDomain::all_pixels);
            row.masked = accuracy(pred, target, AccuracyDomain::valid_target_only);
        } catch (const std::exception& ex) {
            row.error = ex.what();
        }
    });

    std::string csv =
        "id,status,abs_error_sum,target_sum,error_ratio_pct,accuracy_pct,"
        "masked_error_ratio_pct,masked_accuracy_pct\n";
    std::vector<PixelErrorSummary> all_parts, masked_parts;
    std::uint64_t failures = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (r.error.empty()) {
            csv += m.entries[i].id + ",ok," + std::to_string(r.all.absolute_error_sum) + "," +
                   std::to_string(r.all.target_sum) + "," + fmt(r.all.error_ratio_pct) + "," +
                   fmt(r.all.accuracy_pct) + "," + fmt(r.masked.error_ratio_pct) + "," +
                   fmt(r.masked.accuracy_pct) + "\n";
            all_parts.push_back(r.all);
            masked_parts.push_back(r.masked);
        } else {
            csv += m.entries[i].id + ",error: " + csv_safe(r.error) + ",,,,,,\n";
            ++failures;
        }
    }
    write_text((out / "report.csv").string(), csv);

    nlohmann::ordered_json summary;
    summary["images"] = m.entries.size();
    summary["failures"] = failures;
    if (!all_parts.empty()) {
        const PixelErrorSummary pa = pooled_accuracy(all_parts);
        const PixelErrorSummary pm = pooled_accuracy(masked_parts);
        summary["accuracy_pct"] = pa.accuracy_pct;
        summary["error_ratio_pct"] = pa.error_ratio_pct;
        summary["masked_accuracy_pct"] = pm.accuracy_pct;
        summary["masked_error_ratio_pct"] = pm.error_ratio_pct;
    }
    write_text((out / "summary.json").string(), summary.dump(2) + "\n");
    std::cout << summary.dump(2) << "\n";
    return failures == 0 ? 0 : 1;
}

struct ManifestGenOpts {
    std::string rgb_dir;
    std::string disparity_dir;
    std::string out_path;
    double eval_fraction = 0.2;
};

// Pairs <stem>_leftImg8bit.png with <stem>_disparity.png (Cityscapes layout),
// or identical basenames otherwise. Recurses through both trees.
int run_manifest_gen(const ManifestGenOpts& opt) {
    std::map<std::string, fs::path> disparities;
    for (const auto& entry : fs::recursive_directory_iterator(opt.disparity_dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".png") continue;
        std::string stem = entry.path().stem().string();
        if (const auto pos = stem.rfind("_disparity"); pos != std::string::npos)
            stem = stem.substr(0, pos);
        disparities[stem] = entry.path();
    }
    std::map<std::string, fs::path> rgbs;
    for (const auto& entry : fs::recursive_directory_iterator(opt.rgb_dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".png") continue;
        std::string stem = entry.path().stem().string();
        if (const auto pos = stem.rfind("_leftImg8bit"); pos != std::string::npos)
            stem = stem.substr(0, pos);
        rgbs[stem] = entry.path();
    }

    Manifest m;
    for (const auto& [stem, rgb_path] : rgbs) {
        const auto it = disparities.find(stem);
        if (it == disparities.end()) continue;
        ManifestEntry e;
        e.id = stem;
        e.rgb_path = fs::absolute(rgb_path).string();
        e.disparity_path = fs::absolute(it->second).string();
        m.entries.push_back(std::move(e));
    }
    if (m.entries.empty()) {
        std::cerr << "error: no rgb/disparity pairs found\n";
        return 1;
    }
    const auto eval_from = m.entries.size() -
                           static_cast<std::size_t>(std::llround(
                               opt.eval_fraction * static_cast<double>(m.entries.size())));
    for (std::size_t i = eval_from; i < m.entries.size(); ++i) m.entries[i].split = Split::eval;
    save_manifest(opt.out_path, m);
    std::cout << "wrote " << m.entries.size() << " entries to " << opt.out_path << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"depth-map completion toolkit"};
    app.require_subcommand(1);
    int rc = 0;

    SynthOpts synth_opts;
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset with a manifest");
    synth->add_option("--config", synth_opts.config_path, "pipeline config (JSON)")->required();
    synth->add_option("--out", synth_opts.out_dir, "output directory (default: config output_dir)");
    synth->add_option("--count", synth_opts.count, "number of samples (default: scene.count)");
    synth->add_option("--seed", synth_opts.seed, "override the scene seed");
    synth->callback([&] { rc = run_synth(synth_opts); });

    std::string stats_manifest;
    auto* stats = app.add_subcommand("stats", "per-image and average invalid-pixel statistics");
    stats->add_option("--manifest", stats_manifest, "dataset manifest (JSON lines)")->required();
    stats->callback([&] { rc = run_stats(stats_manifest); });

    RefineOpts refine_opts;
    auto* refine = app.add_subcommand("refine", "iterative train-predict-fill refinement");
    refine->add_option("--manifest", refine_opts.manifest_path, "dataset manifest")->required();
    refine->add_option("--config", refine_opts.config_path, "pipeline config (JSON)")->required();
    refine->add_option("--out", refine_opts.out_dir, "output directory (default: config output_dir)");
    refine->add_option("--iterations", refine_opts.iterations, "override refine.iterations");
    refine->add_option("--seed", refine_opts.seed, "override network and training seeds");
    refine->callback([&] { rc = run_refine(refine_opts); });

    BatchOpts fill_opts;
    auto* fill = app.add_subcommand("fill", "fill invalid pixels from a predictor checkpoint");
    fill->add_option("--manifest", fill_opts.manifest_path, "dataset manifest")->required();
    fill->add_option("--checkpoint", fill_opts.checkpoint_path, "predictor checkpoint")->required();
    fill->add_option("--out", fill_opts.out_dir, "output directory (default: fill_out)");
    fill->add_option("--jobs", fill_opts.jobs, "worker threads (default: 1)");
    fill->callback([&] { rc = run_fill(fill_opts); });

    BatchOpts correct_opts;
    auto* correct = app.add_subcommand("correct", "repair rasters with a corrector checkpoint");
    correct->add_option("--manifest", correct_opts.manifest_path, "dataset manifest")->required();
    correct->add_option("--checkpoint", correct_opts.checkpoint_path, "corrector checkpoint")
        ->required();
    correct->add_option("--out", correct_opts.out_dir, "output directory (default: correct_out)");
    correct->add_option("--jobs", correct_opts.jobs, "worker threads (default: 1)");
    correct->callback([&] { rc = run_correct(correct_opts); });

    TrainCorrectorOpts tc_opts;
    auto* tc = app.add_subcommand("train-corrector",
                                  "train the second-stage corrector on damaged/truth pairs");
    tc->add_option("--manifest", tc_opts.manifest_path, "manifest with truth_path entries")
        ->required();
    tc->add_option("--config", tc_opts.config_path, "pipeline config (JSON)")->required();
    tc->add_option("--out", tc_opts.out_dir, "output directory (default: config output_dir)");
    tc->add_option("--seed", tc_opts.seed, "override network and training seeds");
    tc->callback([&] { rc = run_train_corrector(tc_opts); });

    EvalOpts eval_opts;
    auto* eval = app.add_subcommand("eval", "score predictions against manifest targets");
    eval->add_option("--manifest", eval_opts.manifest_path, "dataset manifest")->required();
    eval->add_option("--pred-dir", eval_opts.pred_dir, "directory of <id>.png predictions")
        ->required();
    eval->add_option("--out", eval_opts.out_dir, "output directory (default: eval_out)");
    eval->add_option("--jobs", eval_opts.jobs, "worker threads (default: 1)");
    eval->callback([&] { rc = run_eval(eval_opts); });

    ManifestGenOpts mg_opts;
    auto* mg = app.add_subcommand("manifest-gen",
                                  "build a manifest from rgb/disparity directory trees");
    mg->add_option("--rgb-dir", mg_opts.rgb_dir, "directory of RGB PNGs")->required();
    mg->add_option("--disparity-dir", mg_opts.disparity_dir, "directory of disparity PNGs")
        ->required();
    mg->add_option("--out", mg_opts.out_path, "manifest path to write")->required();
    mg->add_option("--eval-fraction", mg_opts.eval_fraction, "tail fraction marked eval");
    mg->callback([&] { rc = run_manifest_gen(mg_opts); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return rc;
}
