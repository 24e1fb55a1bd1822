#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include <json.hpp>

#include "depthfill/refine.hpp"
#include "depthfill/synth.hpp"
#include "oracles.hpp"

using namespace depthfill;
using Catch::Approx;

namespace fs = std::filesystem;

namespace {

std::vector<RefineSample> make_samples(int count, double hole_fraction, std::uint64_t seed) {
    SceneConfig scene;
    scene.width = 32;
    scene.height = 32;
    scene.object_count = 3;
    scene.hole_fraction = hole_fraction;
    scene.seed = seed;
    std::vector<RefineSample> samples;
    for (auto& s : generate_dataset(scene, count)) {
        RefineSample r;
        r.id = "s" + std::to_string(samples.size());
        r.rgb = std::move(s.rgb);
        r.target = std::move(s.holed);
        samples.push_back(std::move(r));
    }
    return samples;
}

RefineConfig mini_config(int iterations) {
    RefineConfig cfg;
    cfg.iterations = iterations;
    cfg.eval_fraction = 0.25;
    cfg.network.width = 32;
    cfg.network.height = 32;
    cfg.network.levels = 2;
    cfg.network.base_channels = 4;
    cfg.network.in_channels = 3;
    cfg.network.seed = 100;
    cfg.train.epochs = 4;
    cfg.train.learning_rate = 0.5;
    cfg.train.batch_size = 4;
    cfg.train.seed = 200;
    return cfg;
}

fs::path temp_path(const char* stem, const char* ext) {
    return fs::temp_directory_path() /
           (std::string(stem) + "-" + std::to_string(::getpid()) + ext);
}

} // namespace

TEST_CASE("iterative_refine produces one report per iteration with sane fields") {
    const RefineConfig cfg = mini_config(2);
    const RefineResult res = iterative_refine(make_samples(12, 0.3, 1000), cfg);

    REQUIRE(res.reports.size() == 2);
    REQUIRE(res.models.size() == 2);
    REQUIRE(res.samples.size() == 12);
    CHECK(res.samples.front().id == "s0");

    for (std::size_t i = 0; i < res.reports.size(); ++i) {
        const IterationReport& r = res.reports[i];
        CHECK(r.iteration == static_cast<int>(i) + 1);
        CHECK(r.loss_trace.size() == 4);
        CHECK(std::isfinite(r.accuracy_pct));
        CHECK(r.accuracy_pct == Approx(100.0 - r.error_ratio_pct));
        CHECK(r.remaining_invalid_avg >= 0.0);
    }
    // Fills never reopen holes, so the remaining-invalid average cannot grow.
    CHECK(res.reports[1].remaining_invalid_avg <= res.reports[0].remaining_invalid_avg);

    // Each iteration trains a different model (fresh seed).
    CHECK(res.models[0].spec.seed == cfg.network.seed);
    CHECK(res.models[1].spec.seed == cfg.network.seed + 1);
    CHECK(res.models[0].parameters != res.models[1].parameters);
}

TEST_CASE("iterative_refine is deterministic") {
    const RefineConfig cfg = mini_config(2);
    const RefineResult a = iterative_refine(make_samples(12, 0.3, 1000), cfg);
    const RefineResult b = iterative_refine(make_samples(12, 0.3, 1000), cfg);
    REQUIRE(a.reports.size() == b.reports.size());
    for (std::size_t i = 0; i < a.reports.size(); ++i) {
        CHECK(a.reports[i].accuracy_pct == b.reports[i].accuracy_pct);
        CHECK(a.reports[i].corrected_pct == b.reports[i].corrected_pct);
        CHECK(a.reports[i].remaining_invalid_avg == b.reports[i].remaining_invalid_avg);
        CHECK(a.reports[i].replaced_total == b.reports[i].replaced_total);
        CHECK(a.models[i].parameters == b.models[i].parameters);
    }
    for (std::size_t i = 0; i < a.samples.size(); ++i)
        CHECK(a.samples[i].target.codes == b.samples[i].target.codes);
}

TEST_CASE("refinement preserves valid pixels and never punches new holes") {
    const std::vector<RefineSample> before = make_samples(8, 0.3, 55);
    const RefineResult res = iterative_refine(before, mini_config(2));
    for (std::size_t i = 0; i < before.size(); ++i) {
        const auto& orig = before[i].target.codes;
        const auto& fin = res.samples[i].target.codes;
        REQUIRE(orig.size() == fin.size());
        for (std::size_t p = 0; p < orig.size(); ++p) {
            if (orig[p] != 0) {
                CHECK(fin[p] == orig[p]);
            }
            if (orig[p] == 0 && fin[p] == 0) continue;  // hole may persist
        }
        CHECK(oracle::invalid_count(res.samples[i].target) <=
              oracle::invalid_count(before[i].target));
    }
}

TEST_CASE("hole-free inputs leave corrected_pct undefined and targets untouched") {
    const std::vector<RefineSample> before = make_samples(8, 0.0, 77);
    const RefineResult res = iterative_refine(before, mini_config(1));
    REQUIRE(res.reports.size() == 1);
    CHECK_FALSE(res.reports[0].corrected_pct.has_value());
    CHECK(res.reports[0].replaced_total == 0);
    CHECK(res.reports[0].remaining_invalid_avg == 0.0);
    for (std::size_t i = 0; i < before.size(); ++i)
        CHECK(res.samples[i].target.codes == before[i].target.codes);
}

TEST_CASE("explicit eval flags override the fraction split") {
    std::vector<RefineSample> samples = make_samples(6, 0.3, 31);
    samples[0].eval = true;  // only the first sample evaluates
    RefineConfig cfg = mini_config(1);
    cfg.train.epochs = 2;
    const RefineResult res = iterative_refine(samples, cfg);
    CHECK(res.samples[0].eval);
    for (std::size_t i = 1; i < res.samples.size(); ++i) CHECK_FALSE(res.samples[i].eval);
}

TEST_CASE("iterative_refine validates its inputs") {
    const RefineConfig cfg = mini_config(1);
    CHECK_THROWS_AS(iterative_refine({}, cfg), std::invalid_argument);

    RefineConfig bad = cfg;
    bad.iterations = 0;
    CHECK_THROWS_AS(iterative_refine(make_samples(6, 0.2, 1), bad), std::invalid_argument);

    bad = cfg;
    bad.eval_fraction = 0.0;
    CHECK_THROWS_AS(iterative_refine(make_samples(6, 0.2, 1), bad), std::invalid_argument);
    bad.eval_fraction = 1.0;
    CHECK_THROWS_AS(iterative_refine(make_samples(6, 0.2, 1), bad), std::invalid_argument);

    bad = cfg;
    bad.network.in_channels = 1;
    CHECK_THROWS_AS(iterative_refine(make_samples(6, 0.2, 1), bad), std::invalid_argument);

    // All-eval datasets leave nothing to train on.
    std::vector<RefineSample> all_eval = make_samples(4, 0.2, 1);
    for (auto& s : all_eval) s.eval = true;
    CHECK_THROWS_AS(iterative_refine(all_eval, cfg), std::invalid_argument);

    // Mixed resolutions are rejected.
    std::vector<RefineSample> mixed = make_samples(4, 0.2, 1);
    mixed[2].target = DisparityRaster(16, 16);
    CHECK_THROWS_AS(iterative_refine(mixed, cfg), std::invalid_argument);
}

TEST_CASE("a diverging iteration names itself") {
    RefineConfig cfg = mini_config(2);
    cfg.train.learning_rate = 1e30;
    try {
        iterative_refine(make_samples(6, 0.2, 9), cfg);
        FAIL("expected divergence");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("iteration") != std::string::npos);
    }
}

TEST_CASE("train_corrector learns a single-channel repair model") {
    SceneConfig scene;
    scene.width = 32;
    scene.height = 32;
    scene.object_count = 3;
    scene.hole_fraction = 0.3;
    scene.seed = 4000;
    const auto ds = generate_dataset(scene, 4);

    std::vector<std::pair<DisparityRaster, DisparityRaster>> pairs;
    for (const auto& s : ds) pairs.emplace_back(s.holed, s.truth);

    NetworkSpec spec;
    spec.width = 32;
    spec.height = 32;
    spec.levels = 2;
    spec.base_channels = 4;
    spec.in_channels = 3;  // forced to 1 internally
    spec.seed = 9;
    TrainConfig cfg;
    cfg.epochs = 6;
    cfg.learning_rate = 1.0;
    cfg.batch_size = 2;
    cfg.mask_invalid_targets = true;
    cfg.seed = 10;

    const PredictorModel model = train_corrector(pairs, spec, cfg);
    CHECK(model.spec.in_channels == 1);
    CHECK(model.parameters.size() == parameter_count(model.spec));

    // correct() passes valid pixels through and never adds holes.
    const DisparityRaster& damaged = ds[0].holed;
    const DisparityRaster repaired = correct(model, damaged);
    for (std::size_t i = 0; i < damaged.codes.size(); ++i)
        if (damaged.codes[i] != 0) CHECK(repaired.codes[i] == damaged.codes[i]);
    CHECK(oracle::invalid_count(repaired) <= oracle::invalid_count(damaged));

    // Hole-free input comes back unchanged.
    const DisparityRaster untouched = correct(model, ds[0].truth);
    CHECK(untouched.codes == ds[0].truth.codes);

    CHECK_THROWS_AS(train_corrector({}, spec, cfg), std::invalid_argument);
    std::vector<std::pair<DisparityRaster, DisparityRaster>> ragged;
    ragged.emplace_back(DisparityRaster(8, 8), DisparityRaster(4, 4));
    CHECK_THROWS_AS(train_corrector(ragged, spec, cfg), std::invalid_argument);
}

TEST_CASE("an overfit corrector beats the damaged baseline on one scene") {
    SceneConfig scene;
    scene.width = 32;
    scene.height = 32;
    scene.object_count = 3;
    scene.hole_fraction = 0.35;
    scene.seed = 5150;
    const SyntheticSample s = generate_scene(scene);

    std::vector<std::pair<DisparityRaster, DisparityRaster>> pairs;
    pairs.emplace_back(s.holed, s.truth);

    NetworkSpec spec;
    spec.width = 32;
    spec.height = 32;
    spec.levels = 2;
    spec.base_channels = 4;
    spec.seed = 3;
    TrainConfig cfg;
    cfg.epochs = 120;
    cfg.learning_rate = 0.5;
    cfg.batch_size = 1;
    cfg.mask_invalid_targets = true;
    cfg.seed = 4;

    const PredictorModel model = train_corrector(pairs, spec, cfg);
    const DisparityRaster repaired = correct(model, s.holed);

    const double base = oracle::accuracy_pct(s.holed, s.truth, false);
    const double fixed = oracle::accuracy_pct(repaired, s.truth, false);
    INFO("baseline " << base << " repaired " << fixed);
    CHECK(fixed > base);
}

TEST_CASE("report writers emit stable JSONL and CSV") {
    IterationReport a;
    a.iteration = 1;
    a.loss_trace = {0.5, 0.25};
    a.accuracy_pct = 90.0;
    a.error_ratio_pct = 10.0;
    a.corrected_pct = 50.0;
    a.remaining_invalid_avg = 12.0;
    a.replaced_total = 34;

    IterationReport b;
    b.iteration = 2;
    b.loss_trace = {0.125};
    b.accuracy_pct = 91.5;
    b.error_ratio_pct = 8.5;
    b.remaining_invalid_avg = 0.0;
    b.replaced_total = 0;

    const std::vector<IterationReport> reports{a, b};

    const fs::path jsonl = temp_path("reports", ".jsonl");
    write_reports_jsonl(jsonl.string(), reports);
    std::ifstream jin(jsonl);
    std::string line;
    REQUIRE(std::getline(jin, line));
    nlohmann::json j1 = nlohmann::json::parse(line);
    CHECK(j1["iteration"] == 1);
    CHECK(j1["accuracy_pct"] == Approx(90.0));
    CHECK(j1["corrected_pct"] == Approx(50.0));
    CHECK(j1["loss_trace"].size() == 2);
    REQUIRE(std::getline(jin, line));
    nlohmann::json j2 = nlohmann::json::parse(line);
    CHECK(j2["corrected_pct"].is_null());
    CHECK_FALSE(std::getline(jin, line));
    fs::remove(jsonl);

    const fs::path csv = temp_path("table", ".csv");
    write_table_csv(csv.string(), reports);
    std::ifstream cin_(csv);
    REQUIRE(std::getline(cin_, line));
    CHECK(line == "iteration,accuracy_pct,corrected_pct,remaining_invalid_avg,replaced_total");
    REQUIRE(std::getline(cin_, line));
    CHECK(line == "1,90.000000,50.000000,12.000000,34");
    REQUIRE(std::getline(cin_, line));
    CHECK(line == "2,91.500000,,0.000000,0");
    CHECK_FALSE(std::getline(cin_, line));
    fs::remove(csv);
}
