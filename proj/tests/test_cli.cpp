#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include "depthfill/manifest.hpp"
#include "depthfill/metrics.hpp"
#include "depthfill/png_io.hpp"
#include "depthfill/predictor.hpp"

using namespace depthfill;
using Catch::Approx;

namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("depthfill-cli-" + std::to_string(::getpid()) + "-" +
                std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    static int& counter() {
        static int c = 0;
        return c;
    }
    std::string str(const char* name) const { return (path / name).string(); }
};

struct RunResult {
    int exit_code = -1;
    std::string output;  // stdout + stderr
};

RunResult run_cli(const std::string& args) {
    static int invocation = 0;
    const fs::path log = fs::temp_directory_path() /
                         ("depthfill-cli-log-" + std::to_string(::getpid()) + "-" +
                          std::to_string(invocation++) + ".txt");
    const std::string cmd =
        std::string("\"") + DEPTHFILL_CLI_PATH + "\" " + args + " > \"" + log.string() +
        "\" 2>&1";
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(log);
    r.output.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    fs::remove(log);
    return r;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// A config small enough that refine and train-corrector finish in well under
// a second, with scenes whose structured holes fit the hole budget.
nlohmann::json tiny_config() {
    return {
        {"rig", {{"baseline_m", 0.22}, {"focal_px", 2262.52}}},
        {"network",
         {{"width", 16}, {"height", 16}, {"levels", 1}, {"base_channels", 2}, {"seed", 50}}},
        {"training",
         {{"epochs", 2}, {"learning_rate", 0.5}, {"batch_size", 4}, {"seed", 60}}},
        {"refine", {{"iterations", 2}, {"eval_fraction", 0.25}}},
        {"scene",
         {{"width", 16},
          {"height", 16},
          {"object_count", 2},
          {"hole_fraction", 0.3},
          {"seed", 70},
          {"count", 8}}},
        {"output_dir", "out"},
    };
}

std::string write_config(const TempDir& dir, const nlohmann::json& j) {
    const std::string path = dir.str("config.json");
    std::ofstream(path) << j.dump(2) << "\n";
    return path;
}

} // namespace

TEST_CASE("cli rejects unknown commands and missing required options") {
    CHECK(run_cli("").exit_code != 0);
    CHECK(run_cli("bogus").exit_code != 0);
    CHECK(run_cli("synth").exit_code != 0);      // --config is required
    CHECK(run_cli("stats --manifest /nonexistent.jsonl").exit_code != 0);
}

TEST_CASE("synth writes a deterministic dataset with a manifest") {
    TempDir dir;
    const std::string config = write_config(dir, tiny_config());

    const RunResult first = run_cli("synth --config " + config + " --out " + dir.str("a"));
    INFO(first.output);
    REQUIRE(first.exit_code == 0);
    CHECK(first.output.find("samples,8") != std::string::npos);
    CHECK(first.output.find("average_invalid,") != std::string::npos);
    CHECK(first.output.find("invalid_fraction_pct,") != std::string::npos);

    const Manifest m = load_manifest(dir.str("a/manifest.jsonl"));
    REQUIRE(m.entries.size() == 8);
    int eval_count = 0;
    for (const auto& e : m.entries) {
        CHECK(fs::exists(e.rgb_path));
        CHECK(fs::exists(e.disparity_path));
        CHECK(fs::exists(e.truth_path));
        if (e.split == Split::eval) ++eval_count;
    }
    CHECK(eval_count == 2);  // round(0.25 * 8)

    // The holed rasters carry exactly the configured hole fraction.
    const DisparityRaster holed = read_disparity_png(m.entries[0].disparity_path);
    CHECK(invalid_count(holed) == 77);  // round(0.3 * 256)

    // A rerun reproduces every byte.
    const RunResult second = run_cli("synth --config " + config + " --out " + dir.str("b"));
    REQUIRE(second.exit_code == 0);
    CHECK(slurp(dir.str("a/manifest.jsonl")) == slurp(dir.str("b/manifest.jsonl")));
    CHECK(slurp(dir.str("a/synth_0000_rgb.png")) == slurp(dir.str("b/synth_0000_rgb.png")));
    CHECK(slurp(dir.str("a/synth_0003_holed.png")) == slurp(dir.str("b/synth_0003_holed.png")));

    // Config without a scene section cannot synthesize.
    nlohmann::json no_scene = tiny_config();
    no_scene.erase("scene");
    const std::string config2 = write_config(dir, no_scene);
    CHECK(run_cli("synth --config " + config2 + " --out " + dir.str("c")).exit_code != 0);
}

TEST_CASE("stats reports per-image counts and the dataset average") {
    TempDir dir;
    RgbImage rgb(4, 4);
    DisparityRaster three(4, 4, std::vector<std::uint16_t>(16, 9));
    three.codes[0] = three.codes[5] = three.codes[10] = 0;
    DisparityRaster five(4, 4, std::vector<std::uint16_t>(16, 9));
    for (int i = 0; i < 5; ++i) five.codes[i] = 0;

    write_rgb_png(dir.str("a_rgb.png"), rgb);
    write_rgb_png(dir.str("b_rgb.png"), rgb);
    write_disparity_png(dir.str("a_disp.png"), three);
    write_disparity_png(dir.str("b_disp.png"), five);
    Manifest m;
    m.entries.push_back({"a", "a_rgb.png", "a_disp.png", "", Split::train});
    m.entries.push_back({"b", "b_rgb.png", "b_disp.png", "", Split::train});
    save_manifest(dir.str("manifest.jsonl"), m);

    const RunResult r = run_cli("stats --manifest " + dir.str("manifest.jsonl"));
    INFO(r.output);
    REQUIRE(r.exit_code == 0);
    CHECK(r.output.find("a,3") != std::string::npos);
    CHECK(r.output.find("b,5") != std::string::npos);
    CHECK(r.output.find("average_invalid,4.00") != std::string::npos);
    CHECK(r.output.find("invalid_fraction_pct,25.00") != std::string::npos);
}

TEST_CASE("refine runs end to end and is byte-reproducible") {
    TempDir dir;
    const std::string config = write_config(dir, tiny_config());
    REQUIRE(run_cli("synth --config " + config + " --out " + dir.str("data")).exit_code == 0);
    const std::string manifest = dir.str("data/manifest.jsonl");

    const RunResult r1 =
        run_cli("refine --manifest " + manifest + " --config " + config + " --out " + dir.str("r1"));
    INFO(r1.output);
    REQUIRE(r1.exit_code == 0);
    CHECK(r1.output.find("iteration 1:") != std::string::npos);
    CHECK(r1.output.find("iteration 2:") != std::string::npos);

    // Table: header plus one row per iteration.
    const std::string table = slurp(dir.str("r1/table.csv"));
    CHECK(table.find("iteration,accuracy_pct,corrected_pct,remaining_invalid_avg,replaced_total") ==
          0);
    CHECK(std::count(table.begin(), table.end(), '\n') == 3);

    std::ifstream reports(dir.str("r1/reports.jsonl"));
    std::string line;
    int lines = 0;
    while (std::getline(reports, line)) {
        const nlohmann::json j = nlohmann::json::parse(line);
        CHECK(j["iteration"] == ++lines);
        CHECK(j.contains("accuracy_pct"));
    }
    CHECK(lines == 2);

    CHECK(fs::exists(dir.str("r1/checkpoints/iter_01.ckpt")));
    CHECK(fs::exists(dir.str("r1/checkpoints/iter_02.ckpt")));
    const Manifest refined = load_manifest(dir.str("r1/refined/manifest.jsonl"));
    CHECK(refined.entries.size() == 8);

    // Refined rasters only ever gain pixels.
    const Manifest source = load_manifest(manifest);
    for (std::size_t i = 0; i < refined.entries.size(); ++i) {
        const DisparityRaster before = read_disparity_png(source.entries[i].disparity_path);
        const DisparityRaster after = read_disparity_png(refined.entries[i].disparity_path);
        CHECK(invalid_count(after) <= invalid_count(before));
    }

    const RunResult r2 =
        run_cli("refine --manifest " + manifest + " --config " + config + " --out " + dir.str("r2"));
    REQUIRE(r2.exit_code == 0);
    CHECK(slurp(dir.str("r1/table.csv")) == slurp(dir.str("r2/table.csv")));
    CHECK(slurp(dir.str("r1/reports.jsonl")) == slurp(dir.str("r2/reports.jsonl")));
    CHECK(slurp(dir.str("r1/checkpoints/iter_01.ckpt")) ==
          slurp(dir.str("r2/checkpoints/iter_01.ckpt")));
}

TEST_CASE("fill applies a predictor checkpoint across a manifest") {
    TempDir dir;
    const std::string config = write_config(dir, tiny_config());
    REQUIRE(run_cli("synth --config " + config + " --out " + dir.str("data")).exit_code == 0);

    NetworkSpec spec;
    spec.width = 16;
    spec.height = 16;
    spec.levels = 1;
    spec.base_channels = 2;
    spec.in_channels = 3;
    spec.seed = 321;
    save_checkpoint(dir.str("init.ckpt"), init_model(spec));

    const RunResult r = run_cli("fill --manifest " + dir.str("data/manifest.jsonl") +
                                " --checkpoint " + dir.str("init.ckpt") + " --out " +
                                dir.str("filled") + " --jobs 2");
    INFO(r.output);
    REQUIRE(r.exit_code == 0);

    const nlohmann::json summary = nlohmann::json::parse(slurp(dir.str("filled/summary.json")));
    CHECK(summary["images"] == 8);
    CHECK(summary["failures"] == 0);
    CHECK(summary["invalid_before_total"] == 8 * 77);

    const std::string report = slurp(dir.str("filled/report.csv"));
    CHECK(report.find("id,status,invalid_before,replaced,remaining_invalid") == 0);
    CHECK(report.find("synth_0000,ok,77,") != std::string::npos);

    const Manifest m = load_manifest(dir.str("data/manifest.jsonl"));
    const DisparityRaster before = read_disparity_png(m.entries[0].disparity_path);
    const DisparityRaster after = read_disparity_png(dir.str("filled/synth_0000.png"));
    for (std::size_t i = 0; i < before.codes.size(); ++i)
        if (before.codes[i] != 0) CHECK(after.codes[i] == before.codes[i]);

    // A corrector (1-channel) checkpoint is rejected by fill.
    NetworkSpec corrector_spec = spec;
    corrector_spec.in_channels = 1;
    save_checkpoint(dir.str("corrector-like.ckpt"), init_model(corrector_spec));
    CHECK(run_cli("fill --manifest " + dir.str("data/manifest.jsonl") + " --checkpoint " +
                  dir.str("corrector-like.ckpt") + " --out " + dir.str("x"))
              .exit_code != 0);
}

TEST_CASE("eval scores perfect predictions at exactly 100") {
    TempDir dir;
    const std::string config = write_config(dir, tiny_config());
    REQUIRE(run_cli("synth --config " + config + " --out " + dir.str("data")).exit_code == 0);

    const Manifest m = load_manifest(dir.str("data/manifest.jsonl"));
    fs::create_directories(dir.str("preds"));
    for (const auto& e : m.entries) {
        const DisparityRaster target = read_disparity_png(e.disparity_path);
        write_disparity_png((fs::path(dir.str("preds")) / (e.id + ".png")).string(), target);
    }

    const RunResult r = run_cli("eval --manifest " + dir.str("data/manifest.jsonl") +
                                " --pred-dir " + dir.str("preds") + " --out " + dir.str("eval"));
    INFO(r.output);
    REQUIRE(r.exit_code == 0);
    const nlohmann::json summary = nlohmann::json::parse(slurp(dir.str("eval/summary.json")));
    CHECK(summary["failures"] == 0);
    CHECK(summary["accuracy_pct"].get<double>() == Approx(100.0));
    CHECK(summary["masked_accuracy_pct"].get<double>() == Approx(100.0));

    // A missing prediction file fails that row and flips the exit code.
    fs::remove(fs::path(dir.str("preds")) / (m.entries[0].id + ".png"));
    const RunResult broken =
        run_cli("eval --manifest " + dir.str("data/manifest.jsonl") + " --pred-dir " +
                dir.str("preds") + " --out " + dir.str("eval2"));
    CHECK(broken.exit_code != 0);
    const nlohmann::json summary2 = nlohmann::json::parse(slurp(dir.str("eval2/summary.json")));
    CHECK(summary2["failures"] == 1);
}

TEST_CASE("train-corrector fits a 1-channel model and correct applies it") {
    TempDir dir;
    const std::string config = write_config(dir, tiny_config());
    REQUIRE(run_cli("synth --config " + config + " --out " + dir.str("data")).exit_code == 0);
    const std::string manifest = dir.str("data/manifest.jsonl");

    const RunResult trained = run_cli("train-corrector --manifest " + manifest + " --config " +
                                      config + " --out " + dir.str("tc"));
    INFO(trained.output);
    REQUIRE(trained.exit_code == 0);
    const PredictorModel model = load_checkpoint(dir.str("tc/corrector.ckpt"));
    CHECK(model.spec.in_channels == 1);

    const RunResult corrected = run_cli("correct --manifest " + manifest + " --checkpoint " +
                                        dir.str("tc/corrector.ckpt") + " --out " +
                                        dir.str("fixed"));
    INFO(corrected.output);
    REQUIRE(corrected.exit_code == 0);

    const Manifest m = load_manifest(manifest);
    const DisparityRaster damaged = read_disparity_png(m.entries[0].disparity_path);
    const DisparityRaster repaired = read_disparity_png(dir.str("fixed/synth_0000.png"));
    for (std::size_t i = 0; i < damaged.codes.size(); ++i)
        if (damaged.codes[i] != 0) CHECK(repaired.codes[i] == damaged.codes[i]);
    CHECK(invalid_count(repaired) <= invalid_count(damaged));

    // And a 3-channel predictor checkpoint is rejected by correct.
    NetworkSpec spec;
    spec.width = 16;
    spec.height = 16;
    spec.levels = 1;
    spec.base_channels = 2;
    spec.seed = 5;
    save_checkpoint(dir.str("rgb.ckpt"), init_model(spec));
    CHECK(run_cli("correct --manifest " + manifest + " --checkpoint " + dir.str("rgb.ckpt") +
                  " --out " + dir.str("y"))
              .exit_code != 0);

    // Manifests without truth paths cannot train the corrector.
    Manifest no_truth = m;
    for (auto& e : no_truth.entries) e.truth_path.clear();
    save_manifest(dir.str("no_truth.jsonl"), no_truth);
    CHECK(run_cli("train-corrector --manifest " + dir.str("no_truth.jsonl") + " --config " +
                  config + " --out " + dir.str("tc2"))
              .exit_code != 0);
}

TEST_CASE("manifest-gen pairs rgb and disparity trees") {
    TempDir dir;
    fs::create_directories(dir.str("rgb/sub"));
    fs::create_directories(dir.str("disp"));
    RgbImage rgb(4, 4);
    DisparityRaster disp(4, 4, std::vector<std::uint16_t>(16, 3));
    write_rgb_png(dir.str("rgb/aachen_01_leftImg8bit.png"), rgb);
    write_disparity_png(dir.str("disp/aachen_01_disparity.png"), disp);
    write_rgb_png(dir.str("rgb/sub/plain.png"), rgb);
    write_disparity_png(dir.str("disp/plain.png"), disp);
    write_rgb_png(dir.str("rgb/unmatched_leftImg8bit.png"), rgb);

    const std::string out = dir.str("gen.jsonl");
    const RunResult r = run_cli("manifest-gen --rgb-dir " + dir.str("rgb") + " --disparity-dir " +
                                dir.str("disp") + " --out " + out + " --eval-fraction 0.5");
    INFO(r.output);
    REQUIRE(r.exit_code == 0);
    const Manifest m = load_manifest(out);
    REQUIRE(m.entries.size() == 2);
    CHECK(m.entries[0].id == "aachen_01");
    CHECK(m.entries[1].id == "plain");
    CHECK(m.entries[0].split == Split::train);
    CHECK(m.entries[1].split == Split::eval);

    fs::create_directories(dir.str("empty"));
    CHECK(run_cli("manifest-gen --rgb-dir " + dir.str("empty") + " --disparity-dir " +
                  dir.str("empty") + " --out " + dir.str("none.jsonl"))
              .exit_code != 0);
}
