#pragma once

#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "depthfill/manifest.hpp"
#include "depthfill/predictor.hpp"
#include "depthfill/raster.hpp"
#include "depthfill/refine.hpp"
#include "depthfill/synth.hpp"

namespace depthfill {

struct RefineParams {
    int iterations = 3;
    double eval_fraction = 0.2;

    bool operator==(const RefineParams&) const = default;
};

// Whole-pipeline configuration. Every field is addressable from the config
// file; omitted sections keep these defaults.
struct PipelineConfig {
    CameraRig rig{0.22, 2262.52};
    NetworkSpec network;
    TrainConfig training;
    RefineParams refine;
    std::optional<SceneConfig> scene;
    int scene_count = 50;  // samples per cmd_synth run, stored inside "scene"
    std::string output_dir = "out";

    bool operator==(const PipelineConfig&) const = default;
};

inline void validate(const PipelineConfig& cfg) {
    if (cfg.rig.baseline_m <= 0.0 || cfg.rig.focal_px <= 0.0)
        throw std::invalid_argument("config: rig baseline and focal length must be positive");
    validate(cfg.network);
    validate(cfg.training);
    if (cfg.refine.iterations < 1)
        throw std::invalid_argument("config: refine.iterations must be >= 1");
    if (!(cfg.refine.eval_fraction > 0.0) || !(cfg.refine.eval_fraction < 1.0))
        throw std::invalid_argument("config: refine.eval_fraction must be in (0, 1)");
    if (cfg.scene) {
        validate(*cfg.scene);
        if (!(cfg.scene->rig == cfg.rig))
            throw std::invalid_argument("config: the scene uses the pipeline rig");
    }
    if (cfg.scene_count < 1) throw std::invalid_argument("config: scene.count must be >= 1");
    if (cfg.output_dir.empty()) throw std::invalid_argument("config: output_dir must be set");
}

inline PipelineConfig config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw std::invalid_argument("config: root must be an object");
    detail::check_keys(j, {"rig", "network", "training", "refine", "scene", "output_dir"},
                       "config");
    PipelineConfig cfg;
    if (j.contains("rig")) {
        const auto& r = j["rig"];
        detail::check_keys(r, {"baseline_m", "focal_px"}, "config.rig");
        if (r.contains("baseline_m")) r["baseline_m"].get_to(cfg.rig.baseline_m);
        if (r.contains("focal_px")) r["focal_px"].get_to(cfg.rig.focal_px);
    }
    if (j.contains("network")) {
        const auto& n = j["network"];
        detail::check_keys(
            n, {"width", "height", "levels", "base_channels", "in_channels", "seed"},
            "config.network");
        if (n.contains("width")) n["width"].get_to(cfg.network.width);
        if (n.contains("height")) n["height"].get_to(cfg.network.height);
        if (n.contains("levels")) n["levels"].get_to(cfg.network.levels);
        if (n.contains("base_channels")) n["base_channels"].get_to(cfg.network.base_channels);
        if (n.contains("in_channels")) n["in_channels"].get_to(cfg.network.in_channels);
        if (n.contains("seed")) n["seed"].get_to(cfg.network.seed);
    }
    if (j.contains("training")) {
        const auto& t = j["training"];
        detail::check_keys(
            t, {"epochs", "learning_rate", "batch_size", "mask_invalid_targets", "seed"},
            "config.training");
        if (t.contains("epochs")) t["epochs"].get_to(cfg.training.epochs);
        if (t.contains("learning_rate")) t["learning_rate"].get_to(cfg.training.learning_rate);
        if (t.contains("batch_size")) t["batch_size"].get_to(cfg.training.batch_size);
        if (t.contains("mask_invalid_targets"))
            t["mask_invalid_targets"].get_to(cfg.training.mask_invalid_targets);
        if (t.contains("seed")) t["seed"].get_to(cfg.training.seed);
    }
    if (j.contains("refine")) {
        const auto& r = j["refine"];
        detail::check_keys(r, {"iterations", "eval_fraction"}, "config.refine");
        if (r.contains("iterations")) r["iterations"].get_to(cfg.refine.iterations);
        if (r.contains("eval_fraction")) r["eval_fraction"].get_to(cfg.refine.eval_fraction);
    }
    if (j.contains("scene")) {
        const auto& s = j["scene"];
        detail::check_keys(s,
                           {"width", "height", "object_count", "depth_near_m", "depth_far_m",
                            "hole_fraction", "seed", "count"},
                           "config.scene");
        SceneConfig sc;
        sc.rig = cfg.rig;  // scenes share the pipeline rig
        if (s.contains("width")) s["width"].get_to(sc.width);
        if (s.contains("height")) s["height"].get_to(sc.height);
        if (s.contains("object_count")) s["object_count"].get_to(sc.object_count);
        if (s.contains("depth_near_m")) s["depth_near_m"].get_to(sc.depth_near_m);
        if (s.contains("depth_far_m")) s["depth_far_m"].get_to(sc.depth_far_m);
        if (s.contains("hole_fraction")) s["hole_fraction"].get_to(sc.hole_fraction);
        if (s.contains("seed")) s["seed"].get_to(sc.seed);
        if (s.contains("count")) s["count"].get_to(cfg.scene_count);
        cfg.scene = sc;
    }
    if (j.contains("output_dir")) j["output_dir"].get_to(cfg.output_dir);
    validate(cfg);
    return cfg;
}

inline nlohmann::json to_json(const PipelineConfig& cfg) {
    nlohmann::ordered_json j;
    j["rig"] = {{"baseline_m", cfg.rig.baseline_m}, {"focal_px", cfg.rig.focal_px}};
    j["network"] = {{"width", cfg.network.width},
                    {"height", cfg.network.height},
                    {"levels", cfg.network.levels},
                    {"base_channels", cfg.network.base_channels},
                    {"in_channels", cfg.network.in_channels},
                    {"seed", cfg.network.seed}};
    j["training"] = {{"epochs", cfg.training.epochs},
                     {"learning_rate", cfg.training.learning_rate},
                     {"batch_size", cfg.training.batch_size},
                     {"mask_invalid_targets", cfg.training.mask_invalid_targets},
                     {"seed", cfg.training.seed}};
    j["refine"] = {{"iterations", cfg.refine.iterations},
                   {"eval_fraction", cfg.refine.eval_fraction}};
    if (cfg.scene)
        j["scene"] = {{"width", cfg.scene->width},
                      {"height", cfg.scene->height},
                      {"object_count", cfg.scene->object_count},
                      {"depth_near_m", cfg.scene->depth_near_m},
                      {"depth_far_m", cfg.scene->depth_far_m},
                      {"hole_fraction", cfg.scene->hole_fraction},
                      {"seed", cfg.scene->seed},
                      {"count", cfg.scene_count}};
    j["output_dir"] = cfg.output_dir;
    return j;
}

inline PipelineConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
    try {
        return config_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
}

inline void save_config(const std::string& path, const PipelineConfig& cfg) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open config for writing: " + path);
    out << to_json(cfg).dump(2) << '\n';
    if (!out) throw std::runtime_error("config write failed: " + path);
}

inline RefineConfig make_refine_config(const PipelineConfig& cfg) {
    RefineConfig rc;
    rc.iterations = cfg.refine.iterations;
    rc.eval_fraction = cfg.refine.eval_fraction;
    rc.network = cfg.network;
    rc.train = cfg.training;
    return rc;
}

} // namespace depthfill
