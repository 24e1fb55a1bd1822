#pragma once

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

namespace depthfill {

enum class Split { train, eval };

inline std::string to_string(Split s) { return s == Split::train ? "train" : "eval"; }

inline Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "eval") return Split::eval;
    throw std::invalid_argument("manifest: split must be \"train\" or \"eval\", got \"" + s + "\"");
}

// One dataset row. truth_path is optional: synthetic manifests carry it so
// the corrector and truth-referenced evaluation have a reference raster;
// real-data manifests usually leave it empty.
struct ManifestEntry {
    std::string id;
    std::string rgb_path;
    std::string disparity_path;
    std::string truth_path;  // empty when absent
    Split split = Split::train;
};

struct Manifest {
    std::vector<ManifestEntry> entries;
};

namespace detail {

inline void check_keys(const nlohmann::json& obj, std::initializer_list<const char*> allowed,
                       const std::string& where) {
    for (const auto& [key, value] : obj.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) throw std::invalid_argument(where + ": unknown key \"" + key + "\"");
    }
}

} // namespace detail

// JSON-lines, one entry per line:
//   {"id": "...", "rgb_path": "...", "disparity_path": "...", "split": "train"}
// with an optional "truth_path". Relative paths are resolved against the
// manifest file's directory. Every referenced file must exist.
inline Manifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest: " + path);
    const std::filesystem::path base = std::filesystem::path(path).parent_path();

    Manifest m;
    std::unordered_set<std::string> ids;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        if (!j.is_object())
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": entry is not an object");
        ManifestEntry e;
        try {
            detail::check_keys(j, {"id", "rgb_path", "disparity_path", "truth_path", "split"},
                               "manifest");
            e.id = j.at("id").get<std::string>();
            e.rgb_path = j.at("rgb_path").get<std::string>();
            e.disparity_path = j.at("disparity_path").get<std::string>();
            e.split = split_from_string(j.at("split").get<std::string>());
            if (j.contains("truth_path")) e.truth_path = j["truth_path"].get<std::string>();
        } catch (const nlohmann::json::exception& e2) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e2.what());
        } catch (const std::invalid_argument& e2) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e2.what());
        }
        if (e.id.empty())
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": empty id");
        if (!ids.insert(e.id).second)
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": duplicate id \"" +
                                     e.id + "\"");

        auto resolve = [&](std::string& p) {
            if (p.empty()) return;
            std::filesystem::path fp(p);
            if (fp.is_relative()) fp = base / fp;
            p = fp.string();
            if (!std::filesystem::exists(fp))
                throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                         ": referenced file does not exist: " + p);
        };
        resolve(e.rgb_path);
        resolve(e.disparity_path);
        resolve(e.truth_path);
        m.entries.push_back(std::move(e));
    }
    if (m.entries.empty()) throw std::runtime_error("manifest is empty: " + path);
    return m;
}

// Paths are written as given (the loader resolves relative ones against the
// manifest location), keys in a fixed order for byte-stable output.
inline void save_manifest(const std::string& path, const Manifest& m) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open manifest for writing: " + path);
    for (const auto& e : m.entries) {
        nlohmann::ordered_json j;
        j["id"] = e.id;
        j["rgb_path"] = e.rgb_path;
        j["disparity_path"] = e.disparity_path;
        if (!e.truth_path.empty()) j["truth_path"] = e.truth_path;
        j["split"] = to_string(e.split);
        out << j.dump() << '\n';
    }
    if (!out) throw std::runtime_error("manifest write failed: " + path);
}

} // namespace depthfill
