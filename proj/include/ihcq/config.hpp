// Copyright 2026 The ihcq Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef IHCQ_CONFIG_HPP
#define IHCQ_CONFIG_HPP

/**
 * @file config.hpp
 *
 * @brief Run configuration: a nested JSON document whose every key is validated.
 */

#include <array>
#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "annotations.hpp"
#include "core.hpp"
#include "detect.hpp"
#include "image.hpp"
#include "inference.hpp"
#include "metrics.hpp"
#include "quantify.hpp"
#include "synth.hpp"
#include "util.hpp"

namespace ihcq {

struct BackendConfig {
    std::string name = "deconv";
    /// Directory of per-tile PMAP files, for the `pmap_dir` backend.
    std::string pmap_dir;
    StainParams stain;
};

struct EmbedConfig {
    int grid_n = 8;
    int thumb = 64;
};

struct RunConfig {
    double reference_mpp = kReferenceMpp;
    int tile_size = 1024;
    int workers = 1;
    std::uint64_t seed = 0;
    int white_threshold = kDefaultWhiteThreshold;
    double min_tissue_fraction = 0.05;
    PeakParams peak;
    double match_max_dist = kDefaultMatchDistance;
    Cutoffs cutoffs;
    SweepRange sweep;
    int disk_radius = kDefaultDiskRadius;
    BackendConfig backend;
    SlideSynthSpec synth;
    PmapSynthOptions pmap_synth;
    EmbedConfig embed;

    TileOptions tile_options() const { return TileOptions{Mpp(reference_mpp), white_threshold, min_tissue_fraction}; }
};

namespace detail {

class ConfigReader {
public:
    std::vector<std::string> problems;

    void check_keys(const nlohmann::json& j, const std::string& path, std::initializer_list<const char*> keys) {
        if (!j.is_object()) {
            problems.push_back(path + ": expected an object");
            return;
        }
        std::set<std::string> known(keys.begin(), keys.end());
        for (const auto& [key, value] : j.items()) {
            if (!known.count(key)) {
                problems.push_back(join(path, key) + ": unknown key");
            }
        }
    }

    template <typename T>
    void get(const nlohmann::json& j, const std::string& path, const char* key, T& out) {
        if (!j.is_object() || !j.contains(key)) {
            return;
        }
        try {
            out = j.at(key).get<T>();
        } catch (const nlohmann::json::exception&) {
            problems.push_back(join(path, key) + ": wrong type (" + std::string(j.at(key).type_name()) + ")");
        }
    }

    void require(bool ok, const std::string& key, const std::string& message) {
        if (!ok) {
            problems.push_back(key + ": " + message);
        }
    }

    static std::string join(const std::string& path, const std::string& key) {
        return path.empty() ? key : path + "." + key;
    }
};

} // namespace detail

/**
 * Overlays `j` onto `base`. Unknown keys, wrong types and out-of-range values are all collected
 * and reported together in one error.
 */
inline RunConfig parse_config(const nlohmann::json& j, RunConfig cfg = {}) {
    detail::ConfigReader r;
    r.check_keys(j, "", {"reference_mpp", "tile_size", "workers", "seed", "tissue", "peak", "match", "cutoffs", "sweep",
                         "rasterize", "backend", "synth", "pmap_synth", "embed"});
    if (!r.problems.empty() && !j.is_object()) {
        throw Error(ErrorKind::InvalidArgument, "invalid configuration", r.problems);
    }
    r.get(j, "", "reference_mpp", cfg.reference_mpp);
    r.get(j, "", "tile_size", cfg.tile_size);
    r.get(j, "", "workers", cfg.workers);
    r.get(j, "", "seed", cfg.seed);

    auto section = [&](const char* name, std::initializer_list<const char*> keys) -> const nlohmann::json* {
        if (!j.contains(name)) {
            return nullptr;
        }
        r.check_keys(j[name], name, keys);
        return j[name].is_object() ? &j[name] : nullptr;
    };

    if (const auto* s = section("tissue", {"white_threshold", "min_tissue_fraction"})) {
        r.get(*s, "tissue", "white_threshold", cfg.white_threshold);
        r.get(*s, "tissue", "min_tissue_fraction", cfg.min_tissue_fraction);
    }
    if (const auto* s = section("peak", {"min_distance", "foreground_threshold"})) {
        r.get(*s, "peak", "min_distance", cfg.peak.min_distance);
        r.get(*s, "peak", "foreground_threshold", cfg.peak.foreground_threshold);
    }
    if (const auto* s = section("match", {"max_dist"})) {
        r.get(*s, "match", "max_dist", cfg.match_max_dist);
    }
    if (const auto* s = section("cutoffs", {"c1", "c2"})) {
        r.get(*s, "cutoffs", "c1", cfg.cutoffs.c1);
        r.get(*s, "cutoffs", "c2", cfg.cutoffs.c2);
    }
    if (const auto* s = section("sweep", {"c2_min", "c2_max", "step"})) {
        r.get(*s, "sweep", "c2_min", cfg.sweep.c2_min);
        r.get(*s, "sweep", "c2_max", cfg.sweep.c2_max);
        r.get(*s, "sweep", "step", cfg.sweep.step);
    }
    if (const auto* s = section("rasterize", {"radius"})) {
        r.get(*s, "rasterize", "radius", cfg.disk_radius);
    }
    if (const auto* s = section("backend", {"name", "pmap_dir", "stain"})) {
        r.get(*s, "backend", "name", cfg.backend.name);
        r.get(*s, "backend", "pmap_dir", cfg.backend.pmap_dir);
        if (s->contains("stain")) {
            const auto& st = (*s)["stain"];
            r.check_keys(st, "backend.stain",
                         {"hematoxylin", "dab", "dab_threshold", "nuclear_threshold", "softness"});
            r.get(st, "backend.stain", "hematoxylin", cfg.backend.stain.hematoxylin);
            r.get(st, "backend.stain", "dab", cfg.backend.stain.dab);
            r.get(st, "backend.stain", "dab_threshold", cfg.backend.stain.dab_threshold);
            r.get(st, "backend.stain", "nuclear_threshold", cfg.backend.stain.nuclear_threshold);
            r.get(st, "backend.stain", "softness", cfg.backend.stain.softness);
        }
    }
    if (const auto* s = section("synth", {"width", "height", "n_cells", "pos_fraction", "cell_radius_min",
                                          "cell_radius_max", "min_spacing", "noise_sigma", "pos_color", "neg_color",
                                          "background", "grid_w", "grid_h", "blank_fraction", "slide_id"})) {
        auto& t = cfg.synth.tile;
        r.get(*s, "synth", "width", t.width);
        r.get(*s, "synth", "height", t.height);
        r.get(*s, "synth", "n_cells", t.n_cells);
        r.get(*s, "synth", "pos_fraction", t.pos_fraction);
        r.get(*s, "synth", "cell_radius_min", t.cell_radius_min);
        r.get(*s, "synth", "cell_radius_max", t.cell_radius_max);
        r.get(*s, "synth", "min_spacing", t.min_spacing);
        r.get(*s, "synth", "noise_sigma", t.noise_sigma);
        r.get(*s, "synth", "pos_color", t.pos_color);
        r.get(*s, "synth", "neg_color", t.neg_color);
        r.get(*s, "synth", "background", t.background);
        r.get(*s, "synth", "grid_w", cfg.synth.grid_w);
        r.get(*s, "synth", "grid_h", cfg.synth.grid_h);
        r.get(*s, "synth", "blank_fraction", cfg.synth.blank_fraction);
        r.get(*s, "synth", "slide_id", cfg.synth.slide_id);
    }
    if (const auto* s = section("pmap_synth", {"sigma", "amplitude", "noise"})) {
        r.get(*s, "pmap_synth", "sigma", cfg.pmap_synth.sigma);
        r.get(*s, "pmap_synth", "amplitude", cfg.pmap_synth.amplitude);
        r.get(*s, "pmap_synth", "noise", cfg.pmap_synth.noise);
    }
    if (const auto* s = section("embed", {"grid_n", "thumb"})) {
        r.get(*s, "embed", "grid_n", cfg.embed.grid_n);
        r.get(*s, "embed", "thumb", cfg.embed.thumb);
    }

    r.require(cfg.reference_mpp > 0.0, "reference_mpp", "must be positive");
    r.require(cfg.tile_size > 0, "tile_size", "must be positive");
    r.require(cfg.workers >= 1, "workers", "must be at least 1");
    r.require(cfg.white_threshold >= 0 && cfg.white_threshold <= 256, "tissue.white_threshold", "must lie in [0,256]");
    r.require(cfg.min_tissue_fraction >= 0.0 && cfg.min_tissue_fraction <= 1.0, "tissue.min_tissue_fraction",
              "must lie in [0,1]");
    r.require(cfg.peak.min_distance >= 1, "peak.min_distance", "must be at least 1");
    r.require(cfg.peak.foreground_threshold > 0.0 && cfg.peak.foreground_threshold < 1.0,
              "peak.foreground_threshold", "must lie in (0,1)");
    r.require(cfg.match_max_dist >= 0.0, "match.max_dist", "must be non-negative");
    r.require(cfg.cutoffs.c1 >= 0.0 && cfg.cutoffs.c1 < cfg.cutoffs.c2 && cfg.cutoffs.c2 <= 100.0, "cutoffs",
              "must satisfy 0 <= c1 < c2 <= 100");
    r.require(cfg.sweep.step > 0.0 && cfg.sweep.c2_min <= cfg.sweep.c2_max, "sweep", "needs step > 0 and c2_min <= c2_max");
    r.require(cfg.disk_radius >= 1, "rasterize.radius", "must be at least 1");
    r.require(cfg.backend.name == "deconv" || cfg.backend.name == "pmap_dir", "backend.name",
              "must be 'deconv' or 'pmap_dir'");
    r.require(cfg.backend.stain.softness > 0.0, "backend.stain.softness", "must be positive");
    r.require(cfg.synth.grid_w >= 1 && cfg.synth.grid_h >= 1, "synth.grid_w/grid_h", "must be at least 1");
    r.require(cfg.synth.blank_fraction >= 0.0 && cfg.synth.blank_fraction <= 1.0, "synth.blank_fraction",
              "must lie in [0,1]");
    r.require(cfg.embed.grid_n >= 2, "embed.grid_n", "must be at least 2");
    r.require(cfg.embed.thumb >= 1, "embed.thumb", "must be at least 1");
    try {
        cfg.synth.tile.validate();
    } catch (const Error& e) {
        for (const auto& d : e.details()) {
            r.problems.push_back("synth: " + d);
        }
    }
    if (!r.problems.empty()) {
        throw Error(ErrorKind::InvalidArgument, "invalid configuration", r.problems);
    }
    return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorKind::InvalidArgument, path.string() + ": " + e.what());
    }
    return parse_config(j);
}

/**
 * Complete configuration snapshot with a stable key order. The worker count is left out:
 * it never changes results.
 */
inline nlohmann::ordered_json to_json(const RunConfig& c) {
    nlohmann::ordered_json j;
    j["reference_mpp"] = c.reference_mpp;
    j["tile_size"] = c.tile_size;
    j["seed"] = c.seed;
    j["tissue"] = {{"white_threshold", c.white_threshold}, {"min_tissue_fraction", c.min_tissue_fraction}};
    j["peak"] = {{"min_distance", c.peak.min_distance}, {"foreground_threshold", c.peak.foreground_threshold}};
    j["match"] = {{"max_dist", c.match_max_dist}};
    j["cutoffs"] = {{"c1", c.cutoffs.c1}, {"c2", c.cutoffs.c2}};
    j["sweep"] = {{"c2_min", c.sweep.c2_min}, {"c2_max", c.sweep.c2_max}, {"step", c.sweep.step}};
    j["rasterize"] = {{"radius", c.disk_radius}};
    nlohmann::ordered_json stain;
    stain["hematoxylin"] = c.backend.stain.hematoxylin;
    stain["dab"] = c.backend.stain.dab;
    stain["dab_threshold"] = c.backend.stain.dab_threshold;
    stain["nuclear_threshold"] = c.backend.stain.nuclear_threshold;
    stain["softness"] = c.backend.stain.softness;
    nlohmann::ordered_json backend;
    backend["name"] = c.backend.name;
    backend["pmap_dir"] = c.backend.pmap_dir;
    backend["stain"] = stain;
    j["backend"] = backend;
    const auto& t = c.synth.tile;
    nlohmann::ordered_json synth;
    synth["width"] = t.width;
    synth["height"] = t.height;
    synth["n_cells"] = t.n_cells;
    synth["pos_fraction"] = t.pos_fraction;
    synth["cell_radius_min"] = t.cell_radius_min;
    synth["cell_radius_max"] = t.cell_radius_max;
    synth["min_spacing"] = t.min_spacing;
    synth["noise_sigma"] = t.noise_sigma;
    synth["pos_color"] = t.pos_color;
    synth["neg_color"] = t.neg_color;
    synth["background"] = t.background;
    synth["grid_w"] = c.synth.grid_w;
    synth["grid_h"] = c.synth.grid_h;
    synth["blank_fraction"] = c.synth.blank_fraction;
    synth["slide_id"] = c.synth.slide_id;
    j["synth"] = synth;
    j["pmap_synth"] = {{"sigma", c.pmap_synth.sigma}, {"amplitude", c.pmap_synth.amplitude}, {"noise", c.pmap_synth.noise}};
    j["embed"] = {{"grid_n", c.embed.grid_n}, {"thumb", c.embed.thumb}};
    return j;
}

} // namespace ihcq

#endif
