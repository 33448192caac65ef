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

#ifndef IHCQ_SLIDE_IO_HPP
#define IHCQ_SLIDE_IO_HPP

/**
 * @file slide_io.hpp
 *
 * @brief Whole-slide ingestion from a JSON manifest over a non-overlapping grid of PNG tiles.
 *
 * Manifest layout:
 *
 *     {"slide_id": "...", "source_mpp": 0.25, "tile_size": 1024,
 *      "tiles": [{"path": "tile_0_0.png", "gx": 0, "gy": 0}, ...],
 *      "exclusion_mask": {"path": "mask.png", "downsample": 16}}
 *
 * Tile and mask paths are relative to the manifest's directory.
 * The exclusion mask is an 8-bit grayscale PNG over the slide's source pixel grid,
 * one mask pixel per `downsample` x `downsample` block; 0 marks excluded regions.
 */

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "json.hpp"

#include "core.hpp"
#include "image.hpp"
#include "png.hpp"
#include "util.hpp"

namespace ihcq {

struct TileRecord {
    std::string path;
    int gx = 0;
    int gy = 0;
};

struct ExclusionMaskRef {
    std::string path;
    int downsample = 1;
};

struct SlideManifest {
    std::string slide_id;
    Mpp source_mpp = reference_mpp();
    int tile_size = 1024;
    std::vector<TileRecord> tiles;
    std::optional<ExclusionMaskRef> exclusion_mask;

    /// Directory that relative tile paths are resolved against.
    std::filesystem::path base_dir;

    std::filesystem::path resolve(const std::string& p) const {
        std::filesystem::path path(p);
        return path.is_absolute() ? path : base_dir / path;
    }

    /// Source-resolution slide extent covered by the tile grid.
    std::pair<long long, long long> extent() const {
        int max_gx = -1;
        int max_gy = -1;
        for (const auto& t : tiles) {
            max_gx = std::max(max_gx, t.gx);
            max_gy = std::max(max_gy, t.gy);
        }
        return {static_cast<long long>(max_gx + 1) * tile_size, static_cast<long long>(max_gy + 1) * tile_size};
    }
};

namespace detail {

template <typename T>
T require_field(const nlohmann::json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) {
        throw Error(ErrorKind::Format, where + ": missing field '" + key + "'");
    }
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Format, where + ": bad field '" + key + "': " + e.what());
    }
}

} // namespace detail

/**
 * Parses and validates a manifest. Grid offsets are non-negative and unique;
 * tile decoding is checked lazily when the tile is read.
 */
inline SlideManifest parse_manifest(const nlohmann::json& j, const std::filesystem::path& base_dir) {
    const std::string where = "manifest";
    if (!j.is_object()) {
        throw Error(ErrorKind::Format, where + ": expected a JSON object");
    }
    static const std::set<std::string> known = {"slide_id", "source_mpp", "tile_size", "tiles", "exclusion_mask"};
    std::vector<std::string> unknown;
    for (const auto& [key, value] : j.items()) {
        if (!known.count(key)) {
            unknown.push_back("unknown key '" + key + "'");
        }
    }
    if (!unknown.empty()) {
        throw Error(ErrorKind::Format, where + ": unknown keys", unknown);
    }

    SlideManifest m;
    m.base_dir = base_dir;
    m.slide_id = detail::require_field<std::string>(j, "slide_id", where);
    m.source_mpp = Mpp(detail::require_field<double>(j, "source_mpp", where));
    m.tile_size = detail::require_field<int>(j, "tile_size", where);
    if (m.tile_size <= 0) {
        throw Error(ErrorKind::Format, where + ": tile_size must be positive");
    }
    if (!j.contains("tiles") || !j["tiles"].is_array()) {
        throw Error(ErrorKind::Format, where + ": 'tiles' must be an array");
    }
    std::set<std::pair<int, int>> seen;
    for (std::size_t i = 0; i < j["tiles"].size(); ++i) {
        const auto& t = j["tiles"][i];
        const std::string tw = where + ".tiles[" + std::to_string(i) + "]";
        TileRecord rec;
        rec.path = detail::require_field<std::string>(t, "path", tw);
        rec.gx = detail::require_field<int>(t, "gx", tw);
        rec.gy = detail::require_field<int>(t, "gy", tw);
        if (rec.gx < 0 || rec.gy < 0) {
            throw Error(ErrorKind::Format, tw + ": negative grid coordinate");
        }
        if (!seen.insert({rec.gx, rec.gy}).second) {
            throw Error(ErrorKind::Format, tw + ": duplicate grid cell (" + std::to_string(rec.gx) + "," +
                                               std::to_string(rec.gy) + ")");
        }
        m.tiles.push_back(std::move(rec));
    }
    if (j.contains("exclusion_mask") && !j["exclusion_mask"].is_null()) {
        const auto& e = j["exclusion_mask"];
        ExclusionMaskRef ref;
        ref.path = detail::require_field<std::string>(e, "path", where + ".exclusion_mask");
        ref.downsample = detail::require_field<int>(e, "downsample", where + ".exclusion_mask");
        if (ref.downsample < 1) {
            throw Error(ErrorKind::Format, where + ".exclusion_mask: downsample must be >= 1");
        }
        m.exclusion_mask = ref;
    }
    return m;
}

inline SlideManifest load_manifest(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorKind::Format, path.string() + ": " + e.what());
    }
    return parse_manifest(j, path.parent_path());
}

inline nlohmann::ordered_json manifest_to_json(const SlideManifest& m) {
    nlohmann::ordered_json j;
    j["slide_id"] = m.slide_id;
    j["source_mpp"] = m.source_mpp.value();
    j["tile_size"] = m.tile_size;
    j["tiles"] = nlohmann::ordered_json::array();
    for (const auto& t : m.tiles) {
        nlohmann::ordered_json tj;
        tj["path"] = t.path;
        tj["gx"] = t.gx;
        tj["gy"] = t.gy;
        j["tiles"].push_back(tj);
    }
    if (m.exclusion_mask) {
        j["exclusion_mask"] = {{"path", m.exclusion_mask->path}, {"downsample", m.exclusion_mask->downsample}};
    }
    return j;
}

inline void write_manifest(const SlideManifest& m, const std::filesystem::path& path) {
    write_file_atomic(path, manifest_to_json(m).dump(2) + "\n");
}

inline PatchImage read_rgb_png(const std::filesystem::path& path, Mpp mpp) {
    auto raster = png::read(path, 3);
    return PatchImage(raster.width, raster.height, mpp, std::move(raster.data));
}

inline void write_rgb_png(const PatchImage& img, const std::filesystem::path& path) {
    png::write(path, img.width, img.height, 3, img.pixels);
}

/**
 * Exclusion mask loaded against a manifest: `allowed(sx, sy)` answers for source-resolution pixels.
 */
class ExclusionMask {
public:
    ExclusionMask() = default;

    ExclusionMask(TissueMask mask) : mask_(std::move(mask)) {}

    static ExclusionMask load(const SlideManifest& m) {
        if (!m.exclusion_mask) {
            return ExclusionMask();
        }
        const auto raster = png::read(m.resolve(m.exclusion_mask->path), 1);
        const auto [ext_w, ext_h] = m.extent();
        const int ds = m.exclusion_mask->downsample;
        const long long want_w = (ext_w + ds - 1) / ds;
        const long long want_h = (ext_h + ds - 1) / ds;
        if (raster.width != want_w || raster.height != want_h) {
            throw Error(ErrorKind::Format, "exclusion mask is " + std::to_string(raster.width) + "x" +
                                               std::to_string(raster.height) + " but the slide extent at downsample " +
                                               std::to_string(ds) + " needs " + std::to_string(want_w) + "x" +
                                               std::to_string(want_h));
        }
        TissueMask mask;
        mask.width = raster.width;
        mask.height = raster.height;
        mask.downsample = ds;
        mask.bits.resize(raster.data.size());
        for (std::size_t i = 0; i < raster.data.size(); ++i) {
            mask.bits[i] = raster.data[i] != 0 ? 1 : 0;
        }
        return ExclusionMask(std::move(mask));
    }

    bool present() const { return mask_.has_value(); }

    bool allowed(long long sx, long long sy) const {
        if (!mask_) {
            return true;
        }
        const long long mx = sx / mask_->downsample;
        const long long my = sy / mask_->downsample;
        if (sx < 0 || sy < 0 || mx >= mask_->width || my >= mask_->height) {
            return false;
        }
        return mask_->tissue(static_cast<int>(mx), static_cast<int>(my));
    }

private:
    std::optional<TissueMask> mask_;
};

struct TileOptions {
    Mpp target = reference_mpp();
    int white_threshold = kDefaultWhiteThreshold;
    double min_tissue_fraction = 0.05;
};

/**
 * A tile resampled to the target resolution. `x0, y0` locate its top-left
 * corner in global target-resolution pixel space.
 */
struct Tile {
    int gx = 0;
    int gy = 0;
    long long x0 = 0;
    long long y0 = 0;
    double tissue_fraction = 0.0;
    PatchImage image;
};

/**
 * Immutable view of a slide that can load individual tiles, safe to share across threads.
 */
class SlideReader {
public:
    SlideReader(SlideManifest manifest, TileOptions options)
        : manifest_(std::move(manifest)), options_(options), exclusion_(ExclusionMask::load(manifest_)) {
        if (options_.min_tissue_fraction < 0.0 || options_.min_tissue_fraction > 1.0) {
            throw Error(ErrorKind::InvalidArgument, "min_tissue_fraction must lie in [0, 1]");
        }
        order_.resize(manifest_.tiles.size());
        for (std::size_t i = 0; i < order_.size(); ++i) {
            order_[i] = i;
        }
        std::sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) {
            const auto& ta = manifest_.tiles[a];
            const auto& tb = manifest_.tiles[b];
            return std::tie(ta.gy, ta.gx) < std::tie(tb.gy, tb.gx);
        });
    }

    const SlideManifest& manifest() const { return manifest_; }
    const TileOptions& options() const { return options_; }
    const ExclusionMask& exclusion() const { return exclusion_; }

    /// Number of grid tiles, before tissue filtering.
    std::size_t size() const { return order_.size(); }

    /// Grid record of the `i`-th tile in row-major (gy, gx) order.
    const TileRecord& record(std::size_t i) const { return manifest_.tiles[order_[i]]; }

    long long to_target(long long source_px) const {
        return std::llround(static_cast<double>(source_px) * manifest_.source_mpp.value() / options_.target.value());
    }

    long long to_source(double target_px) const {
        return static_cast<long long>(
            std::floor(target_px * options_.target.value() / manifest_.source_mpp.value()));
    }

    /// Whether a global target-resolution location is outside every exclusion region.
    bool allowed_at(double x, double y) const { return exclusion_.allowed(to_source(x), to_source(y)); }

    /**
     * Loads, filters and resamples the `i`-th tile (row-major order).
     * Returns nothing when the tile's tissue fraction is below the configured minimum.
     */
    std::optional<Tile> load(std::size_t i) const {
        const TileRecord& rec = record(i);
        PatchImage src = [&]() {
            try {
                return read_rgb_png(manifest_.resolve(rec.path), manifest_.source_mpp);
            } catch (const Error& e) {
                throw Error(ErrorKind::Io, "tile (" + std::to_string(rec.gx) + "," + std::to_string(rec.gy) +
                                               "): " + e.what());
            }
        }();
        if (src.width != manifest_.tile_size || src.height != manifest_.tile_size) {
            throw Error(ErrorKind::Format, "tile (" + std::to_string(rec.gx) + "," + std::to_string(rec.gy) +
                                               ") decodes to " + std::to_string(src.width) + "x" +
                                               std::to_string(src.height) + ", expected " +
                                               std::to_string(manifest_.tile_size) + " square");
        }

        const auto tissue = background_mask(src, options_.white_threshold);
        const long long sx0 = static_cast<long long>(rec.gx) * manifest_.tile_size;
        const long long sy0 = static_cast<long long>(rec.gy) * manifest_.tile_size;
        std::size_t count = 0;
        for (int y = 0; y < src.height; ++y) {
            for (int x = 0; x < src.width; ++x) {
                if (tissue.tissue(x, y) && exclusion_.allowed(sx0 + x, sy0 + y)) {
                    ++count;
                }
            }
        }
        const double fraction = src.npixels() ? static_cast<double>(count) / static_cast<double>(src.npixels()) : 0.0;
        if (fraction < options_.min_tissue_fraction) {
            return std::nullopt;
        }

        return Tile{rec.gx, rec.gy, to_target(sx0), to_target(sy0), fraction,
                    resample_to_reference(src, options_.target)};
    }

private:
    SlideManifest manifest_;
    TileOptions options_;
    ExclusionMask exclusion_;
    std::vector<std::size_t> order_;
};

/**
 * Sequential row-major stream over the tiles that pass the tissue filter.
 */
class TileStream {
public:
    explicit TileStream(std::shared_ptr<const SlideReader> reader) : reader_(std::move(reader)) {}

    std::optional<Tile> next() {
        while (pos_ < reader_->size()) {
            auto tile = reader_->load(pos_++);
            if (tile) {
                return tile;
            }
        }
        return std::nullopt;
    }

private:
    std::shared_ptr<const SlideReader> reader_;
    std::size_t pos_ = 0;
};

inline TileStream iter_tiles(const SlideManifest& manifest, const TileOptions& options = {}) {
    return TileStream(std::make_shared<const SlideReader>(manifest, options));
}

} // namespace ihcq

#endif
