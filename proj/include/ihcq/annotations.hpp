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

#ifndef IHCQ_ANNOTATIONS_HPP
#define IHCQ_ANNOTATIONS_HPP

/**
 * @file annotations.hpp
 *
 * @brief Cell point annotations, HER2 remapping and disk label maps.
 */

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "core.hpp"
#include "png.hpp"
#include "util.hpp"

namespace ihcq {

/**
 * Four-level HER2 membrane staining score, ordered H0 < H1 < H2 < H3.
 */
enum class Her2Score { H0 = 0, H1 = 1, H2 = 2, H3 = 3 };

/**
 * HER2 scores collapse onto the two tumor classes: only H0 is negative.
 */
constexpr CellClass remap_her2(Her2Score score) {
    return score == Her2Score::H0 ? CellClass::TcNeg : CellClass::TcPos;
}

inline constexpr int kDefaultDiskRadius = 7;

/**
 * Per-pixel class codes: 0 background, 1 TC_NEG, 2 TC_POS.
 */
struct LabelMap {
    int width = 0;
    int height = 0;
    int disk_radius = kDefaultDiskRadius;
    std::vector<std::uint8_t> values;

    std::uint8_t at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }

    std::size_t count_nonzero() const {
        return static_cast<std::size_t>(std::count_if(values.begin(), values.end(), [](auto v) { return v != 0; }));
    }
};

/**
 * Paints a filled disk of `radius` (all pixels with dx^2 + dy^2 <= radius^2) around every annotation.
 *
 * Disks are painted in input order, so a later annotation overwrites an earlier one where they overlap.
 * Disks are clipped at the image border; the centre itself must be in bounds.
 */
inline LabelMap rasterize(std::span<const CellAnnotation> annotations, int width, int height,
                          int radius = kDefaultDiskRadius) {
    if (radius < 1) {
        throw Error(ErrorKind::InvalidArgument, "disk radius must be >= 1");
    }
    if (width <= 0 || height <= 0) {
        throw Error(ErrorKind::InvalidArgument, "label map dimensions must be positive");
    }
    LabelMap map;
    map.width = width;
    map.height = height;
    map.disk_radius = radius;
    map.values.assign(static_cast<std::size_t>(width) * height, 0);

    const int r2 = radius * radius;
    for (std::size_t i = 0; i < annotations.size(); ++i) {
        const auto& a = annotations[i];
        if (a.x < 0 || a.y < 0 || a.x >= width || a.y >= height) {
            throw Error(ErrorKind::InvalidArgument,
                        "annotation " + std::to_string(i) + " at (" + std::to_string(a.x) + "," + std::to_string(a.y) +
                            ") lies outside the " + std::to_string(width) + "x" + std::to_string(height) + " image");
        }
        const auto code = static_cast<std::uint8_t>(a.cls);
        const int y_lo = std::max(0, a.y - radius);
        const int y_hi = std::min(height - 1, a.y + radius);
        for (int y = y_lo; y <= y_hi; ++y) {
            const int dy = y - a.y;
            const int dx_max = static_cast<int>(std::floor(std::sqrt(static_cast<double>(r2 - dy * dy))));
            const int x_lo = std::max(0, a.x - dx_max);
            const int x_hi = std::min(width - 1, a.x + dx_max);
            auto* row = map.values.data() + static_cast<std::size_t>(y) * width;
            std::fill(row + x_lo, row + x_hi + 1, code);
        }
    }
    return map;
}

inline void write_label_png(const LabelMap& map, const std::filesystem::path& path) {
    png::write(path, map.width, map.height, 1, map.values);
}

/**
 * Reads a `x,y,class` CSV. Coordinates are non-negative reals floored to pixels.
 */
inline std::vector<CellAnnotation> read_annotations(const std::filesystem::path& path) {
    const auto table = csv::read(path);
    const int cx = table.column("x");
    const int cy = table.column("y");
    const int cc = table.column("class");
    if (cx < 0 || cy < 0 || cc < 0) {
        throw Error(ErrorKind::Format, path.string() + ":1: header must contain x,y,class");
    }
    std::vector<CellAnnotation> out;
    out.reserve(table.rows.size());
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& row = table.rows[i];
        const std::string where = path.string() + ":" + std::to_string(table.line_numbers[i]);
        const double x = csv::parse_double(row[cx], where);
        const double y = csv::parse_double(row[cy], where);
        if (x < 0.0 || y < 0.0) {
            throw Error(ErrorKind::Format, where + ": negative coordinate");
        }
        CellClass cls;
        try {
            cls = parse_cell_class(row[cc]);
        } catch (const Error& e) {
            throw Error(ErrorKind::Format, where + ": " + e.what());
        }
        out.push_back(CellAnnotation{static_cast<int>(std::floor(x)), static_cast<int>(std::floor(y)), cls});
    }
    return out;
}

inline std::string format_annotations(std::span<const CellAnnotation> annotations) {
    std::string s = "x,y,class\n";
    for (const auto& a : annotations) {
        s += std::to_string(a.x) + "," + std::to_string(a.y) + "," + std::string(to_string(a.cls)) + "\n";
    }
    return s;
}

inline void write_annotations(std::span<const CellAnnotation> annotations, const std::filesystem::path& path) {
    write_file_atomic(path, format_annotations(annotations));
}

} // namespace ihcq

#endif
