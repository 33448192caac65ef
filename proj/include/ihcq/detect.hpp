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

#ifndef IHCQ_DETECT_HPP
#define IHCQ_DETECT_HPP

/**
 * @file detect.hpp
 *
 * @brief Turning probability maps into classified, confidence-scored cell detections.
 */

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <span>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "core.hpp"
#include "inference.hpp"
#include "slide_io.hpp"
#include "util.hpp"

namespace ihcq {

struct PeakParams {
    int min_distance = 7;
    double foreground_threshold = 0.5;
};

struct Peak {
    int x = 0;
    int y = 0;
    float value = 0.0f;
};

namespace detail {

// Max over [i - r, i + r] along one axis, clipped at the borders.
inline void running_max(const float* in, float* out, int n, std::ptrdiff_t stride, int r) {
    for (int i = 0; i < n; ++i) {
        const int lo = std::max(0, i - r);
        const int hi = std::min(n - 1, i + r);
        float m = in[lo * stride];
        for (int k = lo + 1; k <= hi; ++k) {
            m = std::max(m, in[k * stride]);
        }
        out[i * stride] = m;
    }
}

} // namespace detail

/**
 * Local maxima of `plane` (row-major, `width` x `height`).
 *
 * A candidate has value >= `foreground_threshold` and is not exceeded anywhere in its
 * (2 min_distance + 1)^2 window. Candidates are accepted in decreasing value order, ties broken
 * by row-major index, and a candidate within `min_distance` (Euclidean) of an accepted peak is dropped.
 * The result is sorted by decreasing value.
 */
inline std::vector<Peak> find_peaks(std::span<const float> plane, int width, int height, const PeakParams& params = {}) {
    if (params.min_distance < 1) {
        throw Error(ErrorKind::InvalidArgument, "min_distance must be >= 1");
    }
    if (plane.size() != static_cast<std::size_t>(width) * height) {
        throw Error(ErrorKind::InvalidArgument, "plane size does not match dimensions");
    }
    const int r = params.min_distance;
    const auto threshold = static_cast<float>(params.foreground_threshold);
    if (plane.empty()) {
        return {};
    }

    std::vector<float> rows(plane.size());
    for (int y = 0; y < height; ++y) {
        const std::size_t off = static_cast<std::size_t>(y) * width;
        detail::running_max(plane.data() + off, rows.data() + off, width, 1, r);
    }
    std::vector<float> local(plane.size());
    for (int x = 0; x < width; ++x) {
        detail::running_max(rows.data() + x, local.data() + x, height, width, r);
    }

    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < plane.size(); ++i) {
        if (plane[i] >= threshold && plane[i] >= local[i]) {
            candidates.push_back(i);
        }
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [&](std::size_t a, std::size_t b) { return plane[a] > plane[b]; });

    // Accepted peaks bucketed on a grid of min_distance-sized cells.
    const long long cell = r;
    const long long gw = width / cell + 1;
    std::unordered_map<long long, std::vector<std::size_t>> grid;
    std::vector<Peak> peaks;
    const long long r2 = static_cast<long long>(r) * r;
    for (const auto idx : candidates) {
        const int x = static_cast<int>(idx % width);
        const int y = static_cast<int>(idx / width);
        const long long cx = x / cell;
        const long long cy = y / cell;
        bool suppressed = false;
        for (long long ny = cy - 1; ny <= cy + 1 && !suppressed; ++ny) {
            for (long long nx = cx - 1; nx <= cx + 1 && !suppressed; ++nx) {
                if (nx < 0 || ny < 0) {
                    continue;
                }
                const auto it = grid.find(ny * gw + nx);
                if (it == grid.end()) {
                    continue;
                }
                for (const auto p : it->second) {
                    const long long dx = peaks[p].x - x;
                    const long long dy = peaks[p].y - y;
                    if (dx * dx + dy * dy <= r2) {
                        suppressed = true;
                        break;
                    }
                }
            }
        }
        if (!suppressed) {
            grid[cy * gw + cx].push_back(peaks.size());
            peaks.push_back(Peak{x, y, plane[idx]});
        }
    }
    return peaks;
}

/**
 * Peaks of the summed TC_NEG + TC_POS plane, each classified by argmax over the two tumor
 * channels (ties go to TC_NEG) and scored by the winning channel's probability.
 */
inline std::vector<Detection> extract_detections(const ProbabilityMap& map, const PeakParams& params = {}) {
    const auto neg = map.plane(PmapChannel::TcNeg);
    const auto pos = map.plane(PmapChannel::TcPos);
    std::vector<float> foreground(map.npixels());
    for (std::size_t i = 0; i < foreground.size(); ++i) {
        foreground[i] = neg[i] + pos[i];
    }
    const auto peaks = find_peaks(foreground, map.width, map.height, params);
    std::vector<Detection> out;
    out.reserve(peaks.size());
    for (const auto& p : peaks) {
        const std::size_t i = static_cast<std::size_t>(p.y) * map.width + p.x;
        const bool positive = pos[i] > neg[i];
        out.push_back(Detection{p.x, p.y, positive ? CellClass::TcPos : CellClass::TcNeg,
                                static_cast<double>(positive ? pos[i] : neg[i])});
    }
    return out;
}

/**
 * Canonical detection order: global y, then x, then class, then confidence.
 */
inline void sort_detections(std::vector<Detection>& detections) {
    std::sort(detections.begin(), detections.end(), [](const Detection& a, const Detection& b) {
        return std::make_tuple(a.y, a.x, static_cast<int>(a.cls), a.confidence) <
               std::make_tuple(b.y, b.x, static_cast<int>(b.cls), b.confidence);
    });
}

struct SlideDetections {
    std::vector<Detection> detections;
    std::size_t tiles_total = 0;
    std::size_t tiles_processed = 0;
};

/**
 * Runs inference and peak extraction independently on every tissue tile and
 * returns detections in global reference-resolution coordinates, canonically sorted.
 *
 * Detections falling in an exclusion-mask region are dropped. Tiles are not merged
 * across borders. Output does not depend on `workers`.
 */
inline SlideDetections detect_slide(const SlideReader& reader, const InferenceBackend& backend,
                                    const PeakParams& params = {}, int workers = 1) {
    const std::size_t n = reader.size();
    std::vector<std::vector<Detection>> per_tile(n);
    std::vector<char> processed(n, 0);
    parallel_for(n, workers, [&](std::size_t i) {
        auto tile = reader.load(i);
        if (!tile) {
            return;
        }
        processed[i] = 1;
        const auto map = backend.infer(*tile);
        auto local = extract_detections(map, params);
        auto& out = per_tile[i];
        out.reserve(local.size());
        for (auto d : local) {
            d.x += static_cast<int>(tile->x0);
            d.y += static_cast<int>(tile->y0);
            if (reader.allowed_at(d.x, d.y)) {
                out.push_back(d);
            }
        }
    });

    SlideDetections result;
    result.tiles_total = n;
    for (std::size_t i = 0; i < n; ++i) {
        result.tiles_processed += processed[i];
        result.detections.insert(result.detections.end(), per_tile[i].begin(), per_tile[i].end());
    }
    sort_detections(result.detections);
    return result;
}

inline std::string format_detections(std::span<const Detection> detections) {
    std::string s = "x,y,class,confidence\n";
    for (const auto& d : detections) {
        s += std::to_string(d.x) + "," + std::to_string(d.y) + "," + std::string(to_string(d.cls)) + "," +
             csv::format_double(d.confidence) + "\n";
    }
    return s;
}

inline void write_detections(std::span<const Detection> detections, const std::filesystem::path& path) {
    write_file_atomic(path, format_detections(detections));
}

inline std::vector<Detection> read_detections(const std::filesystem::path& path) {
    const auto table = csv::read(path);
    const int cx = table.column("x");
    const int cy = table.column("y");
    const int cc = table.column("class");
    const int cf = table.column("confidence");
    if (cx < 0 || cy < 0 || cc < 0 || cf < 0) {
        throw Error(ErrorKind::Format, path.string() + ":1: header must contain x,y,class,confidence");
    }
    std::vector<Detection> out;
    out.reserve(table.rows.size());
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& row = table.rows[i];
        const std::string where = path.string() + ":" + std::to_string(table.line_numbers[i]);
        Detection d;
        d.x = static_cast<int>(std::floor(csv::parse_double(row[cx], where)));
        d.y = static_cast<int>(std::floor(csv::parse_double(row[cy], where)));
        try {
            d.cls = parse_cell_class(row[cc]);
        } catch (const Error& e) {
            throw Error(ErrorKind::Format, where + ": " + e.what());
        }
        d.confidence = csv::parse_double(row[cf], where);
        if (d.confidence < 0.0 || d.confidence > 1.0) {
            throw Error(ErrorKind::Format, where + ": confidence outside [0,1]");
        }
        out.push_back(d);
    }
    return out;
}

} // namespace ihcq

#endif
