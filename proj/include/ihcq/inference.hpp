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

#ifndef IHCQ_INFERENCE_HPP
#define IHCQ_INFERENCE_HPP

/**
 * @file inference.hpp
 *
 * @brief Probability maps, the inference backend contract and the stain-intensity baseline backend.
 *
 * A probability map has three planes in the order (background, TC_NEG, TC_POS),
 * matching the label codes 0/1/2. On disk it is a PMAP container: a JSON header
 *
 *     {"width":W,"height":H,"channels":3,"mpp":0.19,"dtype":"f32le","layout":"planar",
 *      "class_names":["BG","TC_NEG","TC_POS"]}
 *
 * next to a `.bin` file holding exactly W*H*3 little-endian float32 values, one row-major plane per class.
 */

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "core.hpp"
#include "image.hpp"
#include "slide_io.hpp"
#include "util.hpp"

namespace ihcq {

inline constexpr int kPmapChannels = 3;
inline constexpr double kPmapSumTolerance = 1e-3;

enum class PmapChannel : int { Background = 0, TcNeg = 1, TcPos = 2 };

inline PmapChannel channel_of(CellClass c) { return c == CellClass::TcNeg ? PmapChannel::TcNeg : PmapChannel::TcPos; }

/**
 * Planar float32 per-pixel class probabilities.
 */
struct ProbabilityMap {
    ProbabilityMap(int w, int h, Mpp resolution)
        : width(w), height(h), mpp(resolution), data(static_cast<std::size_t>(w) * h * kPmapChannels, 0.0f) {
        if (w < 0 || h < 0) {
            throw Error(ErrorKind::InvalidArgument, "negative probability map dimensions");
        }
    }

    /// All-background map.
    static ProbabilityMap background(int w, int h, Mpp resolution) {
        ProbabilityMap m(w, h, resolution);
        auto bg = m.plane(PmapChannel::Background);
        std::fill(bg.begin(), bg.end(), 1.0f);
        return m;
    }

    int width;
    int height;
    Mpp mpp;
    std::vector<float> data;

    std::size_t npixels() const { return static_cast<std::size_t>(width) * height; }

    std::span<float> plane(PmapChannel c) {
        return std::span<float>(data).subspan(static_cast<std::size_t>(c) * npixels(), npixels());
    }
    std::span<const float> plane(PmapChannel c) const {
        return std::span<const float>(data).subspan(static_cast<std::size_t>(c) * npixels(), npixels());
    }

    float at(PmapChannel c, int x, int y) const {
        return data[static_cast<std::size_t>(c) * npixels() + static_cast<std::size_t>(y) * width + x];
    }

    void set(int x, int y, float bg, float neg, float pos) {
        const std::size_t i = static_cast<std::size_t>(y) * width + x;
        data[i] = bg;
        data[npixels() + i] = neg;
        data[2 * npixels() + i] = pos;
    }
};

/**
 * Throws if any value leaves [0, 1] or any pixel's channel sum leaves 1 +/- `tolerance`.
 */
inline void validate_normalization(const ProbabilityMap& map, double tolerance = kPmapSumTolerance) {
    const std::size_t n = map.npixels();
    for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        for (int c = 0; c < kPmapChannels; ++c) {
            const float v = map.data[c * n + i];
            if (!(v >= 0.0f && v <= 1.0f)) {
                throw Error(ErrorKind::Format, "probability out of [0,1] at pixel " + std::to_string(i) + " (x=" +
                                                   std::to_string(i % map.width) + ", y=" +
                                                   std::to_string(i / map.width) + ")");
            }
            sum += v;
        }
        if (std::abs(sum - 1.0) > tolerance) {
            throw Error(ErrorKind::Format, "channel sum " + std::to_string(sum) + " at pixel " + std::to_string(i) +
                                               " (x=" + std::to_string(i % map.width) +
                                               ", y=" + std::to_string(i / map.width) + ") is not normalized");
        }
    }
}

inline std::filesystem::path pmap_payload_path(const std::filesystem::path& header) {
    auto bin = header;
    bin.replace_extension(".bin");
    return bin;
}

/**
 * Writes the JSON header and its `.bin` payload, each atomically.
 */
inline void write_pmap(const ProbabilityMap& map, const std::filesystem::path& header_path) {
    static_assert(std::endian::native == std::endian::little, "PMAP payloads are little-endian");
    nlohmann::ordered_json h;
    h["width"] = map.width;
    h["height"] = map.height;
    h["channels"] = kPmapChannels;
    h["mpp"] = map.mpp.value();
    h["dtype"] = "f32le";
    h["layout"] = "planar";
    h["class_names"] = {"BG", "TC_NEG", "TC_POS"};
    const auto* bytes = reinterpret_cast<const char*>(map.data.data());
    write_file_atomic(pmap_payload_path(header_path), std::string_view(bytes, map.data.size() * sizeof(float)));
    write_file_atomic(header_path, h.dump() + "\n");
}

inline ProbabilityMap read_pmap(const std::filesystem::path& header_path) {
    nlohmann::json h;
    try {
        h = nlohmann::json::parse(read_file(header_path));
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorKind::Format, header_path.string() + ": " + e.what());
    }
    const std::string where = header_path.string();
    const int w = detail::require_field<int>(h, "width", where);
    const int ht = detail::require_field<int>(h, "height", where);
    const int channels = detail::require_field<int>(h, "channels", where);
    const double mpp = detail::require_field<double>(h, "mpp", where);
    const auto dtype = detail::require_field<std::string>(h, "dtype", where);
    const auto layout = detail::require_field<std::string>(h, "layout", where);
    const auto names = detail::require_field<std::vector<std::string>>(h, "class_names", where);
    if (channels != kPmapChannels || dtype != "f32le" || layout != "planar" ||
        names != std::vector<std::string>{"BG", "TC_NEG", "TC_POS"}) {
        throw Error(ErrorKind::Format, where + ": unsupported PMAP header (need 3 planar f32le channels BG,TC_NEG,TC_POS)");
    }
    if (w <= 0 || ht <= 0) {
        throw Error(ErrorKind::Format, where + ": non-positive dimensions");
    }
    ProbabilityMap map(w, ht, Mpp(mpp));
    const auto payload = read_file(pmap_payload_path(header_path));
    const std::size_t expected = map.data.size() * sizeof(float);
    if (payload.size() != expected) {
        throw Error(ErrorKind::Format, where + ": payload has " + std::to_string(payload.size()) +
                                           " bytes, header implies " + std::to_string(expected));
    }
    std::memcpy(map.data.data(), payload.data(), expected);
    try {
        validate_normalization(map);
    } catch (const Error& e) {
        throw Error(ErrorKind::Format, where + ": " + e.what());
    }
    return map;
}

/**
 * Stain optical-density basis plus the baseline classifier's thresholds.
 * Stain vectors are normalized on construction.
 */
struct StainParams {
    std::array<double, 3> hematoxylin{0.650, 0.704, 0.286};
    std::array<double, 3> dab{0.269, 0.568, 0.778};
    double dab_threshold = 0.30;
    double nuclear_threshold = 0.15;
    double softness = 0.05;
};

/**
 * Least-squares unmixing of RGB optical density onto a two-stain basis.
 */
class StainUnmixer {
public:
    explicit StainUnmixer(const StainParams& params) {
        auto h = normalized(params.hematoxylin, "hematoxylin");
        auto d = normalized(params.dab, "dab");
        // Normal equations of the 3x2 system [h d] c = od.
        const double hh = dot(h, h), hd = dot(h, d), dd = dot(d, d);
        const double det = hh * dd - hd * hd;
        if (det < 1e-6) {
            throw Error(ErrorKind::Degenerate, "stain vectors are collinear");
        }
        for (int k = 0; k < 3; ++k) {
            pinv_h_[k] = (dd * h[k] - hd * d[k]) / det;
            pinv_d_[k] = (hh * d[k] - hd * h[k]) / det;
        }
        for (int v = 0; v < 256; ++v) {
            od_lut_[v] = -std::log10((v + 1.0) / 256.0);
        }
    }

    /// Stain concentrations (hematoxylin, dab) of one RGB pixel, clamped at zero.
    std::pair<double, double> unmix(const std::uint8_t* rgb) const {
        const double r = od_lut_[rgb[0]], g = od_lut_[rgb[1]], b = od_lut_[rgb[2]];
        const double ch = pinv_h_[0] * r + pinv_h_[1] * g + pinv_h_[2] * b;
        const double cd = pinv_d_[0] * r + pinv_d_[1] * g + pinv_d_[2] * b;
        return {std::max(0.0, ch), std::max(0.0, cd)};
    }

    static std::array<double, 3> normalized(const std::array<double, 3>& v, const char* name) {
        const double n = std::sqrt(dot(v, v));
        if (!(n > 0.0) || !std::isfinite(n)) {
            throw Error(ErrorKind::Degenerate, std::string(name) + " stain vector has zero length");
        }
        return {v[0] / n, v[1] / n, v[2] / n};
    }

private:
    static double dot(const std::array<double, 3>& a, const std::array<double, 3>& b) {
        return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    }

    std::array<double, 3> pinv_h_{};
    std::array<double, 3> pinv_d_{};
    std::array<double, 256> od_lut_{};
};

/**
 * Optical density of an 8-bit intensity: -log10((I + 1) / 256).
 */
inline double optical_density(int intensity) { return -std::log10((intensity + 1.0) / 256.0); }

/**
 * Inverse of `optical_density`, rounded and clamped to 8 bits.
 */
inline std::uint8_t intensity_from_od(double od) {
    const double v = 256.0 * std::pow(10.0, -od) - 1.0;
    return static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
}

struct StainPlanes {
    int width = 0;
    int height = 0;
    std::vector<float> hematoxylin;
    std::vector<float> dab;
};

inline StainPlanes deconvolve(const PatchImage& img, const StainParams& params = {}) {
    const StainUnmixer unmixer(params);
    StainPlanes out;
    out.width = img.width;
    out.height = img.height;
    out.hematoxylin.resize(img.npixels());
    out.dab.resize(img.npixels());
    const std::uint8_t* p = img.pixels.data();
    for (std::size_t i = 0, n = img.npixels(); i < n; ++i, p += 3) {
        const auto [h, d] = unmixer.unmix(p);
        out.hematoxylin[i] = static_cast<float>(h);
        out.dab[i] = static_cast<float>(d);
    }
    return out;
}

namespace detail {

inline double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

} // namespace detail

/**
 * Stain-intensity classifier: nuclear evidence from total stain density, positivity from DAB density.
 *
 *     n = logistic((h + dab - nuclear_threshold) / softness)
 *     p = logistic((dab - dab_threshold) / softness)
 *     P(TC_POS) = n p,  P(TC_NEG) = n (1 - p),  P(BG) = 1 - n
 */
inline ProbabilityMap baseline_infer(const PatchImage& img, const StainParams& params = {}) {
    if (!(params.softness > 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "softness must be positive");
    }
    const StainUnmixer unmixer(params);
    ProbabilityMap map(img.width, img.height, img.mpp);
    const std::size_t n = img.npixels();
    float* bg = map.data.data();
    float* neg = bg + n;
    float* pos = neg + n;
    const double inv_soft = 1.0 / params.softness;
    const std::uint8_t* px = img.pixels.data();
    for (std::size_t i = 0; i < n; ++i, px += 3) {
        const auto [h, d] = unmixer.unmix(px);
        const double nuc = detail::logistic((h + d - params.nuclear_threshold) * inv_soft);
        const double p = detail::logistic((d - params.dab_threshold) * inv_soft);
        const auto fp = static_cast<float>(nuc * p);
        const auto fn = static_cast<float>(nuc * (1.0 - p));
        pos[i] = fp;
        neg[i] = fn;
        bg[i] = std::max(0.0f, 1.0f - fp - fn);
    }
    return map;
}

/**
 * Arithmetic mean of replicate maps, renormalized per pixel.
 */
inline ProbabilityMap mean_replicate(std::span<const ProbabilityMap> replicates) {
    if (replicates.empty()) {
        throw Error(ErrorKind::InvalidArgument, "replicate set is empty");
    }
    const auto& first = replicates.front();
    for (std::size_t r = 1; r < replicates.size(); ++r) {
        if (replicates[r].width != first.width || replicates[r].height != first.height ||
            !(replicates[r].mpp == first.mpp)) {
            throw Error(ErrorKind::InvalidArgument,
                        "replicate " + std::to_string(r) + " differs in dimensions or MPP from replicate 0");
        }
    }
    const std::size_t n = first.npixels();
    std::vector<double> acc(first.data.size(), 0.0);
    for (const auto& m : replicates) {
        for (std::size_t k = 0; k < acc.size(); ++k) {
            acc[k] += m.data[k];
        }
    }
    ProbabilityMap out(first.width, first.height, first.mpp);
    for (std::size_t i = 0; i < n; ++i) {
        const double s = acc[i] + acc[n + i] + acc[2 * n + i];
        for (int c = 0; c < kPmapChannels; ++c) {
            const double v = s > 0.0 ? acc[c * n + i] / s : (c == 0 ? 1.0 : 0.0);
            out.data[c * n + i] = static_cast<float>(v);
        }
    }
    return out;
}

/**
 * Produces a probability map for one reference-resolution tile.
 * Implementations must be safe to call concurrently on distinct tiles.
 */
class InferenceBackend {
public:
    virtual ~InferenceBackend() = default;
    virtual ProbabilityMap infer(const Tile& tile) const = 0;
};

class DeconvolutionBackend final : public InferenceBackend {
public:
    explicit DeconvolutionBackend(StainParams params = {}) : params_(params) { StainUnmixer check(params_); }

    ProbabilityMap infer(const Tile& tile) const override { return baseline_infer(tile.image, params_); }

private:
    StainParams params_;
};

/**
 * File-based hook for external models: reads `<dir>/tile_<gx>_<gy>.json` written per tile.
 */
class PmapDirectoryBackend final : public InferenceBackend {
public:
    explicit PmapDirectoryBackend(std::filesystem::path dir) : dir_(std::move(dir)) {}

    static std::string tile_name(int gx, int gy) {
        return "tile_" + std::to_string(gx) + "_" + std::to_string(gy) + ".json";
    }

    ProbabilityMap infer(const Tile& tile) const override {
        auto map = read_pmap(dir_ / tile_name(tile.gx, tile.gy));
        if (map.width != tile.image.width || map.height != tile.image.height) {
            throw Error(ErrorKind::Format, "probability map for tile (" + std::to_string(tile.gx) + "," +
                                               std::to_string(tile.gy) + ") does not match the tile size");
        }
        return map;
    }

private:
    std::filesystem::path dir_;
};

} // namespace ihcq

#endif
