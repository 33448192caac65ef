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

#ifndef IHCQ_IMAGE_HPP
#define IHCQ_IMAGE_HPP

/**
 * @file image.hpp
 *
 * @brief RGB patches, tissue masks, resolution normalization and background detection.
 */

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "core.hpp"

namespace ihcq {

/**
 * Row-major interleaved 8-bit RGB patch at a known resolution.
 */
struct PatchImage {
    PatchImage(int w, int h, Mpp resolution)
        : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, 0), mpp(resolution) {
        if (w < 0 || h < 0) {
            throw Error(ErrorKind::InvalidArgument, "negative image dimensions");
        }
    }

    PatchImage(int w, int h, Mpp resolution, std::vector<std::uint8_t> data)
        : width(w), height(h), pixels(std::move(data)), mpp(resolution) {
        if (w < 0 || h < 0 || pixels.size() != static_cast<std::size_t>(w) * h * 3) {
            throw Error(ErrorKind::InvalidArgument, "pixel buffer length does not match width x height x 3");
        }
    }

    int width;
    int height;
    std::vector<std::uint8_t> pixels;
    Mpp mpp;

    std::size_t npixels() const { return static_cast<std::size_t>(width) * height; }

    std::uint8_t* at(int x, int y) { return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
    const std::uint8_t* at(int x, int y) const { return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3; }

    void fill(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
        for (std::size_t i = 0; i < pixels.size(); i += 3) {
            pixels[i] = r;
            pixels[i + 1] = g;
            pixels[i + 2] = b;
        }
    }

    /// Physical area covered by the patch in square millimetres.
    double area_mm2() const {
        const double w_mm = width * mpp.value() * 1e-3;
        const double h_mm = height * mpp.value() * 1e-3;
        return w_mm * h_mm;
    }
};

/**
 * Binary tissue (true) / background (false) flags, one per pixel of a grid
 * that is `downsample` times coarser than the image it describes.
 */
struct TissueMask {
    int width = 0;
    int height = 0;
    int downsample = 1;
    std::vector<std::uint8_t> bits;

    bool tissue(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }

    double tissue_fraction() const {
        if (bits.empty()) {
            return 0.0;
        }
        const auto n = std::count_if(bits.begin(), bits.end(), [](std::uint8_t b) { return b != 0; });
        return static_cast<double>(n) / static_cast<double>(bits.size());
    }
};

/**
 * Output extent of a resample from `source` to `target` resolution: round(n * source / target).
 */
inline int resampled_extent(int n, Mpp source, Mpp target) {
    return static_cast<int>(std::lround(static_cast<double>(n) * source.value() / target.value()));
}

/**
 * Bilinear resample of `img` so that it is expressed at `target` MPP.
 *
 * Pixel centres are mapped so that the physical extent of the patch is preserved;
 * samples outside the source are clamped to the border.
 * When the source and target resolutions match, the buffer is returned unchanged.
 */
inline PatchImage resample_to_reference(const PatchImage& img, Mpp target) {
    if (img.width == 0 || img.height == 0) {
        throw Error(ErrorKind::InvalidArgument, "cannot resample a zero-dimension image");
    }
    if (img.mpp == target) {
        return img;
    }

    const int out_w = std::max(1, resampled_extent(img.width, img.mpp, target));
    const int out_h = std::max(1, resampled_extent(img.height, img.mpp, target));
    PatchImage out(out_w, out_h, target);

    const double sx = static_cast<double>(img.width) / out_w;
    const double sy = static_cast<double>(img.height) / out_h;

    struct Tap {
        int i0, i1;
        double w1;
    };
    auto make_taps = [](int n_out, int n_in, double scale) {
        std::vector<Tap> taps(n_out);
        for (int o = 0; o < n_out; ++o) {
            double src = (o + 0.5) * scale - 0.5;
            src = std::clamp(src, 0.0, static_cast<double>(n_in - 1));
            const int i0 = static_cast<int>(std::floor(src));
            const int i1 = std::min(i0 + 1, n_in - 1);
            taps[o] = Tap{i0, i1, src - i0};
        }
        return taps;
    };
    const auto xt = make_taps(out_w, img.width, sx);
    const auto yt = make_taps(out_h, img.height, sy);

    for (int y = 0; y < out_h; ++y) {
        const auto& ty = yt[y];
        for (int x = 0; x < out_w; ++x) {
            const auto& tx = xt[x];
            const std::uint8_t* p00 = img.at(tx.i0, ty.i0);
            const std::uint8_t* p10 = img.at(tx.i1, ty.i0);
            const std::uint8_t* p01 = img.at(tx.i0, ty.i1);
            const std::uint8_t* p11 = img.at(tx.i1, ty.i1);
            std::uint8_t* dst = out.at(x, y);
            for (int c = 0; c < 3; ++c) {
                const double top = p00[c] + (p10[c] - p00[c]) * tx.w1;
                const double bottom = p01[c] + (p11[c] - p01[c]) * tx.w1;
                const double v = top + (bottom - top) * ty.w1;
                dst[c] = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
            }
        }
    }
    return out;
}

inline constexpr int kDefaultWhiteThreshold = 235;

/**
 * Flags a pixel as background iff min(R, G, B) >= `white_threshold`.
 */
inline TissueMask background_mask(const PatchImage& img, int white_threshold = kDefaultWhiteThreshold) {
    TissueMask mask;
    mask.width = img.width;
    mask.height = img.height;
    mask.downsample = 1;
    mask.bits.resize(img.npixels());
    const std::uint8_t* p = img.pixels.data();
    for (std::size_t i = 0, n = img.npixels(); i < n; ++i, p += 3) {
        const int m = std::min({p[0], p[1], p[2]});
        mask.bits[i] = m >= white_threshold ? 0 : 1;
    }
    return mask;
}

} // namespace ihcq

#endif
