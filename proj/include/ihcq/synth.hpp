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

#ifndef IHCQ_SYNTH_HPP
#define IHCQ_SYNTH_HPP

/**
 * @file synth.hpp
 *
 * @brief Synthetic IHC patches, slides and probability maps with exact ground truth.
 *
 * Randomness comes from std::mt19937_64, whose output sequence is fixed by the standard,
 * and hand-rolled uniform/normal transforms, so identical specs give identical bytes on every platform.
 */

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "annotations.hpp"
#include "core.hpp"
#include "image.hpp"
#include "inference.hpp"
#include "slide_io.hpp"
#include "util.hpp"

namespace ihcq {

using Rgb = std::array<std::uint8_t, 3>;

/**
 * Deterministic random source: uniform doubles in [0, 1) and standard normals.
 */
class SynthRng {
public:
    explicit SynthRng(std::uint64_t seed) : engine_(seed) {}

    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)); }

    double normal() {
        if (spare_) {
            const double v = *spare_;
            spare_.reset();
            return v;
        }
        double u1 = uniform();
        while (u1 <= 0.0) {
            u1 = uniform();
        }
        const double u2 = uniform();
        const double mag = std::sqrt(-2.0 * std::log(u1));
        spare_ = mag * std::sin(2.0 * std::numbers::pi * u2);
        return mag * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::mt19937_64 engine_;
    std::optional<double> spare_;
};

struct SynthSpec {
    std::uint64_t seed = 0;
    int width = 1024;
    int height = 1024;
    int n_cells = 50;
    double pos_fraction = 0.5;
    double cell_radius_min = 4.0;
    double cell_radius_max = 6.0;
    double min_spacing = 18.0;
    double noise_sigma = 0.0;
    Rgb pos_color{120, 75, 35};
    Rgb neg_color{70, 60, 140};
    Rgb background{245, 242, 240};

    void validate() const {
        std::vector<std::string> problems;
        if (width <= 0 || height <= 0) problems.push_back("width and height must be positive");
        if (n_cells < 0) problems.push_back("n_cells must be non-negative");
        if (!(pos_fraction >= 0.0 && pos_fraction <= 1.0)) problems.push_back("pos_fraction must lie in [0,1]");
        if (!(cell_radius_min > 0.0 && cell_radius_min <= cell_radius_max))
            problems.push_back("cell radius range must satisfy 0 < min <= max");
        if (!(min_spacing >= 2.0 * cell_radius_max))
            problems.push_back("min_spacing must be at least twice the maximum cell radius");
        if (!(noise_sigma >= 0.0)) problems.push_back("noise_sigma must be non-negative");
        if (!problems.empty()) {
            throw Error(ErrorKind::InvalidArgument, "invalid synthetic spec", problems);
        }
    }

    /// Number of planted TC_POS cells.
    int n_positive() const { return static_cast<int>(std::lround(pos_fraction * n_cells)); }
};

struct SynthTruth {
    std::vector<CellAnnotation> annotations;

    /// 100 * #TC_POS / #cells, undefined without cells.
    std::optional<double> true_tps() const {
        if (annotations.empty()) {
            return std::nullopt;
        }
        const auto pos = std::count_if(annotations.begin(), annotations.end(),
                                       [](const CellAnnotation& a) { return a.cls == CellClass::TcPos; });
        return 100.0 * static_cast<double>(pos) / static_cast<double>(annotations.size());
    }
};

struct SynthPatch {
    PatchImage image;
    SynthTruth truth;
};

inline constexpr int kPlacementAttempts = 10000;

namespace detail {

// Soft-edged disk profile: 1 at the centre, falling smoothly to 0 at `radius`.
inline double disk_profile(double r, double radius) {
    return r >= radius ? 0.0 : 0.5 * (1.0 + std::cos(std::numbers::pi * r / radius));
}

} // namespace detail

/**
 * Renders `n_cells` non-overlapping soft-edged nuclei at rejection-sampled integer centres.
 *
 * The first round(pos_fraction * n_cells) placed cells are TC_POS. Colours are mixed in
 * optical-density space, so stain concentration peaks at the cell centre. Gaussian noise of
 * `noise_sigma` intensity units is added before rounding and clamping.
 */
inline SynthPatch generate_patch(const SynthSpec& spec) {
    spec.validate();
    SynthRng rng(spec.seed);
    const int n_pos = spec.n_positive();

    struct Cell {
        int x, y;
        double radius;
        CellClass cls;
    };
    std::vector<Cell> cells;
    cells.reserve(spec.n_cells);

    const double spacing2 = spec.min_spacing * spec.min_spacing;
    const int bucket = std::max(1, static_cast<int>(std::ceil(spec.min_spacing)));
    const int bw = spec.width / bucket + 1;
    const int bh = spec.height / bucket + 1;
    std::vector<std::vector<int>> buckets(static_cast<std::size_t>(bw) * bh);

    for (int i = 0; i < spec.n_cells; ++i) {
        bool placed = false;
        for (int attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
            const int x = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.width)));
            const int y = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.height)));
            const int bx = x / bucket;
            const int by = y / bucket;
            bool ok = true;
            for (int ny = std::max(0, by - 1); ny <= std::min(bh - 1, by + 1) && ok; ++ny) {
                for (int nx = std::max(0, bx - 1); nx <= std::min(bw - 1, bx + 1) && ok; ++nx) {
                    for (const int k : buckets[static_cast<std::size_t>(ny) * bw + nx]) {
                        const double dx = cells[k].x - x;
                        const double dy = cells[k].y - y;
                        if (dx * dx + dy * dy < spacing2) {
                            ok = false;
                            break;
                        }
                    }
                }
            }
            if (!ok) {
                continue;
            }
            const double radius =
                spec.cell_radius_min + rng.uniform() * (spec.cell_radius_max - spec.cell_radius_min);
            buckets[static_cast<std::size_t>(by) * bw + bx].push_back(static_cast<int>(cells.size()));
            cells.push_back(Cell{x, y, radius, i < n_pos ? CellClass::TcPos : CellClass::TcNeg});
            placed = true;
        }
        if (!placed) {
            throw Error(ErrorKind::Infeasible, "could not place cell " + std::to_string(i) + " of " +
                                                   std::to_string(spec.n_cells) + " after " +
                                                   std::to_string(kPlacementAttempts) + " attempts");
        }
    }

    // Per-pixel stain fraction; cells never overlap because spacing >= 2 * max radius.
    std::vector<float> alpha(static_cast<std::size_t>(spec.width) * spec.height, 0.0f);
    std::vector<std::uint8_t> owner(alpha.size(), 0);
    for (const auto& c : cells) {
        const int reach = static_cast<int>(std::ceil(c.radius));
        for (int y = std::max(0, c.y - reach); y <= std::min(spec.height - 1, c.y + reach); ++y) {
            for (int x = std::max(0, c.x - reach); x <= std::min(spec.width - 1, c.x + reach); ++x) {
                const double r = std::hypot(static_cast<double>(x - c.x), static_cast<double>(y - c.y));
                const double a = detail::disk_profile(r, c.radius);
                if (a > 0.0) {
                    const std::size_t i = static_cast<std::size_t>(y) * spec.width + x;
                    alpha[i] = static_cast<float>(a);
                    owner[i] = static_cast<std::uint8_t>(c.cls);
                }
            }
        }
    }

    std::array<double, 3> od_bg{}, od_pos{}, od_neg{};
    for (int k = 0; k < 3; ++k) {
        od_bg[k] = optical_density(spec.background[k]);
        od_pos[k] = optical_density(spec.pos_color[k]);
        od_neg[k] = optical_density(spec.neg_color[k]);
    }

    PatchImage img(spec.width, spec.height, reference_mpp());
    std::uint8_t* px = img.pixels.data();
    for (std::size_t i = 0; i < alpha.size(); ++i, px += 3) {
        for (int k = 0; k < 3; ++k) {
            double v;
            if (owner[i] == 0) {
                v = spec.background[k];
            } else {
                const auto& od_cell = owner[i] == static_cast<std::uint8_t>(CellClass::TcPos) ? od_pos : od_neg;
                const double a = alpha[i];
                const double od = (1.0 - a) * od_bg[k] + a * od_cell[k];
                v = 256.0 * std::pow(10.0, -od) - 1.0;
            }
            if (spec.noise_sigma > 0.0) {
                v += spec.noise_sigma * rng.normal();
            }
            px[k] = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
        }
    }

    SynthTruth truth;
    truth.annotations.reserve(cells.size());
    for (const auto& c : cells) {
        truth.annotations.push_back(CellAnnotation{c.x, c.y, c.cls});
    }
    return SynthPatch{std::move(img), std::move(truth)};
}

struct SlideSynthSpec {
    SynthSpec tile;
    int grid_w = 1;
    int grid_h = 1;
    /// Probability that a tile is left as pure background.
    double blank_fraction = 0.0;
    std::string slide_id = "synthetic";
};

struct SynthSlide {
    SlideManifest manifest;
    SynthTruth truth;
};

inline std::string synth_tile_name(int gx, int gy) {
    return "tile_" + std::to_string(gx) + "_" + std::to_string(gy) + ".png";
}

/**
 * Writes a grid of synthetic tiles plus `manifest.json` into `out_dir`.
 * Tile (gx, gy) has index gy * grid_w + gx and is generated from seed ^ index.
 * The returned truth lists every cell in global reference-resolution coordinates, row-major by tile.
 */
inline SynthSlide generate_slide(const SlideSynthSpec& spec, const std::filesystem::path& out_dir, int workers = 1) {
    spec.tile.validate();
    if (spec.grid_w <= 0 || spec.grid_h <= 0) {
        throw Error(ErrorKind::InvalidArgument, "grid dimensions must be positive");
    }
    if (spec.tile.width != spec.tile.height) {
        throw Error(ErrorKind::InvalidArgument, "slide tiles must be square");
    }
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) {
        throw Error(ErrorKind::Io, "cannot create '" + out_dir.string() + "': " + ec.message());
    }

    const std::size_t n = static_cast<std::size_t>(spec.grid_w) * spec.grid_h;
    std::vector<SynthTruth> truths(n);
    parallel_for(n, workers, [&](std::size_t index) {
        const int gx = static_cast<int>(index % spec.grid_w);
        const int gy = static_cast<int>(index / spec.grid_w);
        SynthSpec tile_spec = spec.tile;
        tile_spec.seed = spec.tile.seed ^ static_cast<std::uint64_t>(index);
        if (spec.blank_fraction > 0.0) {
            SynthRng blank_rng(tile_spec.seed ^ 0x9e3779b97f4a7c15ULL);
            if (blank_rng.uniform() < spec.blank_fraction) {
                tile_spec.n_cells = 0;
            }
        }
        auto patch = generate_patch(tile_spec);
        write_rgb_png(patch.image, out_dir / synth_tile_name(gx, gy));
        for (auto& a : patch.truth.annotations) {
            a.x += gx * spec.tile.width;
            a.y += gy * spec.tile.height;
        }
        truths[index] = std::move(patch.truth);
    });

    SynthSlide slide;
    slide.manifest.slide_id = spec.slide_id;
    slide.manifest.source_mpp = reference_mpp();
    slide.manifest.tile_size = spec.tile.width;
    slide.manifest.base_dir = out_dir;
    for (std::size_t index = 0; index < n; ++index) {
        const int gx = static_cast<int>(index % spec.grid_w);
        const int gy = static_cast<int>(index / spec.grid_w);
        slide.manifest.tiles.push_back(TileRecord{synth_tile_name(gx, gy), gx, gy});
        slide.truth.annotations.insert(slide.truth.annotations.end(), truths[index].annotations.begin(),
                                       truths[index].annotations.end());
    }
    write_manifest(slide.manifest, out_dir / "manifest.json");
    return slide;
}

struct PmapSynthOptions {
    /// Standard deviation of each planted Gaussian bump, in pixels.
    double sigma = 2.5;
    double amplitude = 0.95;
    /// Standard deviation of Gaussian noise added to each channel's log-probability.
    double noise = 0.0;
    std::uint64_t seed = 0;
};

/**
 * Probability map with a Gaussian bump per truth cell in that cell's class channel and the
 * residual in the background channel. With noise, log-probabilities are perturbed and re-softmaxed.
 */
inline ProbabilityMap synthesize_pmap(std::span<const CellAnnotation> cells, int width, int height,
                                      const PmapSynthOptions& opts = {}, Mpp mpp = reference_mpp()) {
    if (!(opts.sigma > 0.0) || !(opts.amplitude > 0.0 && opts.amplitude <= 1.0) || !(opts.noise >= 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "invalid probability-map synthesis options");
    }
    ProbabilityMap map(width, height, mpp);
    const std::size_t n = map.npixels();
    std::vector<double> neg(n, 0.0), pos(n, 0.0);
    const int reach = static_cast<int>(std::ceil(4.0 * opts.sigma));
    const double inv2s2 = 1.0 / (2.0 * opts.sigma * opts.sigma);
    for (const auto& c : cells) {
        auto& plane = c.cls == CellClass::TcPos ? pos : neg;
        for (int y = std::max(0, c.y - reach); y <= std::min(height - 1, c.y + reach); ++y) {
            for (int x = std::max(0, c.x - reach); x <= std::min(width - 1, c.x + reach); ++x) {
                const double d2 = static_cast<double>((x - c.x) * (x - c.x) + (y - c.y) * (y - c.y));
                const double v = opts.amplitude * std::exp(-d2 * inv2s2);
                auto& slot = plane[static_cast<std::size_t>(y) * width + x];
                slot = std::max(slot, v);
            }
        }
    }
    SynthRng rng(opts.seed);
    for (std::size_t i = 0; i < n; ++i) {
        double pn = neg[i];
        double pp = pos[i];
        const double fg = pn + pp;
        if (fg > 1.0) {
            pn /= fg;
            pp /= fg;
        }
        double pb = std::max(0.0, 1.0 - pn - pp);
        if (opts.noise > 0.0) {
            constexpr double kFloor = 1e-6;
            const double lb = std::log(std::max(pb, kFloor)) + opts.noise * rng.normal();
            const double ln = std::log(std::max(pn, kFloor)) + opts.noise * rng.normal();
            const double lp = std::log(std::max(pp, kFloor)) + opts.noise * rng.normal();
            const double m = std::max({lb, ln, lp});
            const double eb = std::exp(lb - m), en = std::exp(ln - m), ep = std::exp(lp - m);
            const double s = eb + en + ep;
            pb = eb / s;
            pn = en / s;
            pp = ep / s;
        }
        map.data[i] = static_cast<float>(pb);
        map.data[n + i] = static_cast<float>(pn);
        map.data[2 * n + i] = static_cast<float>(pp);
    }
    return map;
}

} // namespace ihcq

#endif
