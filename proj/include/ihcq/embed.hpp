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

#ifndef IHCQ_EMBED_HPP
#define IHCQ_EMBED_HPP

/**
 * @file embed.hpp
 *
 * @brief Patch representations: raw-pixel features, 2D projection, mosaics and cohort similarity.
 */

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "core.hpp"
#include "image.hpp"
#include "stats.hpp"
#include "util.hpp"

namespace ihcq {

struct FeatureVector {
    std::string patch_id;
    std::string cohort_id;
    std::vector<double> values;
};

inline constexpr int kPixelFeatureGrid = 32;

namespace detail {

struct AreaTap {
    int src;
    double weight;
};

// Box-filter taps mapping `n_in` source pixels onto `n_out` equal-width bins.
inline std::vector<std::vector<AreaTap>> area_taps(int n_in, int n_out) {
    std::vector<std::vector<AreaTap>> taps(n_out);
    const double scale = static_cast<double>(n_in) / n_out;
    for (int o = 0; o < n_out; ++o) {
        const double lo = o * scale;
        const double hi = (o + 1) * scale;
        for (int s = static_cast<int>(std::floor(lo)); s < std::min(n_in, static_cast<int>(std::ceil(hi))); ++s) {
            const double w = std::min(hi, s + 1.0) - std::max(lo, static_cast<double>(s));
            if (w > 0.0) {
                taps[o].push_back(AreaTap{s, w / scale});
            }
        }
    }
    return taps;
}

// Area-average downsample to out_w x out_h, returning interleaved RGB doubles in [0, 255].
inline std::vector<double> area_downsample(const PatchImage& img, int out_w, int out_h) {
    const auto xt = area_taps(img.width, out_w);
    const auto yt = area_taps(img.height, out_h);
    std::vector<double> out(static_cast<std::size_t>(out_w) * out_h * 3, 0.0);
    for (int oy = 0; oy < out_h; ++oy) {
        for (int ox = 0; ox < out_w; ++ox) {
            double acc[3] = {0.0, 0.0, 0.0};
            for (const auto& ty : yt[oy]) {
                for (const auto& tx : xt[ox]) {
                    const auto* p = img.at(tx.src, ty.src);
                    const double w = tx.weight * ty.weight;
                    acc[0] += w * p[0];
                    acc[1] += w * p[1];
                    acc[2] += w * p[2];
                }
            }
            auto* dst = out.data() + (static_cast<std::size_t>(oy) * out_w + ox) * 3;
            dst[0] = acc[0];
            dst[1] = acc[1];
            dst[2] = acc[2];
        }
    }
    return out;
}

} // namespace detail

/**
 * Raw-pixel baseline representation: area-average the patch down to 32 x 32, flatten
 * row-major with interleaved RGB and scale to [0, 1], giving 3072 values.
 */
inline FeatureVector pixel_features(const PatchImage& img, std::string patch_id = {}, std::string cohort_id = {}) {
    if (img.width == 0 || img.height == 0) {
        throw Error(ErrorKind::InvalidArgument, "cannot extract features from an empty image");
    }
    auto values = detail::area_downsample(img, kPixelFeatureGrid, kPixelFeatureGrid);
    for (auto& v : values) {
        v /= 255.0;
    }
    return FeatureVector{std::move(patch_id), std::move(cohort_id), std::move(values)};
}

enum class ProjectionMethod { Pca, External };

struct Projection2D {
    ProjectionMethod method = ProjectionMethod::Pca;
    std::vector<std::string> patch_ids;
    std::vector<double> u;
    std::vector<double> v;

    std::size_t size() const { return u.size(); }
};

namespace detail {

inline Eigen::MatrixXd centered_matrix(std::span<const FeatureVector> features) {
    if (features.size() < 2) {
        throw Error(ErrorKind::InvalidArgument, "projection needs at least two feature vectors");
    }
    const std::size_t d = features.front().values.size();
    if (d == 0) {
        throw Error(ErrorKind::InvalidArgument, "feature vectors are empty");
    }
    Eigen::MatrixXd x(features.size(), d);
    for (std::size_t i = 0; i < features.size(); ++i) {
        if (features[i].values.size() != d) {
            throw Error(ErrorKind::InvalidArgument, "feature '" + features[i].patch_id + "' has dimension " +
                                                        std::to_string(features[i].values.size()) + ", expected " +
                                                        std::to_string(d));
        }
        for (std::size_t k = 0; k < d; ++k) {
            if (!std::isfinite(features[i].values[k])) {
                throw Error(ErrorKind::InvalidArgument, "feature '" + features[i].patch_id + "' is not finite");
            }
            x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = features[i].values[k];
        }
    }
    x.rowwise() -= x.colwise().mean();
    return x;
}

} // namespace detail

/**
 * PCA onto the two leading principal axes of the mean-centred features.
 *
 * Each axis is oriented so that its largest-magnitude loading is positive. The eigenproblem is
 * solved on whichever of X^T X and X X^T is smaller. Data without variance is rejected.
 */
inline Projection2D project_pca(std::span<const FeatureVector> features) {
    const Eigen::MatrixXd x = detail::centered_matrix(features);
    const Eigen::Index n = x.rows();
    const Eigen::Index d = x.cols();
    const double total = x.squaredNorm();
    if (!(total > 0.0)) {
        throw Error(ErrorKind::Degenerate, "all feature vectors are identical");
    }

    Eigen::MatrixXd axes = Eigen::MatrixXd::Zero(d, 2);
    if (d <= n) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(x.transpose() * x);
        for (int k = 0; k < 2 && k < d; ++k) {
            axes.col(k) = es.eigenvectors().col(d - 1 - k);
        }
    } else {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(x * x.transpose());
        for (int k = 0; k < 2 && k < n; ++k) {
            const Eigen::VectorXd a = x.transpose() * es.eigenvectors().col(n - 1 - k);
            const double norm = a.norm();
            if (norm > 1e-12 * std::sqrt(total)) {
                axes.col(k) = a / norm;
            }
        }
    }
    for (int k = 0; k < 2; ++k) {
        Eigen::Index arg = 0;
        axes.col(k).cwiseAbs().maxCoeff(&arg);
        if (axes(arg, k) < 0.0) {
            axes.col(k) = -axes.col(k);
        }
    }

    const Eigen::MatrixXd coords = x * axes;
    Projection2D p;
    p.method = ProjectionMethod::Pca;
    for (Eigen::Index i = 0; i < n; ++i) {
        p.patch_ids.push_back(features[static_cast<std::size_t>(i)].patch_id);
        p.u.push_back(coords(i, 0));
        p.v.push_back(coords(i, 1));
    }
    return p;
}

/**
 * Reads externally computed coordinates (`patch_id,u,v`), e.g. from a UMAP run, ordered to match `features`.
 */
inline Projection2D read_projection(const std::filesystem::path& path, std::span<const FeatureVector> features) {
    const auto table = csv::read(path);
    const int ci = table.column("patch_id");
    const int cu = table.column("u");
    const int cv = table.column("v");
    if (ci < 0 || cu < 0 || cv < 0) {
        throw Error(ErrorKind::Format, path.string() + ":1: header must contain patch_id,u,v");
    }
    std::unordered_map<std::string, std::pair<double, double>> coords;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const std::string where = path.string() + ":" + std::to_string(table.line_numbers[r]);
        const auto& row = table.rows[r];
        coords[row[ci]] = {csv::parse_double(row[cu], where), csv::parse_double(row[cv], where)};
    }
    Projection2D p;
    p.method = ProjectionMethod::External;
    for (const auto& f : features) {
        const auto it = coords.find(f.patch_id);
        if (it == coords.end()) {
            throw Error(ErrorKind::Format, path.string() + ": no coordinates for patch '" + f.patch_id + "'");
        }
        p.patch_ids.push_back(f.patch_id);
        p.u.push_back(it->second.first);
        p.v.push_back(it->second.second);
    }
    return p;
}

struct MosaicCell {
    int col = 0;
    int row = 0;
    /// Index into the projection of the representative patch.
    std::size_t representative = 0;
    std::vector<std::size_t> members;
};

struct MosaicLayout {
    int grid_n = 0;
    double u_min = 0.0, u_max = 0.0, v_min = 0.0, v_max = 0.0;
    std::vector<MosaicCell> cells;
};

/**
 * Bins the projection extent into grid_n x grid_n cells (row 0 holds the smallest v) and picks,
 * per occupied cell, the member minimizing the summed distance to the other members
 * (ties: lowest index). Cells are listed row-major.
 */
inline MosaicLayout mosaic(const Projection2D& proj, int grid_n) {
    if (grid_n < 2) {
        throw Error(ErrorKind::InvalidArgument, "mosaic grid must be at least 2x2");
    }
    if (proj.size() == 0) {
        throw Error(ErrorKind::InvalidArgument, "empty projection");
    }
    MosaicLayout layout;
    layout.grid_n = grid_n;
    const auto [umin, umax] = std::minmax_element(proj.u.begin(), proj.u.end());
    const auto [vmin, vmax] = std::minmax_element(proj.v.begin(), proj.v.end());
    layout.u_min = *umin;
    layout.u_max = *umax;
    layout.v_min = *vmin;
    layout.v_max = *vmax;

    auto bin = [grid_n](double value, double lo, double hi) {
        if (!(hi > lo)) {
            return 0;
        }
        const int b = static_cast<int>(std::floor((value - lo) / (hi - lo) * grid_n));
        return std::clamp(b, 0, grid_n - 1);
    };

    std::map<std::pair<int, int>, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < proj.size(); ++i) {
        const int col = bin(proj.u[i], layout.u_min, layout.u_max);
        const int row = bin(proj.v[i], layout.v_min, layout.v_max);
        groups[{row, col}].push_back(i);
    }
    for (auto& [key, members] : groups) {
        std::size_t best = members.front();
        double best_sum = std::numeric_limits<double>::infinity();
        for (const auto a : members) {
            double sum = 0.0;
            for (const auto b : members) {
                sum += std::hypot(proj.u[a] - proj.u[b], proj.v[a] - proj.v[b]);
            }
            if (sum < best_sum) {
                best_sum = sum;
                best = a;
            }
        }
        layout.cells.push_back(MosaicCell{key.second, key.first, best, std::move(members)});
    }
    return layout;
}

/**
 * Draws each cell's representative patch as a `thumb` x `thumb` tile on a white canvas.
 * `patches[i]` is the image of projection point i.
 */
inline PatchImage render_mosaic(const MosaicLayout& layout, std::span<const PatchImage> patches, int thumb = 64) {
    if (thumb < 1) {
        throw Error(ErrorKind::InvalidArgument, "thumbnail size must be positive");
    }
    const int side = layout.grid_n * thumb;
    PatchImage canvas(side, side, reference_mpp());
    canvas.fill(255, 255, 255);
    for (const auto& cell : layout.cells) {
        if (cell.representative >= patches.size()) {
            throw Error(ErrorKind::InvalidArgument, "missing patch image for mosaic cell");
        }
        const auto small = detail::area_downsample(patches[cell.representative], thumb, thumb);
        // Row 0 (smallest v) is drawn at the bottom so the mosaic reads like a scatter plot.
        const int oy = (layout.grid_n - 1 - cell.row) * thumb;
        const int ox = cell.col * thumb;
        for (int y = 0; y < thumb; ++y) {
            for (int x = 0; x < thumb; ++x) {
                const auto* s = small.data() + (static_cast<std::size_t>(y) * thumb + x) * 3;
                auto* d = canvas.at(ox + x, oy + y);
                for (int c = 0; c < 3; ++c) {
                    d[c] = static_cast<std::uint8_t>(std::clamp(std::floor(s[c] + 0.5), 0.0, 255.0));
                }
            }
        }
    }
    return canvas;
}

inline nlohmann::ordered_json to_json(const MosaicLayout& layout, const Projection2D& proj) {
    nlohmann::ordered_json j;
    j["grid_n"] = layout.grid_n;
    j["extent"] = {{"u_min", layout.u_min}, {"u_max", layout.u_max}, {"v_min", layout.v_min}, {"v_max", layout.v_max}};
    j["cells"] = nlohmann::ordered_json::array();
    for (const auto& c : layout.cells) {
        nlohmann::ordered_json cj;
        cj["col"] = c.col;
        cj["row"] = c.row;
        cj["patch_id"] = proj.patch_ids[c.representative];
        auto members = nlohmann::ordered_json::array();
        for (const auto m : c.members) {
            members.push_back(proj.patch_ids[m]);
        }
        cj["members"] = members;
        j["cells"].push_back(cj);
    }
    return j;
}

struct SimilarityMatrix {
    std::vector<std::string> cohorts;
    /// Two-sided rank-sum p-values; the diagonal is unused and set to 1.
    std::vector<std::vector<double>> p_values;
    /// Mean of the strict upper triangle; higher means cohorts are harder to tell apart.
    double summary = 0.0;
};

/**
 * Reduces each patch to its Euclidean distance from the global feature centroid and compares
 * every pair of cohorts with a two-sided Mann-Whitney test on those distances.
 * Cohorts are ordered by id.
 */
inline SimilarityMatrix cohort_similarity(std::span<const FeatureVector> features) {
    const Eigen::MatrixXd x = detail::centered_matrix(features);
    std::map<std::string, std::vector<double>> by_cohort;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        by_cohort[features[static_cast<std::size_t>(i)].cohort_id].push_back(x.row(i).norm());
    }
    if (by_cohort.size() < 2) {
        throw Error(ErrorKind::InvalidArgument, "cohort similarity needs at least two cohorts");
    }
    for (const auto& [id, values] : by_cohort) {
        if (values.size() < 2) {
            throw Error(ErrorKind::InvalidArgument, "cohort '" + id + "' has fewer than two patches");
        }
    }
    SimilarityMatrix s;
    std::vector<const std::vector<double>*> samples;
    for (const auto& [id, values] : by_cohort) {
        s.cohorts.push_back(id);
        samples.push_back(&values);
    }
    const std::size_t k = s.cohorts.size();
    s.p_values.assign(k, std::vector<double>(k, 1.0));
    double total = 0.0;
    for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t b = a + 1; b < k; ++b) {
            const double p = mann_whitney(*samples[a], *samples[b]).p_value;
            s.p_values[a][b] = p;
            s.p_values[b][a] = p;
            total += p;
        }
    }
    s.summary = total / static_cast<double>(k * (k - 1) / 2);
    return s;
}

inline std::vector<FeatureVector> read_features(const std::filesystem::path& path) {
    const auto table = csv::read(path);
    if (table.header.size() < 3 || table.header[0] != "patch_id" || table.header[1] != "cohort_id") {
        throw Error(ErrorKind::Format, path.string() + ":1: header must be patch_id,cohort_id,f0,...");
    }
    std::vector<FeatureVector> out;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::string where = path.string() + ":" + std::to_string(table.line_numbers[r]);
        FeatureVector f{row[0], row[1], {}};
        f.values.reserve(row.size() - 2);
        for (std::size_t k = 2; k < row.size(); ++k) {
            f.values.push_back(csv::parse_double(row[k], where));
        }
        out.push_back(std::move(f));
    }
    return out;
}

inline std::string format_features(std::span<const FeatureVector> features) {
    std::string s = "patch_id,cohort_id";
    const std::size_t d = features.empty() ? 0 : features.front().values.size();
    for (std::size_t k = 0; k < d; ++k) {
        s += ",f" + std::to_string(k);
    }
    s += "\n";
    for (const auto& f : features) {
        s += f.patch_id + "," + f.cohort_id;
        for (const double v : f.values) {
            s += "," + csv::format_double(v);
        }
        s += "\n";
    }
    return s;
}

inline std::string format_projection(const Projection2D& p) {
    std::string s = "patch_id,u,v\n";
    for (std::size_t i = 0; i < p.size(); ++i) {
        s += p.patch_ids[i] + "," + csv::format_double(p.u[i]) + "," + csv::format_double(p.v[i]) + "\n";
    }
    return s;
}

} // namespace ihcq

#endif
