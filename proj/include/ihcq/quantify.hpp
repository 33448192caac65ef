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

#ifndef IHCQ_QUANTIFY_HPP
#define IHCQ_QUANTIFY_HPP

/**
 * @file quantify.hpp
 *
 * @brief Slide-level tumor proportion score and its categorical evaluation against pathologist consensus.
 */

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "core.hpp"
#include "stats.hpp"

namespace ihcq {

struct TpsResult {
    std::string slide_id;
    std::int64_t n_pos = 0;
    std::int64_t n_neg = 0;
    double tps = 0.0;
};

/**
 * TPS = 100 * #TC+ / (#TC- + #TC+). Undefined, and an error, for a slide without tumor cells.
 */
inline TpsResult tps_from_counts(std::int64_t n_pos, std::int64_t n_neg, std::string slide_id = {}) {
    if (n_pos < 0 || n_neg < 0) {
        throw Error(ErrorKind::InvalidArgument, "negative cell counts");
    }
    if (n_pos + n_neg == 0) {
        throw Error(ErrorKind::Degenerate, "TPS is undefined for a slide without tumor cells");
    }
    return TpsResult{std::move(slide_id), n_pos, n_neg,
                     100.0 * static_cast<double>(n_pos) / static_cast<double>(n_pos + n_neg)};
}

inline TpsResult compute_tps(std::span<const Detection> detections, std::string slide_id = {}) {
    std::int64_t pos = 0;
    std::int64_t neg = 0;
    for (const auto& d : detections) {
        (d.cls == CellClass::TcPos ? pos : neg) += 1;
    }
    return tps_from_counts(pos, neg, std::move(slide_id));
}

enum class TpsCategory : int { Lt1 = 0, From1To49 = 1, Ge50 = 2 };

inline constexpr std::size_t kNumCategories = 3;

inline std::string_view to_string(TpsCategory c) {
    switch (c) {
        case TpsCategory::Lt1: return "LT1";
        case TpsCategory::From1To49: return "FROM1TO49";
        case TpsCategory::Ge50: return "GE50";
    }
    return "?";
}

inline TpsCategory parse_category(std::string_view s) {
    if (s == "LT1") return TpsCategory::Lt1;
    if (s == "FROM1TO49") return TpsCategory::From1To49;
    if (s == "GE50") return TpsCategory::Ge50;
    throw Error(ErrorKind::Format, "unknown TPS category '" + std::string(s) + "'");
}

/**
 * TPS cutoffs in percent, 0 <= c1 < c2 <= 100.
 */
struct Cutoffs {
    double c1 = 1.0;
    double c2 = 50.0;

    void validate() const {
        if (!(c1 >= 0.0 && c1 < c2 && c2 <= 100.0)) {
            throw Error(ErrorKind::InvalidArgument,
                        "cutoffs must satisfy 0 <= c1 < c2 <= 100, got (" + std::to_string(c1) + ", " +
                            std::to_string(c2) + ")");
        }
    }
};

/**
 * Half-open binning: [0, c1) -> LT1, [c1, c2) -> FROM1TO49, [c2, 100] -> GE50.
 */
inline TpsCategory bin_tps(double tps, const Cutoffs& cutoffs = {}) {
    cutoffs.validate();
    if (tps < cutoffs.c1) {
        return TpsCategory::Lt1;
    }
    return tps < cutoffs.c2 ? TpsCategory::From1To49 : TpsCategory::Ge50;
}

inline void check_tps_range(double tps, const std::string& what) {
    if (!(tps >= 0.0 && tps <= 100.0)) {
        throw Error(ErrorKind::InvalidArgument, what + ": TPS " + std::to_string(tps) + " outside [0,100]");
    }
}

/**
 * Three pathologists' TPS estimates for one slide.
 */
struct RaterPanel {
    std::string slide_id;
    std::array<double, 3> tps_by_rater{};
};

struct ConsensusResult {
    TpsCategory category = TpsCategory::Lt1;
    /// All three raters disagreed; the middle category was assigned.
    bool no_majority = false;
};

/**
 * Majority category of the three raters' binned scores. When all three differ, the middle
 * category (FROM1TO49) is assigned and flagged.
 */
inline ConsensusResult consensus_category(const RaterPanel& panel, const Cutoffs& cutoffs = {}) {
    std::array<int, kNumCategories> votes{};
    for (const double t : panel.tps_by_rater) {
        check_tps_range(t, "rater panel '" + panel.slide_id + "'");
        ++votes[static_cast<std::size_t>(bin_tps(t, cutoffs))];
    }
    for (std::size_t c = 0; c < kNumCategories; ++c) {
        if (votes[c] >= 2) {
            return ConsensusResult{static_cast<TpsCategory>(c), false};
        }
    }
    return ConsensusResult{TpsCategory::From1To49, true};
}

/**
 * Consensus TPS as the median of the raters. Its bin equals the consensus category for
 * any cutoffs, which makes it usable for threshold sweeps.
 */
inline double consensus_tps(const RaterPanel& panel) {
    auto v = panel.tps_by_rater;
    std::sort(v.begin(), v.end());
    return v[1];
}

using ConfusionMatrix = std::array<std::array<std::int64_t, kNumCategories>, kNumCategories>;

namespace detail {

inline void check_pairs(std::size_t a, std::size_t b) {
    if (a != b) {
        throw Error(ErrorKind::InvalidArgument, "ground truth and prediction lists differ in length (" +
                                                    std::to_string(a) + " vs " + std::to_string(b) + ")");
    }
    if (a == 0) {
        throw Error(ErrorKind::InvalidArgument, "empty category lists");
    }
}

} // namespace detail

/**
 * Counts indexed [ground truth][prediction].
 */
inline ConfusionMatrix confusion(std::span<const TpsCategory> gt, std::span<const TpsCategory> pred) {
    detail::check_pairs(gt.size(), pred.size());
    ConfusionMatrix m{};
    for (std::size_t i = 0; i < gt.size(); ++i) {
        ++m[static_cast<std::size_t>(gt[i])][static_cast<std::size_t>(pred[i])];
    }
    return m;
}

inline double accuracy(std::span<const TpsCategory> gt, std::span<const TpsCategory> pred) {
    detail::check_pairs(gt.size(), pred.size());
    std::size_t hits = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        hits += gt[i] == pred[i] ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(gt.size());
}

struct KappaResult {
    double kappa = 0.0;
    double observed = 0.0;
    double expected = 0.0;
    /// Both raters used one single category; kappa is set to 1.
    bool degenerate = false;
};

/**
 * Unweighted Cohen's kappa (p_o - p_e) / (1 - p_e) with p_e from the marginal products.
 */
inline KappaResult cohens_kappa(std::span<const TpsCategory> gt, std::span<const TpsCategory> pred) {
    const auto m = confusion(gt, pred);
    const auto n = static_cast<double>(gt.size());
    KappaResult r;
    double diag = 0.0;
    for (std::size_t k = 0; k < kNumCategories; ++k) {
        diag += static_cast<double>(m[k][k]);
        double row = 0.0;
        double col = 0.0;
        for (std::size_t j = 0; j < kNumCategories; ++j) {
            row += static_cast<double>(m[k][j]);
            col += static_cast<double>(m[j][k]);
        }
        r.expected += (row / n) * (col / n);
    }
    r.observed = diag / n;
    if (r.expected >= 1.0) {
        r.kappa = 1.0;
        r.degenerate = true;
        return r;
    }
    r.kappa = (r.observed - r.expected) / (1.0 - r.expected);
    return r;
}

/// Unweighted mean of per-dataset kappas.
inline double macro_kappa(std::span<const double> per_dataset) {
    if (per_dataset.empty()) {
        throw Error(ErrorKind::InvalidArgument, "macro kappa over zero datasets");
    }
    return mean(per_dataset);
}

struct RocPoint {
    double threshold = 0.0;
    double fpr = 0.0;
    double tpr = 0.0;
};

struct RocResult {
    std::vector<RocPoint> points;
    double auc = 0.0;
};

/**
 * ROC of `scores` against binary ground truth, a slide counting as predicted positive iff score >= threshold.
 *
 * Thresholds sweep every distinct score; the curve runs from (0,0) to (1,1). AUC is the rank
 * statistic: the fraction of positive/negative pairs ordered correctly, with ties credited 1/2.
 */
inline RocResult auroc(const std::vector<bool>& gt_positive, std::span<const double> scores) {
    if (gt_positive.size() != scores.size()) {
        throw Error(ErrorKind::InvalidArgument, "labels and scores differ in length");
    }
    std::size_t npos = 0;
    for (const bool b : gt_positive) {
        npos += b ? 1 : 0;
    }
    const std::size_t nneg = gt_positive.size() - npos;
    if (npos == 0 || nneg == 0) {
        throw Error(ErrorKind::Degenerate, "ROC needs at least one positive and one negative slide");
    }

    const auto ranks = midranks(scores);
    double pos_rank_sum = 0.0;
    for (std::size_t i = 0; i < ranks.size(); ++i) {
        if (gt_positive[i]) {
            pos_rank_sum += ranks[i];
        }
    }
    const auto p = static_cast<double>(npos);
    const auto q = static_cast<double>(nneg);
    RocResult r;
    r.auc = (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * q);

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    r.points.push_back(RocPoint{std::numeric_limits<double>::infinity(), 0.0, 0.0});
    std::size_t tp = 0;
    std::size_t fp = 0;
    for (std::size_t i = 0; i < order.size();) {
        const double t = scores[order[i]];
        while (i < order.size() && scores[order[i]] == t) {
            (gt_positive[order[i]] ? tp : fp) += 1;
            ++i;
        }
        r.points.push_back(RocPoint{t, static_cast<double>(fp) / q, static_cast<double>(tp) / p});
    }
    return r;
}

struct SweepPoint {
    double c2 = 0.0;
    double accuracy = 0.0;
};

struct SweepRange {
    double c1 = 1.0;
    double c2_min = 2.0;
    double c2_max = 75.0;
    double step = 1.0;
};

/**
 * Three-way accuracy as the upper cutoff c2 sweeps [c2_min, c2_max] with c1 fixed.
 */
inline std::vector<SweepPoint> cutoff_sweep(std::span<const double> gt_tps, std::span<const double> pred_tps,
                                            const SweepRange& range = {}) {
    detail::check_pairs(gt_tps.size(), pred_tps.size());
    if (!(range.step > 0.0) || range.c2_max < range.c2_min) {
        throw Error(ErrorKind::InvalidArgument, "invalid sweep range");
    }
    std::vector<SweepPoint> out;
    std::vector<TpsCategory> g(gt_tps.size());
    std::vector<TpsCategory> p(pred_tps.size());
    for (std::size_t k = 0;; ++k) {
        const double c2 = range.c2_min + static_cast<double>(k) * range.step;
        if (c2 > range.c2_max + 1e-9) {
            break;
        }
        const Cutoffs cut{range.c1, c2};
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] = bin_tps(gt_tps[i], cut);
            p[i] = bin_tps(pred_tps[i], cut);
        }
        out.push_back(SweepPoint{c2, accuracy(g, p)});
    }
    return out;
}

struct GroupStats {
    std::size_t n = 0;
    double mean = 0.0;
    /// Absent for single-value groups.
    std::optional<double> sd;

    /// "mean±sd" with one decimal, or just the mean when sd is undefined.
    std::string format() const {
        char buf[64];
        if (sd) {
            std::snprintf(buf, sizeof(buf), "%.1f±%.1f", mean, *sd);
        } else {
            std::snprintf(buf, sizeof(buf), "%.1f", mean);
        }
        return buf;
    }
};

/**
 * Mean and sample (n - 1) standard deviation of each group's TPS values.
 */
inline std::map<std::string, GroupStats> group_summary(const std::map<std::string, std::vector<double>>& groups) {
    std::map<std::string, GroupStats> out;
    for (const auto& [label, values] : groups) {
        if (values.empty()) {
            throw Error(ErrorKind::InvalidArgument, "group '" + label + "' is empty");
        }
        GroupStats s;
        s.n = values.size();
        s.mean = mean(values);
        if (values.size() >= 2) {
            s.sd = sample_sd(values);
        }
        out.emplace(label, s);
    }
    return out;
}

inline nlohmann::ordered_json to_json(const ConfusionMatrix& m) {
    auto j = nlohmann::ordered_json::array();
    for (const auto& row : m) {
        j.push_back(row);
    }
    return j;
}

} // namespace ihcq

#endif
