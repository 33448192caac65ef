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

#ifndef IHCQ_METRICS_HPP
#define IHCQ_METRICS_HPP

/**
 * @file metrics.hpp
 *
 * @brief Detection scoring (greedy confidence-ordered matching, F1, mF1) and replicate statistics.
 */

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"

#include "core.hpp"
#include "stats.hpp"

namespace ihcq {

inline constexpr double kDefaultMatchDistance = 25.0;

struct ClassCounts {
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;

    ClassCounts& operator+=(const ClassCounts& o) {
        tp += o.tp;
        fp += o.fp;
        fn += o.fn;
        return *this;
    }
    friend bool operator==(const ClassCounts&, const ClassCounts&) = default;
};

/**
 * TP/FP/FN tallies per cell class, indexed by `class_index`.
 */
struct MatchCounts {
    std::array<ClassCounts, 2> per_class{};

    ClassCounts& operator[](CellClass c) { return per_class[class_index(c)]; }
    const ClassCounts& operator[](CellClass c) const { return per_class[class_index(c)]; }

    MatchCounts& operator+=(const MatchCounts& o) {
        per_class[0] += o.per_class[0];
        per_class[1] += o.per_class[1];
        return *this;
    }
    friend bool operator==(const MatchCounts&, const MatchCounts&) = default;
};

/**
 * Scores predictions against ground truth, independently for each class.
 *
 * Predictions are visited in decreasing confidence (ties: row-major (y, x), then input index).
 * Each one is a TP matched to the nearest still-unmatched ground-truth cell within `max_dist`
 * (distance ties: lower ground-truth index), or an FP when none is in range.
 * Ground-truth cells left unmatched are FNs.
 */
inline MatchCounts greedy_match(std::span<const Detection> preds, std::span<const CellAnnotation> gts,
                                double max_dist = kDefaultMatchDistance) {
    if (!(max_dist >= 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "max_dist must be non-negative");
    }
    const double max_d2 = max_dist * max_dist;
    MatchCounts counts;
    for (const auto cls : kCellClasses) {
        std::vector<std::size_t> order;
        for (std::size_t i = 0; i < preds.size(); ++i) {
            if (preds[i].cls == cls) {
                order.push_back(i);
            }
        }
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            const auto& pa = preds[a];
            const auto& pb = preds[b];
            return std::make_tuple(-pa.confidence, pa.y, pa.x, a) < std::make_tuple(-pb.confidence, pb.y, pb.x, b);
        });

        std::vector<std::size_t> open;
        for (std::size_t j = 0; j < gts.size(); ++j) {
            if (gts[j].cls == cls) {
                open.push_back(j);
            }
        }

        auto& c = counts[cls];
        for (const auto i : order) {
            const auto& p = preds[i];
            std::size_t best = open.size();
            double best_d2 = 0.0;
            for (std::size_t k = 0; k < open.size(); ++k) {
                const auto& g = gts[open[k]];
                const double dx = static_cast<double>(g.x) - p.x;
                const double dy = static_cast<double>(g.y) - p.y;
                const double d2 = dx * dx + dy * dy;
                // `open` stays sorted by index, so strict < keeps the lowest index on ties.
                if (d2 <= max_d2 && (best == open.size() || d2 < best_d2)) {
                    best = k;
                    best_d2 = d2;
                }
            }
            if (best == open.size()) {
                ++c.fp;
            } else {
                ++c.tp;
                open.erase(open.begin() + static_cast<std::ptrdiff_t>(best));
            }
        }
        c.fn = static_cast<std::int64_t>(open.size());
    }
    return counts;
}

struct ClassScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    /// Set when the class had no predictions and no ground truth; f1 is then 1 by convention.
    bool empty = false;
};

struct F1Report {
    MatchCounts counts;
    std::array<ClassScore, 2> per_class{};
    double mf1 = 0.0;

    const ClassScore& operator[](CellClass c) const { return per_class[class_index(c)]; }
};

/**
 * F1 = TP / (TP + (FP + FN) / 2) per class, and mF1 as the mean over TC_NEG and TC_POS.
 * Precision and recall are 0 when their denominators are 0; an all-zero class scores f1 = 1 and is flagged.
 */
inline F1Report f1_from_counts(const MatchCounts& counts) {
    F1Report r;
    r.counts = counts;
    for (const auto cls : kCellClasses) {
        const auto& c = counts[cls];
        auto& s = r.per_class[class_index(cls)];
        const double tp = static_cast<double>(c.tp);
        s.precision = c.tp + c.fp > 0 ? tp / static_cast<double>(c.tp + c.fp) : 0.0;
        s.recall = c.tp + c.fn > 0 ? tp / static_cast<double>(c.tp + c.fn) : 0.0;
        if (c.tp == 0 && c.fp == 0 && c.fn == 0) {
            s.f1 = 1.0;
            s.empty = true;
        } else {
            s.f1 = tp / (tp + 0.5 * static_cast<double>(c.fp + c.fn));
        }
    }
    r.mf1 = 0.5 * (r.per_class[0].f1 + r.per_class[1].f1);
    return r;
}

inline nlohmann::ordered_json to_json(const F1Report& r) {
    nlohmann::ordered_json j;
    for (const auto cls : kCellClasses) {
        const auto& c = r.counts[cls];
        const auto& s = r[cls];
        nlohmann::ordered_json cj;
        cj["tp"] = c.tp;
        cj["fp"] = c.fp;
        cj["fn"] = c.fn;
        cj["precision"] = s.precision;
        cj["recall"] = s.recall;
        cj["f1"] = s.f1;
        cj["empty"] = s.empty;
        j[std::string(to_string(cls))] = cj;
    }
    j["mf1"] = r.mf1;
    return j;
}

/**
 * mF1 values of one model over R stochastic replicates.
 */
struct ReplicateScores {
    std::string model_id;
    std::vector<double> scores;
};

struct ReplicateSummary {
    double median = 0.0;
    double min = 0.0;
    double max = 0.0;
};

inline ReplicateSummary replicate_summary(std::span<const double> scores) {
    if (scores.empty()) {
        throw Error(ErrorKind::InvalidArgument, "replicate score list is empty");
    }
    std::vector<double> s(scores.begin(), scores.end());
    std::sort(s.begin(), s.end());
    const std::size_t n = s.size();
    const double median = n % 2 == 1 ? s[n / 2] : 0.5 * (s[n / 2 - 1] + s[n / 2]);
    return ReplicateSummary{median, s.front(), s.back()};
}

inline constexpr double kSignificanceLevel = 0.05;

struct ModelComparison {
    std::string model_a;
    std::string model_b;
    ReplicateSummary summary_a;
    ReplicateSummary summary_b;
    WilcoxonResult test;
    bool significant = false;
};

/**
 * Pairs replicate i of `a` with replicate i of `b` and runs the signed-rank test.
 */
inline ModelComparison compare_models(const ReplicateScores& a, const ReplicateScores& b) {
    if (a.scores.size() != b.scores.size()) {
        throw Error(ErrorKind::InvalidArgument, "replicate counts differ: " + std::to_string(a.scores.size()) +
                                                    " vs " + std::to_string(b.scores.size()));
    }
    for (const auto* s : {&a, &b}) {
        for (const double v : s->scores) {
            if (!(v >= 0.0 && v <= 1.0)) {
                throw Error(ErrorKind::InvalidArgument, "score of model '" + s->model_id + "' outside [0,1]");
            }
        }
    }
    ModelComparison c;
    c.model_a = a.model_id;
    c.model_b = b.model_id;
    c.summary_a = replicate_summary(a.scores);
    c.summary_b = replicate_summary(b.scores);
    c.test = wilcoxon_signed_rank(a.scores, b.scores);
    c.significant = !c.test.degenerate && c.test.p_value < kSignificanceLevel;
    return c;
}

inline nlohmann::ordered_json to_json(const ModelComparison& c) {
    auto summary = [](const ReplicateSummary& s) {
        nlohmann::ordered_json j;
        j["median"] = s.median;
        j["min"] = s.min;
        j["max"] = s.max;
        return j;
    };
    nlohmann::ordered_json j;
    j["model_a"] = c.model_a;
    j["model_b"] = c.model_b;
    j["summary_a"] = summary(c.summary_a);
    j["summary_b"] = summary(c.summary_b);
    j["n"] = c.test.n;
    j["W"] = c.test.statistic;
    j["p"] = c.test.p_value;
    j["exact"] = c.test.exact;
    j["degenerate"] = c.test.degenerate;
    j["significant"] = c.significant;
    return j;
}

} // namespace ihcq

#endif
