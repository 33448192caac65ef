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

#ifndef IHCQ_STATS_HPP
#define IHCQ_STATS_HPP

/**
 * @file stats.hpp
 *
 * @brief Rank statistics: midranks, the Wilcoxon signed-rank test and the Mann-Whitney rank-sum test.
 */

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "core.hpp"

namespace ihcq {

/// Largest number of non-zero differences for which the signed-rank p-value is computed exactly.
inline constexpr std::size_t kWilcoxonExactMaxN = 25;

/**
 * 1-based ranks of `values`, tied values sharing the mean of their positions.
 * `tie_sizes` receives the size of every tie group (including singletons).
 */
inline std::vector<double> midranks(std::span<const double> values, std::vector<std::size_t>* tie_sizes = nullptr) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i + 1;
        while (j < n && values[order[j]] == values[order[i]]) {
            ++j;
        }
        const double rank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) {
            ranks[order[k]] = rank;
        }
        if (tie_sizes) {
            tie_sizes->push_back(j - i);
        }
        i = j;
    }
    return ranks;
}

/// Standard normal CDF.
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

struct WilcoxonResult {
    /// Number of non-zero differences.
    std::size_t n = 0;
    /// min(sum of positive ranks, sum of negative ranks).
    double statistic = 0.0;
    double p_value = 1.0;
    bool exact = false;
    /// All differences were zero; p is reported as 1.
    bool degenerate = false;
};

/**
 * Paired two-sided Wilcoxon signed-rank test on d = a - b.
 *
 * Zero differences are dropped and |d| is ranked with midranks. For n <= 25 the p-value is
 * exact: the null distribution of the positive rank sum over all 2^n sign assignments is
 * counted (in half-rank units, so midranks stay integral) and p = min(1, 2 P(T <= W)).
 * Larger n uses the tie-corrected normal approximation with a continuity correction of 1/2.
 */
inline WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw Error(ErrorKind::InvalidArgument, "signed-rank test needs paired samples of equal length");
    }
    std::vector<double> diffs;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        if (!std::isfinite(d)) {
            throw Error(ErrorKind::InvalidArgument, "non-finite paired difference at index " + std::to_string(i));
        }
        if (d != 0.0) {
            diffs.push_back(d);
        }
    }
    WilcoxonResult res;
    res.n = diffs.size();
    if (diffs.empty()) {
        res.degenerate = true;
        return res;
    }

    std::vector<double> mags(diffs.size());
    std::transform(diffs.begin(), diffs.end(), mags.begin(), [](double d) { return std::abs(d); });
    std::vector<std::size_t> ties;
    const auto ranks = midranks(mags, &ties);

    double t_plus = 0.0;
    double t_minus = 0.0;
    for (std::size_t i = 0; i < diffs.size(); ++i) {
        (diffs[i] > 0 ? t_plus : t_minus) += ranks[i];
    }
    res.statistic = std::min(t_plus, t_minus);
    const auto n = static_cast<double>(res.n);

    if (res.n <= kWilcoxonExactMaxN) {
        res.exact = true;
        std::vector<std::int64_t> doubled(ranks.size());
        std::int64_t total = 0;
        for (std::size_t i = 0; i < ranks.size(); ++i) {
            doubled[i] = std::llround(2.0 * ranks[i]);
            total += doubled[i];
        }
        // ways[s] = number of sign assignments whose doubled positive rank sum is s.
        std::vector<std::uint64_t> ways(static_cast<std::size_t>(total) + 1, 0);
        ways[0] = 1;
        std::int64_t reach = 0;
        for (const auto r : doubled) {
            for (std::int64_t s = reach; s >= 0; --s) {
                ways[static_cast<std::size_t>(s + r)] += ways[static_cast<std::size_t>(s)];
            }
            reach += r;
        }
        const auto w2 = std::llround(2.0 * res.statistic);
        std::uint64_t tail = 0;
        for (std::int64_t s = 0; s <= w2; ++s) {
            tail += ways[static_cast<std::size_t>(s)];
        }
        // 2 * tail / 2^n
        res.p_value = std::min(1.0, std::ldexp(static_cast<double>(tail), 1 - static_cast<int>(res.n)));
        return res;
    }

    const double mean = n * (n + 1.0) / 4.0;
    double tie_term = 0.0;
    for (const auto t : ties) {
        const auto tt = static_cast<double>(t);
        tie_term += tt * tt * tt - tt;
    }
    const double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    // Continuity-corrected: the statistic moves in steps of 1/2 or more.
    const double z = std::min(0.0, res.statistic - mean + 0.5) / std::sqrt(var);
    res.p_value = std::min(1.0, 2.0 * normal_cdf(z));
    return res;
}

struct RankSumResult {
    /// Mann-Whitney U of the first sample.
    double u = 0.0;
    double z = 0.0;
    double p_value = 1.0;
};

/**
 * Two-sided Mann-Whitney rank-sum test, normal approximation with tie correction.
 */
inline RankSumResult mann_whitney(std::span<const double> x, std::span<const double> y) {
    if (x.empty() || y.empty()) {
        throw Error(ErrorKind::InvalidArgument, "rank-sum test needs two non-empty samples");
    }
    std::vector<double> pooled(x.begin(), x.end());
    pooled.insert(pooled.end(), y.begin(), y.end());
    std::vector<std::size_t> ties;
    const auto ranks = midranks(pooled, &ties);
    const auto n1 = static_cast<double>(x.size());
    const auto n2 = static_cast<double>(y.size());
    const double big_n = n1 + n2;
    double r1 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        r1 += ranks[i];
    }
    RankSumResult res;
    res.u = r1 - n1 * (n1 + 1.0) / 2.0;
    double tie_term = 0.0;
    for (const auto t : ties) {
        const auto tt = static_cast<double>(t);
        tie_term += tt * tt * tt - tt;
    }
    const double var = n1 * n2 / 12.0 * ((big_n + 1.0) - tie_term / (big_n * (big_n - 1.0)));
    if (!(var > 0.0)) {
        return res;
    }
    res.z = (res.u - n1 * n2 / 2.0) / std::sqrt(var);
    res.p_value = std::min(1.0, 2.0 * normal_cdf(-std::abs(res.z)));
    return res;
}

inline double mean(std::span<const double> v) {
    if (v.empty()) {
        throw Error(ErrorKind::InvalidArgument, "mean of an empty sample");
    }
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Sample standard deviation (n - 1 denominator); needs at least two values.
inline double sample_sd(std::span<const double> v) {
    if (v.size() < 2) {
        throw Error(ErrorKind::InvalidArgument, "sample standard deviation needs at least two values");
    }
    const double m = mean(v);
    double ss = 0.0;
    for (const double x : v) {
        ss += (x - m) * (x - m);
    }
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

} // namespace ihcq

#endif
