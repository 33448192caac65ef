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

#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "ihcq/metrics.hpp"
#include "oracles.hpp"

namespace ihcq {
namespace {

constexpr auto kPos = CellClass::TcPos;
constexpr auto kNeg = CellClass::TcNeg;

TEST(GreedyMatch, PairWithinDistanceIsTruePositive) {
    const std::vector<Detection> preds = {{0, 0, kPos, 0.9}};
    const std::vector<CellAnnotation> gts = {{10, 10, kPos}};
    const auto c = greedy_match(preds, gts);
    EXPECT_EQ(c[kPos], (ClassCounts{1, 0, 0}));
    EXPECT_EQ(c[kNeg], (ClassCounts{0, 0, 0}));
}

TEST(GreedyMatch, PairBeyondDistanceIsFalsePositiveAndFalseNegative) {
    const std::vector<Detection> preds = {{0, 0, kPos, 0.9}};
    const std::vector<CellAnnotation> gts = {{20, 20, kPos}};
    EXPECT_EQ(greedy_match(preds, gts)[kPos], (ClassCounts{0, 1, 1}));
}

TEST(GreedyMatch, HigherConfidenceClaimsTheGroundTruthFirst) {
    // Hand trace: (0,0)@0.9 visits first, takes GT (3,0); (5,0)@0.8 finds nothing left.
    const std::vector<Detection> preds = {{5, 0, kPos, 0.8}, {0, 0, kPos, 0.9}};
    const std::vector<CellAnnotation> gts = {{3, 0, kPos}};
    EXPECT_EQ(greedy_match(preds, gts)[kPos], (ClassCounts{1, 1, 0}));
}

TEST(GreedyMatch, MatchesNearestInRangeGroundTruth) {
    // The prediction picks the nearer GT (2 px), leaving the farther one for the second prediction.
    const std::vector<Detection> preds = {{0, 0, kPos, 0.9}, {-20, 0, kPos, 0.5}};
    const std::vector<CellAnnotation> gts = {{-10, 0, kPos}, {2, 0, kPos}};
    EXPECT_EQ(greedy_match(preds, gts)[kPos], (ClassCounts{2, 0, 0}));
}

TEST(GreedyMatch, BoundaryDistanceCountsAsHit) {
    const std::vector<Detection> preds = {{0, 0, kNeg, 0.5}};
    const std::vector<CellAnnotation> gts = {{15, 20, kNeg}};  // exactly 25 px
    EXPECT_EQ(greedy_match(preds, gts)[kNeg].tp, 1);
}

TEST(GreedyMatch, NeverMatchesAcrossClasses) {
    const std::vector<Detection> preds = {{0, 0, kPos, 0.9}};
    const std::vector<CellAnnotation> gts = {{0, 0, kNeg}};
    const auto c = greedy_match(preds, gts);
    EXPECT_EQ(c[kPos], (ClassCounts{0, 1, 0}));
    EXPECT_EQ(c[kNeg], (ClassCounts{0, 0, 1}));
}

TEST(GreedyMatch, RejectsNegativeDistance) {
    EXPECT_THROW(greedy_match({}, {}, -1.0), Error);
}

TEST(GreedyMatch, InjectedOtherClassGroundTruthLeavesCountsUnchanged) {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> coord(0, 100);
    std::uniform_real_distribution<double> conf(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<Detection> preds;
        std::vector<CellAnnotation> gts;
        for (int i = 0; i < 6; ++i) {
            preds.push_back({coord(rng), coord(rng), kPos, conf(rng)});
            gts.push_back({coord(rng), coord(rng), kPos});
        }
        const auto before = greedy_match(preds, gts)[kPos];
        for (int i = 0; i < 5; ++i) {
            gts.push_back({coord(rng), coord(rng), kNeg});
        }
        EXPECT_EQ(greedy_match(preds, gts)[kPos], before);
    }
}

TEST(GreedyMatch, NeverExceedsMaximumMatching) {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> count(0, 8);
    std::uniform_int_distribution<int> coord(0, 100);
    std::uniform_real_distribution<double> conf(0.0, 1.0);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<Detection> preds;
        std::vector<CellAnnotation> gts;
        for (int i = count(rng); i > 0; --i) preds.push_back({coord(rng), coord(rng), kPos, conf(rng)});
        for (int i = count(rng); i > 0; --i) gts.push_back({coord(rng), coord(rng), kPos});
        std::vector<std::vector<bool>> adj(preds.size(), std::vector<bool>(gts.size()));
        for (std::size_t i = 0; i < preds.size(); ++i)
            for (std::size_t j = 0; j < gts.size(); ++j)
                adj[i][j] = std::hypot(preds[i].x - gts[j].x, preds[i].y - gts[j].y) <= 25.0;
        const auto c = greedy_match(preds, gts)[kPos];
        EXPECT_LE(c.tp, oracle::max_bipartite_matching(adj));
        EXPECT_EQ(c.fp, static_cast<std::int64_t>(preds.size()) - c.tp);
        EXPECT_EQ(c.fn, static_cast<std::int64_t>(gts.size()) - c.tp);
    }
}

TEST(F1, DirectSubstitution) {
    MatchCounts c;
    c[kPos] = {3, 1, 2};
    c[kNeg] = {10, 0, 0};
    const auto r = f1_from_counts(c);
    EXPECT_NEAR(r[kPos].f1, 3.0 / 4.5, 1e-15);
    EXPECT_DOUBLE_EQ(r[kNeg].f1, 1.0);
    EXPECT_NEAR(r.mf1, 0.5 * (3.0 / 4.5 + 1.0), 1e-15);
    EXPECT_DOUBLE_EQ(r[kPos].precision, 0.75);
    EXPECT_DOUBLE_EQ(r[kPos].recall, 0.6);
}

TEST(F1, AllMissedIsZero) {
    MatchCounts c;
    c[kPos] = {0, 0, 5};
    EXPECT_DOUBLE_EQ(f1_from_counts(c)[kPos].f1, 0.0);
}

TEST(F1, EmptyClassScoresOneAndIsFlagged) {
    MatchCounts c;
    c[kPos] = {4, 0, 0};
    const auto r = f1_from_counts(c);
    EXPECT_TRUE(r[kNeg].empty);
    EXPECT_FALSE(r[kPos].empty);
    EXPECT_DOUBLE_EQ(r[kNeg].f1, 1.0);
    EXPECT_DOUBLE_EQ(r.mf1, 1.0);
}

TEST(F1, AgreesWithPrecisionRecallForm) {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> v(0, 50);
    for (int i = 0; i < 2000; ++i) {
        MatchCounts c;
        c[kPos] = {v(rng), v(rng), v(rng)};
        const auto s = f1_from_counts(c)[kPos];
        if (s.precision + s.recall > 0) {
            EXPECT_NEAR(s.f1, 2 * s.precision * s.recall / (s.precision + s.recall), 1e-12);
        }
    }
}

TEST(ReplicateSummary, SingleValue) {
    const std::vector<double> s = {0.5};
    const auto r = replicate_summary(s);
    EXPECT_EQ(r.median, 0.5);
    EXPECT_EQ(r.min, 0.5);
    EXPECT_EQ(r.max, 0.5);
}

TEST(ReplicateSummary, OddLengthReportedFormat) {
    const std::vector<double> s = {0.705, 0.686, 0.693};
    const auto r = replicate_summary(s);
    EXPECT_EQ(r.median, 0.693);
    EXPECT_EQ(r.min, 0.686);
    EXPECT_EQ(r.max, 0.705);
}

TEST(ReplicateSummary, EvenLengthAveragesMiddlePair) {
    const std::vector<double> s = {0.4, 0.1, 0.3, 0.2};
    const auto r = replicate_summary(s);
    EXPECT_DOUBLE_EQ(r.median, 0.25);
    EXPECT_EQ(r.min, 0.1);
    EXPECT_EQ(r.max, 0.4);
}

TEST(ReplicateSummary, EmptyIsAnError) {
    EXPECT_THROW(replicate_summary(std::vector<double>{}), Error);
}

TEST(CompareModels, IdenticalScoresAreNotSignificant) {
    ReplicateScores a{"a", std::vector<double>(30, 0.6)};
    const auto c = compare_models(a, a);
    EXPECT_DOUBLE_EQ(c.test.p_value, 1.0);
    EXPECT_TRUE(c.test.degenerate);
    EXPECT_FALSE(c.significant);
}

TEST(CompareModels, UniformShiftIsSignificant) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.5, 0.7);
    ReplicateScores a{"a", {}}, b{"b", {}};
    for (int i = 0; i < 30; ++i) {
        a.scores.push_back(u(rng));
        b.scores.push_back(a.scores.back() + 0.01);
    }
    const auto c = compare_models(a, b);
    EXPECT_TRUE(c.significant);
    EXPECT_LT(c.test.p_value, 0.001);
    EXPECT_LT(c.summary_a.median, c.summary_b.median);
}

TEST(CompareModels, FalsePositiveRateUnderNullIsCalibrated) {
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> noise(0.0, 0.01);
    int significant = 0;
    constexpr int kTrials = 1000;
    for (int t = 0; t < kTrials; ++t) {
        ReplicateScores a{"a", {}}, b{"b", {}};
        for (int i = 0; i < 30; ++i) {
            a.scores.push_back(0.6 + noise(rng));
            b.scores.push_back(0.6 + noise(rng));
        }
        significant += compare_models(a, b).significant ? 1 : 0;
    }
    EXPECT_LE(significant, kTrials * 5 / 100);
}

TEST(CompareModels, LengthMismatchIsAnError) {
    ReplicateScores a{"a", {0.1, 0.2}}, b{"b", {0.1}};
    EXPECT_THROW(compare_models(a, b), Error);
}

} // namespace
} // namespace ihcq
