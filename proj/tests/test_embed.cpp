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

#include <fstream>
#include <random>

#include "ihcq/embed.hpp"
#include "temp_dir.hpp"

namespace ihcq {
namespace {

using testing::TempDir;

TEST(PixelFeatures, UniformGrayIsConstant) {
    PatchImage img(100, 100, reference_mpp());
    img.fill(128, 128, 128);
    const auto f = pixel_features(img);
    ASSERT_EQ(f.values.size(), 3072u);
    for (const double v : f.values) EXPECT_NEAR(v, 128.0 / 255.0, 1e-12);
}

TEST(PixelFeatures, ReferencePatchLength) {
    EXPECT_EQ(pixel_features(PatchImage(1024, 1024, reference_mpp())).values.size(), 3072u);
}

TEST(PixelFeatures, CheckerboardMatchesBlockMeans) {
    PatchImage img(1024, 1024, reference_mpp());
    for (int y = 0; y < 1024; ++y)
        for (int x = 0; x < 1024; ++x) {
            const std::uint8_t v = ((x / 32) + (y / 32)) % 2 ? 200 : 40;
            auto* p = img.at(x, y);
            p[0] = v;
            p[1] = static_cast<std::uint8_t>(255 - v);
            p[2] = static_cast<std::uint8_t>(v / 2);
        }
    const auto f = pixel_features(img);
    for (int by = 0; by < 32; ++by)
        for (int bx = 0; bx < 32; ++bx) {
            double sum[3] = {0, 0, 0};
            for (int y = by * 32; y < by * 32 + 32; ++y)
                for (int x = bx * 32; x < bx * 32 + 32; ++x)
                    for (int c = 0; c < 3; ++c) sum[c] += img.at(x, y)[c];
            for (int c = 0; c < 3; ++c) {
                EXPECT_NEAR(f.values[(by * 32 + bx) * 3 + c], sum[c] / 1024.0 / 255.0, 1e-12);
            }
        }
    EXPECT_NE(f.values[0], f.values[3]);
}

TEST(PixelFeatures, InvariantToPermutationWithinBlocks) {
    std::mt19937 rng(5);
    PatchImage img(256, 256, reference_mpp());
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng());
    PatchImage shuffled = img;
    // Swap random pixel pairs that share an 8x8 block.
    for (int k = 0; k < 20000; ++k) {
        const int bx = rng() % 32, by = rng() % 32;
        const int x1 = bx * 8 + rng() % 8, y1 = by * 8 + rng() % 8;
        const int x2 = bx * 8 + rng() % 8, y2 = by * 8 + rng() % 8;
        std::swap_ranges(shuffled.at(x1, y1), shuffled.at(x1, y1) + 3, shuffled.at(x2, y2));
    }
    const auto a = pixel_features(img).values;
    const auto b = pixel_features(shuffled).values;
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

std::vector<double> pairwise(const std::vector<double>& u, const std::vector<double>& v) {
    std::vector<double> d;
    for (std::size_t i = 0; i < u.size(); ++i)
        for (std::size_t j = i + 1; j < u.size(); ++j) d.push_back(std::hypot(u[i] - u[j], v[i] - v[j]));
    return d;
}

TEST(Pca, RecoversEmbeddedPlane) {
    std::mt19937 rng(3);
    std::normal_distribution<double> n01(0.0, 1.0);
    constexpr int kDim = 40, kN = 25;
    // Orthonormal pair via Gram-Schmidt.
    std::vector<double> e1(kDim), e2(kDim);
    for (auto& v : e1) v = n01(rng);
    for (auto& v : e2) v = n01(rng);
    auto dot = [](auto& a, auto& b) {
        double s = 0;
        for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
        return s;
    };
    double n1 = std::sqrt(dot(e1, e1));
    for (auto& v : e1) v /= n1;
    const double p = dot(e1, e2);
    for (int i = 0; i < kDim; ++i) e2[i] -= p * e1[i];
    double n2 = std::sqrt(dot(e2, e2));
    for (auto& v : e2) v /= n2;

    std::vector<double> a(kN), b(kN);
    std::vector<FeatureVector> features;
    for (int i = 0; i < kN; ++i) {
        a[i] = 3.0 * n01(rng);
        b[i] = n01(rng);
        FeatureVector f{"p" + std::to_string(i), "c", std::vector<double>(kDim)};
        for (int k = 0; k < kDim; ++k) f.values[k] = 7.0 + a[i] * e1[k] + b[i] * e2[k];
        features.push_back(f);
    }
    const auto proj = project_pca(features);
    const auto want = pairwise(a, b);
    const auto got = pairwise(proj.u, proj.v);
    for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-9);

    double vu = 0, vv = 0;
    for (int i = 0; i < kN; ++i) {
        vu += proj.u[i] * proj.u[i];
        vv += proj.v[i] * proj.v[i];
    }
    EXPECT_GE(vu, vv);
}

TEST(Pca, WideDataUsesSameGeometry) {
    // More dimensions than samples exercises the Gram-matrix path.
    std::mt19937 rng(8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<FeatureVector> f;
    for (int i = 0; i < 6; ++i) {
        FeatureVector v{"p" + std::to_string(i), "c", std::vector<double>(500)};
        for (auto& x : v.values) x = u(rng);
        f.push_back(v);
    }
    const auto p = project_pca(f);
    double su = 0, sv = 0;
    for (int i = 0; i < 6; ++i) {
        su += p.u[i];
        sv += p.v[i];
    }
    EXPECT_NEAR(su, 0.0, 1e-9);
    EXPECT_NEAR(sv, 0.0, 1e-9);
    double vu = 0, vv = 0;
    for (int i = 0; i < 6; ++i) {
        vu += p.u[i] * p.u[i];
        vv += p.v[i] * p.v[i];
    }
    EXPECT_GE(vu, vv);
}

TEST(Pca, TwoDistinctVectors) {
    const std::vector<FeatureVector> f = {{"a", "c", {0, 0, 1}}, {"b", "c", {1, 0, 1}}};
    const auto p = project_pca(f);
    ASSERT_EQ(p.size(), 2u);
    EXPECT_NEAR(std::hypot(p.u[0] - p.u[1], p.v[0] - p.v[1]), 1.0, 1e-12);
}

TEST(Pca, IdenticalVectorsAreDegenerate) {
    const std::vector<FeatureVector> f(4, FeatureVector{"a", "c", {1, 2, 3}});
    try {
        project_pca(f);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Degenerate);
    }
}

TEST(Pca, RaggedFeaturesAreRejected) {
    const std::vector<FeatureVector> f = {{"a", "c", {1, 2}}, {"b", "c", {1, 2, 3}}};
    EXPECT_THROW(project_pca(f), Error);
}

Projection2D make_proj(std::vector<double> u, std::vector<double> v) {
    Projection2D p;
    for (std::size_t i = 0; i < u.size(); ++i) p.patch_ids.push_back("p" + std::to_string(i));
    p.u = std::move(u);
    p.v = std::move(v);
    return p;
}

TEST(Mosaic, SinglePatch) {
    const auto layout = mosaic(make_proj({0.3}, {0.7}), 4);
    ASSERT_EQ(layout.cells.size(), 1u);
    EXPECT_EQ(layout.cells[0].representative, 0u);
}

TEST(Mosaic, CollinearMiddlePointChosen) {
    // All three share a cell at grid 2 once the far point stretches the extent.
    const auto layout = mosaic(make_proj({0.0, 0.2, 0.1, 10.0}, {0.0, 0.0, 0.0, 10.0}), 2);
    const auto it = std::find_if(layout.cells.begin(), layout.cells.end(),
                                 [](const MosaicCell& c) { return c.members.size() == 3; });
    ASSERT_NE(it, layout.cells.end());
    EXPECT_EQ(it->representative, 2u);
}

TEST(Mosaic, RepresentativeIsMemberAndMinimizesDistance) {
    std::mt19937 rng(2);
    std::normal_distribution<double> n01(0.0, 1.0);
    std::vector<double> u(200), v(200);
    for (int i = 0; i < 200; ++i) {
        u[i] = n01(rng);
        v[i] = n01(rng);
    }
    const auto proj = make_proj(u, v);
    const auto layout = mosaic(proj, 8);
    std::size_t total = 0;
    for (const auto& c : layout.cells) {
        total += c.members.size();
        EXPECT_NE(std::find(c.members.begin(), c.members.end(), c.representative), c.members.end());
        auto cost = [&](std::size_t a) {
            double s = 0;
            for (auto b : c.members) s += std::hypot(u[a] - u[b], v[a] - v[b]);
            return s;
        };
        for (auto m : c.members) EXPECT_LE(cost(c.representative), cost(m) + 1e-12);
    }
    EXPECT_EQ(total, 200u);
}

TEST(Mosaic, Errors) {
    EXPECT_THROW(mosaic(make_proj({}, {}), 4), Error);
    EXPECT_THROW(mosaic(make_proj({1}, {1}), 1), Error);
}

TEST(Mosaic, RenderPlacesThumbnails) {
    const auto proj = make_proj({0.0, 1.0}, {0.0, 1.0});
    const auto layout = mosaic(proj, 2);
    std::vector<PatchImage> patches(2, PatchImage(16, 16, reference_mpp()));
    patches[0].fill(255, 0, 0);
    patches[1].fill(0, 0, 255);
    const auto img = render_mosaic(layout, patches, 8);
    EXPECT_EQ(img.width, 16);
    // Low (u, v) sits bottom-left, high sits top-right.
    EXPECT_EQ(img.at(1, 14)[0], 255);
    EXPECT_EQ(img.at(14, 1)[2], 255);
    EXPECT_EQ(img.at(14, 14)[1], 255);
}

std::vector<FeatureVector> cohort(const std::string& id, int n, double lo, double hi, std::mt19937& rng) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<FeatureVector> out;
    for (int i = 0; i < n; ++i) out.push_back({id + std::to_string(i), id, {u(rng), u(rng)}});
    return out;
}

TEST(CohortSimilarity, IdenticalDistributionsAreIndistinguishable) {
    std::mt19937 rng(1);
    double mean_p = 0.0;
    constexpr int kTrials = 50;
    for (int t = 0; t < kTrials; ++t) {
        auto f = cohort("a", 100, 0, 1, rng);
        auto g = cohort("b", 100, 0, 1, rng);
        f.insert(f.end(), g.begin(), g.end());
        mean_p += cohort_similarity(f).summary;
    }
    EXPECT_GT(mean_p / kTrials, 0.3);
}

TEST(CohortSimilarity, DisjointRangesAreDistinguishable) {
    // Cohort a sits at the centroid, cohort b far from it: distances never overlap.
    std::mt19937 rng(2);
    auto f = cohort("a", 10, -0.1, 0.1, rng);
    std::vector<FeatureVector> far;
    for (int i = 0; i < 5; ++i) {
        far.push_back({"bp" + std::to_string(i), "b", {50.0 + i, 0.0}});
        far.push_back({"bn" + std::to_string(i), "b", {-50.0 - i, 0.0}});
    }
    f.insert(f.end(), far.begin(), far.end());
    EXPECT_LT(cohort_similarity(f).p_values[0][1], 0.001);
}

TEST(CohortSimilarity, ThreeCohortsSymmetricSummary) {
    std::mt19937 rng(3);
    std::vector<FeatureVector> f;
    for (const char* id : {"x", "y", "z"}) {
        auto c = cohort(id, 20, 0, 1, rng);
        f.insert(f.end(), c.begin(), c.end());
    }
    const auto s = cohort_similarity(f);
    ASSERT_EQ(s.cohorts, (std::vector<std::string>{"x", "y", "z"}));
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) EXPECT_EQ(s.p_values[i][j], s.p_values[j][i]);
    EXPECT_DOUBLE_EQ(s.summary, (s.p_values[0][1] + s.p_values[0][2] + s.p_values[1][2]) / 3.0);
}

TEST(CohortSimilarity, Errors) {
    std::mt19937 rng(4);
    auto f = cohort("a", 5, 0, 1, rng);
    EXPECT_THROW(cohort_similarity(f), Error);
    f.push_back({"b0", "b", {0.5, 0.5}});
    EXPECT_THROW(cohort_similarity(f), Error);
}

TEST(FeaturesCsv, RoundTripAndExternalProjection) {
    TempDir dir("embed");
    std::mt19937 rng(6);
    auto f = cohort("a", 4, 0, 1, rng);
    write_file_atomic(dir / "f.csv", format_features(f));
    const auto back = read_features(dir / "f.csv");
    ASSERT_EQ(back.size(), f.size());
    for (std::size_t i = 0; i < f.size(); ++i) {
        EXPECT_EQ(back[i].patch_id, f[i].patch_id);
        EXPECT_EQ(back[i].values, f[i].values);
    }
    std::ofstream(dir / "p.csv") << "patch_id,u,v\na3,1,2\na0,3,4\na1,5,6\na2,7,8\n";
    const auto p = read_projection(dir / "p.csv", f);
    EXPECT_EQ(p.method, ProjectionMethod::External);
    EXPECT_EQ(p.u[0], 3.0);
    EXPECT_EQ(p.v[3], 2.0);
    std::ofstream(dir / "q.csv") << "patch_id,u,v\na3,1,2\n";
    EXPECT_THROW(read_projection(dir / "q.csv", f), Error);
}

} // namespace
} // namespace ihcq
