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

#include "ihcq/detect.hpp"
#include "ihcq/metrics.hpp"
#include "ihcq/synth.hpp"
#include "temp_dir.hpp"

namespace ihcq {
namespace {

using testing::TempDir;

SynthSpec small_spec(int n_cells, std::uint64_t seed = 1) {
    SynthSpec s;
    s.width = s.height = 256;
    s.n_cells = n_cells;
    s.seed = seed;
    return s;
}

TEST(GeneratePatch, NoCellsIsUniformBackground) {
    const auto p = generate_patch(small_spec(0));
    EXPECT_TRUE(p.truth.annotations.empty());
    EXPECT_FALSE(p.truth.true_tps().has_value());
    for (int y = 0; y < p.image.height; ++y)
        for (int x = 0; x < p.image.width; ++x) {
            EXPECT_EQ(p.image.at(x, y)[0], 245);
            EXPECT_EQ(p.image.at(x, y)[1], 242);
            EXPECT_EQ(p.image.at(x, y)[2], 240);
        }
}

TEST(GeneratePatch, TruthTpsIsExact) {
    SynthSpec s;
    s.n_cells = 100;
    s.pos_fraction = 0.25;
    const auto p = generate_patch(s);
    ASSERT_EQ(p.truth.annotations.size(), 100u);
    EXPECT_EQ(*p.truth.true_tps(), 25.0);
}

TEST(GeneratePatch, SameSeedIsBitIdentical) {
    auto s = small_spec(30, 99);
    s.noise_sigma = 8.0;
    const auto a = generate_patch(s);
    const auto b = generate_patch(s);
    EXPECT_EQ(a.image.pixels, b.image.pixels);
    EXPECT_EQ(a.truth.annotations, b.truth.annotations);
    s.seed = 100;
    EXPECT_NE(generate_patch(s).image.pixels, a.image.pixels);
}

TEST(GeneratePatch, CellsRespectSpacingAndBounds) {
    const auto p = generate_patch(small_spec(80, 5));
    const auto& a = p.truth.annotations;
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_GE(a[i].x, 0);
        EXPECT_LT(a[i].x, 256);
        for (std::size_t j = i + 1; j < a.size(); ++j) {
            EXPECT_GE(std::hypot(a[i].x - a[j].x, a[i].y - a[j].y), 18.0);
        }
    }
}

TEST(GeneratePatch, CellCentresCarryTheirColour) {
    const auto p = generate_patch(small_spec(20, 6));
    for (const auto& c : p.truth.annotations) {
        const auto* px = p.image.at(c.x, c.y);
        if (c.cls == CellClass::TcPos) {
            EXPECT_EQ(px[0], 120);
            EXPECT_EQ(px[2], 35);
        } else {
            EXPECT_EQ(px[0], 70);
            EXPECT_EQ(px[2], 140);
        }
    }
}

TEST(GeneratePatch, OvercrowdingIsInfeasible) {
    auto s = small_spec(1000);
    try {
        generate_patch(s);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Infeasible);
    }
}

TEST(GeneratePatch, InvalidSpecListsEveryProblem) {
    SynthSpec s;
    s.n_cells = -1;
    s.pos_fraction = 2.0;
    s.min_spacing = 1.0;
    try {
        s.validate();
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.details().size(), 3u);
    }
}

TEST(GenerateSlide, SingleTileWrapsPatch) {
    TempDir dir("synth");
    SlideSynthSpec s;
    s.tile = small_spec(10, 3);
    const auto slide = generate_slide(s, dir.path());
    const auto patch = generate_patch(small_spec(10, 3));
    EXPECT_EQ(slide.truth.annotations, patch.truth.annotations);
    ASSERT_EQ(slide.manifest.tiles.size(), 1u);
    EXPECT_EQ(read_rgb_png(dir / slide.manifest.tiles[0].path, reference_mpp()).pixels, patch.image.pixels);
    const auto m = load_manifest(dir / "manifest.json");
    EXPECT_EQ(m.tile_size, 256);
}

TEST(GenerateSlide, GridTruthInGlobalCoordinates) {
    TempDir dir("synth");
    SlideSynthSpec s;
    s.tile = small_spec(50, 4);
    s.grid_w = s.grid_h = 4;
    const auto slide = generate_slide(s, dir.path(), 3);
    EXPECT_EQ(slide.truth.annotations.size(), 800u);
    std::array<int, 16> per_tile{};
    for (const auto& a : slide.truth.annotations) {
        ASSERT_GE(a.x, 0);
        ASSERT_LT(a.x, 1024);
        ASSERT_LT(a.y, 1024);
        ++per_tile[(a.y / 256) * 4 + a.x / 256];
    }
    for (const int n : per_tile) EXPECT_EQ(n, 50);
}

TEST(GenerateSlide, WorkerCountDoesNotChangeOutput) {
    TempDir d1("synth"), d2("synth");
    SlideSynthSpec s;
    s.tile = small_spec(20, 8);
    s.tile.noise_sigma = 4.0;
    s.grid_w = 3;
    s.grid_h = 2;
    s.blank_fraction = 0.3;
    const auto a = generate_slide(s, d1.path(), 1);
    const auto b = generate_slide(s, d2.path(), 4);
    EXPECT_EQ(a.truth.annotations, b.truth.annotations);
    for (const auto& t : a.manifest.tiles) {
        EXPECT_EQ(read_file(d1 / t.path), read_file(d2 / t.path));
    }
}

TEST(SynthesizePmap, SinglePositiveCellRecovered) {
    const std::vector<CellAnnotation> c = {{40, 30, CellClass::TcPos}};
    const auto d = extract_detections(synthesize_pmap(c, 100, 80));
    ASSERT_EQ(d.size(), 1u);
    EXPECT_EQ(d[0].x, 40);
    EXPECT_EQ(d[0].y, 30);
    EXPECT_EQ(d[0].cls, CellClass::TcPos);
}

TEST(SynthesizePmap, NoCellsIsBackground) {
    const auto m = synthesize_pmap({}, 10, 10);
    for (const float v : m.plane(PmapChannel::Background)) EXPECT_EQ(v, 1.0f);
}

TEST(SynthesizePmap, NoisyReplicatesFeedTheMetricsPipeline) {
    const auto patch = generate_patch(small_spec(30, 11));
    std::vector<double> scores;
    for (int r = 0; r < 30; ++r) {
        PmapSynthOptions o;
        o.noise = 0.3;
        o.seed = static_cast<std::uint64_t>(r);
        const auto map = synthesize_pmap(patch.truth.annotations, 256, 256, o);
        EXPECT_NO_THROW(validate_normalization(map));
        const auto dets = extract_detections(map);
        scores.push_back(f1_from_counts(greedy_match(dets, patch.truth.annotations)).mf1);
    }
    const auto summary = replicate_summary(scores);
    EXPECT_GT(summary.min, 0.5);
    EXPECT_LE(summary.max, 1.0);
    const auto cmp = compare_models(ReplicateScores{"a", scores}, ReplicateScores{"b", scores});
    EXPECT_FALSE(cmp.significant);
}

} // namespace
} // namespace ihcq
