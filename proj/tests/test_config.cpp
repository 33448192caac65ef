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

#include "ihcq/config.hpp"

namespace ihcq {
namespace {

TEST(Config, DefaultsMatchReferenceConstants) {
    const RunConfig c = parse_config(nlohmann::json::object());
    EXPECT_EQ(c.reference_mpp, 0.19);
    EXPECT_EQ(c.tile_size, 1024);
    EXPECT_EQ(c.match_max_dist, 25.0);
    EXPECT_EQ(c.cutoffs.c1, 1.0);
    EXPECT_EQ(c.cutoffs.c2, 50.0);
    EXPECT_EQ(c.disk_radius, 7);
}

TEST(Config, OverlaysNestedValues) {
    const auto j = nlohmann::json::parse(R"({"seed": 9, "peak": {"min_distance": 5},
        "backend": {"stain": {"dab_threshold": 0.4}}, "synth": {"grid_w": 3, "pos_color": [1, 2, 3]}})");
    const auto c = parse_config(j);
    EXPECT_EQ(c.seed, 9u);
    EXPECT_EQ(c.peak.min_distance, 5);
    EXPECT_EQ(c.peak.foreground_threshold, 0.5);
    EXPECT_EQ(c.backend.stain.dab_threshold, 0.4);
    EXPECT_EQ(c.synth.grid_w, 3);
    EXPECT_EQ(c.synth.tile.pos_color, (Rgb{1, 2, 3}));
}

TEST(Config, EveryViolationIsListed) {
    const auto j = nlohmann::json::parse(R"({"colour": 1, "peak": {"min_distance": 0, "radius": 3},
        "cutoffs": {"c1": 60}, "match": {"max_dist": "far"}, "backend": {"name": "cnn"}})");
    try {
        parse_config(j);
        FAIL();
    } catch (const Error& e) {
        const auto& d = e.details();
        auto mentions = [&](const std::string& key) {
            return std::any_of(d.begin(), d.end(), [&](const std::string& s) { return s.find(key) != std::string::npos; });
        };
        EXPECT_TRUE(mentions("colour"));
        EXPECT_TRUE(mentions("peak.radius"));
        EXPECT_TRUE(mentions("peak.min_distance"));
        EXPECT_TRUE(mentions("cutoffs"));
        EXPECT_TRUE(mentions("match.max_dist"));
        EXPECT_TRUE(mentions("backend.name"));
        EXPECT_EQ(d.size(), 6u);
    }
}

TEST(Config, SnapshotRoundTrips) {
    RunConfig c;
    c.seed = 123;
    c.min_tissue_fraction = 0.001;
    c.synth.tile.noise_sigma = 8.0;
    c.backend.stain.dab = {0.3, 0.5, 0.8};
    const auto snap = to_json(c);
    EXPECT_FALSE(snap.contains("workers"));
    const auto back = parse_config(nlohmann::json::parse(snap.dump()));
    EXPECT_EQ(to_json(back).dump(), snap.dump());
}

TEST(Config, TileOptionsFollowConfig) {
    const auto c = parse_config(nlohmann::json::parse(R"({"reference_mpp": 0.25, "tissue": {"white_threshold": 200}})"));
    const auto t = c.tile_options();
    EXPECT_EQ(t.target.value(), 0.25);
    EXPECT_EQ(t.white_threshold, 200);
}

} // namespace
} // namespace ihcq
