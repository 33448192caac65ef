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

#include <cmath>
#include <fstream>
#include <random>

#include "ihcq/inference.hpp"
#include "ihcq/synth.hpp"
#include "temp_dir.hpp"

namespace ihcq {
namespace {

using testing::TempDir;

// Beer-Lambert forward model written out independently of the unmixer.
std::array<std::uint8_t, 3> render_stains(double h, double d) {
    const StainParams p;
    auto unit = [](std::array<double, 3> v) {
        const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
        return std::array<double, 3>{v[0] / n, v[1] / n, v[2] / n};
    };
    const auto hv = unit(p.hematoxylin);
    const auto dv = unit(p.dab);
    std::array<std::uint8_t, 3> rgb{};
    for (int k = 0; k < 3; ++k) {
        const double od = h * hv[k] + d * dv[k];
        rgb[k] = static_cast<std::uint8_t>(std::lround(std::clamp(256.0 * std::pow(10.0, -od) - 1.0, 0.0, 255.0)));
    }
    return rgb;
}

TEST(Unmix, WhiteHasNoStain) {
    const StainUnmixer u{StainParams{}};
    const std::uint8_t white[3] = {255, 255, 255};
    const auto [h, d] = u.unmix(white);
    EXPECT_LE(h, 0.002);
    EXPECT_LE(d, 0.002);
}

TEST(Unmix, PureDabRecovered) {
    const StainUnmixer u{StainParams{}};
    const auto rgb = render_stains(0.0, 1.0);
    const auto [h, d] = u.unmix(rgb.data());
    EXPECT_NEAR(d, 1.0, 0.02);
    EXPECT_NEAR(h, 0.0, 0.02);
}

TEST(Unmix, EqualMixRecovered) {
    const StainUnmixer u{StainParams{}};
    const auto rgb = render_stains(0.5, 0.5);
    const auto [h, d] = u.unmix(rgb.data());
    EXPECT_NEAR(h, 0.5, 0.02);
    EXPECT_NEAR(d, 0.5, 0.02);
}

TEST(Unmix, CollinearBasisIsDegenerate) {
    StainParams p;
    p.dab = {1.3, 1.408, 0.572};
    EXPECT_THROW(StainUnmixer{p}, Error);
    p.dab = {0, 0, 0};
    EXPECT_THROW(StainUnmixer{p}, Error);
}

TEST(Unmix, OpticalDensityInverse) {
    for (int v = 0; v < 256; ++v) {
        EXPECT_EQ(intensity_from_od(optical_density(v)), v);
    }
}

TEST(BaselineInfer, WhitePatchIsBackground) {
    PatchImage img(32, 32, reference_mpp());
    img.fill(255, 255, 255);
    const auto map = baseline_infer(img);
    for (const float v : map.plane(PmapChannel::Background)) {
        EXPECT_GE(v, 0.95f);
    }
    EXPECT_NO_THROW(validate_normalization(map));
}

TEST(BaselineInfer, BrownNucleusIsPositiveAtCentre) {
    SynthSpec spec;
    spec.width = spec.height = 64;
    spec.n_cells = 1;
    spec.pos_fraction = 1.0;
    spec.seed = 3;
    const auto patch = generate_patch(spec);
    const auto& c = patch.truth.annotations.at(0);
    const auto map = baseline_infer(patch.image);
    EXPECT_GT(map.at(PmapChannel::TcPos, c.x, c.y), map.at(PmapChannel::TcNeg, c.x, c.y));
    EXPECT_GT(map.at(PmapChannel::TcPos, c.x, c.y), map.at(PmapChannel::Background, c.x, c.y));
}

TEST(BaselineInfer, BlueNucleusIsNegativeAtCentre) {
    SynthSpec spec;
    spec.width = spec.height = 64;
    spec.n_cells = 1;
    spec.pos_fraction = 0.0;
    spec.seed = 3;
    const auto patch = generate_patch(spec);
    const auto& c = patch.truth.annotations.at(0);
    const auto map = baseline_infer(patch.image);
    EXPECT_GT(map.at(PmapChannel::TcNeg, c.x, c.y), map.at(PmapChannel::TcPos, c.x, c.y));
    EXPECT_GT(map.at(PmapChannel::TcNeg, c.x, c.y), map.at(PmapChannel::Background, c.x, c.y));
}

TEST(BaselineInfer, OutputIsNormalized) {
    std::mt19937 rng(8);
    PatchImage img(64, 64, reference_mpp());
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng());
    EXPECT_NO_THROW(validate_normalization(baseline_infer(img)));
}

ProbabilityMap random_map(int w, int h, std::uint32_t seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    ProbabilityMap m(w, h, reference_mpp());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const float a = u(rng), b = u(rng) * (1.0f - a);
            m.set(x, y, 1.0f - a - b, a, b);
        }
    return m;
}

TEST(PmapIo, RoundTripIsBitIdentical) {
    TempDir dir("pmap");
    const auto m = random_map(37, 23, 5);
    write_pmap(m, dir / "m.json");
    EXPECT_TRUE(std::filesystem::exists(dir / "m.bin"));
    const auto back = read_pmap(dir / "m.json");
    EXPECT_EQ(back.width, 37);
    EXPECT_EQ(back.height, 23);
    EXPECT_EQ(back.mpp, m.mpp);
    EXPECT_EQ(std::memcmp(back.data.data(), m.data.data(), m.data.size() * sizeof(float)), 0);
}

TEST(PmapIo, BadSumNamesThePixel) {
    TempDir dir("pmap");
    auto m = random_map(4, 3, 6);
    m.set(1, 2, 0.25f, 0.125f, 0.125f);
    try {
        validate_normalization(m);
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("pixel 9"), std::string::npos) << e.what();
    }
    // The writer refuses nothing, the reader checks.
    std::ofstream(dir / "m.json") << R"({"width":1,"height":1,"channels":3,"mpp":0.19,"dtype":"f32le","layout":"planar","class_names":["BACKGROUND","TC_NEG","TC_POS"]})";
    const float bad[3] = {0.25f, 0.125f, 0.125f};
    std::ofstream(dir / "m.bin", std::ios::binary).write(reinterpret_cast<const char*>(bad), sizeof(bad));
    EXPECT_THROW(read_pmap(dir / "m.json"), Error);
}

TEST(PmapIo, SinglePixelCertainPositive) {
    TempDir dir("pmap");
    ProbabilityMap m(1, 1, reference_mpp());
    m.set(0, 0, 0.0f, 0.0f, 1.0f);
    write_pmap(m, dir / "m.json");
    const auto back = read_pmap(dir / "m.json");
    EXPECT_EQ(back.at(PmapChannel::TcPos, 0, 0), 1.0f);
}

TEST(PmapIo, TruncatedPayloadIsRejected) {
    TempDir dir("pmap");
    write_pmap(random_map(5, 5, 1), dir / "m.json");
    std::filesystem::resize_file(dir / "m.bin", 40);
    EXPECT_THROW(read_pmap(dir / "m.json"), Error);
}

TEST(MeanReplicate, IdenticalMapsAreReturned) {
    const auto m = random_map(8, 8, 2);
    const std::vector<ProbabilityMap> reps(5, m);
    const auto out = mean_replicate(reps);
    for (std::size_t i = 0; i < m.data.size(); ++i) {
        EXPECT_NEAR(out.data[i], m.data[i], 1e-6);
    }
}

TEST(MeanReplicate, TwoOppositeCertainties) {
    ProbabilityMap a(1, 1, reference_mpp()), b(1, 1, reference_mpp());
    a.set(0, 0, 1, 0, 0);
    b.set(0, 0, 0, 0, 1);
    const std::vector<ProbabilityMap> reps = {a, b};
    const auto out = mean_replicate(reps);
    EXPECT_FLOAT_EQ(out.at(PmapChannel::Background, 0, 0), 0.5f);
    EXPECT_FLOAT_EQ(out.at(PmapChannel::TcNeg, 0, 0), 0.0f);
    EXPECT_FLOAT_EQ(out.at(PmapChannel::TcPos, 0, 0), 0.5f);
}

TEST(MeanReplicate, NoisyReplicatesConvergeToBase) {
    const auto base = random_map(16, 16, 3);
    std::mt19937 rng(12);
    constexpr double kNoise = 0.05;
    std::normal_distribution<double> noise(0.0, kNoise);
    std::vector<ProbabilityMap> reps;
    for (int r = 0; r < 30; ++r) {
        auto m = base;
        for (auto& v : m.data) v = static_cast<float>(v + noise(rng));
        reps.push_back(std::move(m));
    }
    const auto out = mean_replicate(reps);
    double worst = 0.0;
    for (std::size_t i = 0; i < base.data.size(); ++i) worst = std::max(worst, static_cast<double>(std::abs(out.data[i] - base.data[i])));
    // Five standard errors, covering the renormalization as well.
    EXPECT_LT(worst, 5.0 * kNoise / std::sqrt(30.0));
}

TEST(MeanReplicate, MismatchIsRejected) {
    const std::vector<ProbabilityMap> reps = {random_map(4, 4, 1), random_map(4, 5, 1)};
    EXPECT_THROW(mean_replicate(reps), Error);
    EXPECT_THROW(mean_replicate(std::span<const ProbabilityMap>{}), Error);
}

} // namespace
} // namespace ihcq
