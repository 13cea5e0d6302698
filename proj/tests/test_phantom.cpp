#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "salm/phantom.hpp"
#include "testutil.hpp"

using namespace salm;

TEST(Phantom, DeterministicInSeedAndIndex) {
    PhantomSpec spec;
    spec.dims = {64, 64, 48};
    spec.seed = 5;
    const auto [v1, l1] = generate_phantom<float>(spec, 3);
    const auto [v2, l2] = generate_phantom<float>(spec, 3);
    ASSERT_EQ(v1.data.size(), v2.data.size());
    for (std::int64_t i = 0; i < v1.data.size(); ++i) ASSERT_EQ(v1.data[i], v2.data[i]);
    for (std::size_t i = 0; i < l1.size(); ++i)
        for (int a = 0; a < 3; ++a) ASSERT_EQ(l1.points[i][a], l2.points[i][a]);

    const auto [v3, l3] = generate_phantom<float>(spec, 4);
    bool any_differs = false;
    for (std::size_t i = 0; i < l1.size() && !any_differs; ++i)
        any_differs = !(l3.points[i] == l1.points[i]);
    EXPECT_TRUE(any_differs);
}

TEST(Phantom, LandmarksStrictlyInsideVolume) {
    PhantomSpec spec;
    spec.dims = {96, 96, 72};
    for (int idx = 0; idx < 12; ++idx) {
        const auto [vol, lm] = generate_phantom<float>(spec, idx);
        for (const auto& p : lm.points) {
            EXPECT_GT(p[0], 0.0);
            EXPECT_GT(p[1], 0.0);
            EXPECT_GT(p[2], 0.0);
            EXPECT_LT(p[0], 95.0);
            EXPECT_LT(p[1], 95.0);
            EXPECT_LT(p[2], 71.0);
        }
    }
}

TEST(Phantom, DefaultNamesAndCount) {
    PhantomSpec spec;
    spec.dims = {64, 64, 48};
    const auto [vol, lm] = generate_phantom<float>(spec, 0);
    ASSERT_EQ(lm.size(), 6u);
    EXPECT_EQ(lm.names[0], "head_rx");
    EXPECT_EQ(lm.names[5], "jaw_left");
    spec.landmarks = 1;
    EXPECT_THROW(generate_phantom<float>(spec, 0), validation_error);
    spec.landmarks = 9;
    EXPECT_THROW(generate_phantom<float>(spec, 0), validation_error);
}

TEST(Phantom, LocalContrastExceedsNoise) {
    // 3^3 neighborhood mean at each landmark vs empty-corner background mean
    PhantomSpec spec;  // default 192x192x144, noise 0.02
    spec.landmarks = 8;
    const auto [vol, lm] = generate_phantom<float>(spec, 2);
    const Dims3 d = vol.dims();
    auto block_mean = [&](Vec3<std::int64_t> lo, std::int64_t edge) {
        double acc = 0;
        std::int64_t cnt = 0;
        for (std::int64_t z = lo[2]; z < lo[2] + edge; ++z)
            for (std::int64_t y = lo[1]; y < lo[1] + edge; ++y)
                for (std::int64_t x = lo[0]; x < lo[0] + edge; ++x, ++cnt)
                    acc += double(vol.at(x, y, z));
        return acc / double(cnt);
    };
    double bg = 0;
    int corners = 0;
    for (std::int64_t cx : {std::int64_t(0), d.x - 5})
        for (std::int64_t cy : {std::int64_t(0), d.y - 5})
            for (std::int64_t cz : {std::int64_t(0), d.z - 5}) {
                bg += block_mean({cx, cy, cz}, 5);
                ++corners;
            }
    bg /= corners;
    for (std::size_t i = 0; i < lm.size(); ++i) {
        const Vec3<std::int64_t> c{std::llround(lm.points[i][0]) - 1,
                                   std::llround(lm.points[i][1]) - 1,
                                   std::llround(lm.points[i][2]) - 1};
        const double local = block_mean(c, 3);
        EXPECT_GT(local - bg, 3.0 * spec.noise_std) << lm.names[i];
    }
}

TEST(Phantom, LandmarksIdentifiableByNearestBrightVoxel) {
    PhantomSpec spec;
    spec.noise_std = 0.0;
    spec.landmarks = 8;
    const auto [vol, lm] = generate_phantom<float>(spec, 1);
    for (std::size_t i = 0; i < lm.size(); ++i) {
        const auto& p = lm.points[i];
        double best = 1e9;
        for (std::int64_t dz = -3; dz <= 3; ++dz)
            for (std::int64_t dy = -3; dy <= 3; ++dy)
                for (std::int64_t dx = -3; dx <= 3; ++dx) {
                    const std::int64_t x = std::llround(p[0]) + dx;
                    const std::int64_t y = std::llround(p[1]) + dy;
                    const std::int64_t z = std::llround(p[2]) + dz;
                    if (!vol.contains(x, y, z)) continue;
                    if (vol.at(x, y, z) >= 0.4f) {
                        const Vec3<double> q{double(x), double(y), double(z)};
                        best = std::min(best, (q - p).norm());
                    }
                }
        EXPECT_LE(best, 2.0) << lm.names[i];
    }
}

TEST(Dataset, SplitCountsAndManifestIntegrity) {
    test::TempDir dir("ds");
    PhantomSpec spec;
    spec.dims = {48, 48, 48};
    spec.landmarks = 2;
    spec.jitter_translation = 3.0;
    spec.jitter_scale = 0.04;
    const auto manifest_path = generate_dataset<float>(spec, 10, {0.8, 0.0, 0.2}, dir.path());
    const auto manifest = load_manifest(manifest_path);
    EXPECT_EQ(manifest.train.size(), 8u);
    EXPECT_EQ(manifest.val.size(), 0u);
    EXPECT_EQ(manifest.test.size(), 2u);
    for (const auto& base : manifest.train) {
        EXPECT_TRUE(std::filesystem::exists(dir.path() / (base + ".vol.json")));
        EXPECT_TRUE(std::filesystem::exists(dir.path() / (base + ".vol.raw")));
        EXPECT_TRUE(std::filesystem::exists(dir.path() / (base + ".lmk.json")));
    }
    const auto split = load_split<float>(dir.path(), manifest.test);
    EXPECT_EQ(split.size(), 2u);
    EXPECT_EQ(split[0].second.size(), 2u);
}

TEST(Dataset, RegenerationReproducesManifestAndData) {
    test::TempDir d1("ds1"), d2("ds2");
    PhantomSpec spec;
    spec.dims = {48, 48, 48};
    spec.seed = 21;
    generate_dataset<float>(spec, 4, {0.75, 0.0, 0.25}, d1.path());
    generate_dataset<float>(spec, 4, {0.75, 0.0, 0.25}, d2.path());
    auto slurp = [](const std::filesystem::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(in), {});
    };
    EXPECT_EQ(slurp(d1.path() / "manifest.json"), slurp(d2.path() / "manifest.json"));
    EXPECT_EQ(slurp(d1.path() / "phantom_0.vol.raw"), slurp(d2.path() / "phantom_0.vol.raw"));
    EXPECT_EQ(slurp(d1.path() / "phantom_0.lmk.json"), slurp(d2.path() / "phantom_0.lmk.json"));
}

TEST(Dataset, RejectsBadSpecAndCounts) {
    test::TempDir dir("dsbad");
    PhantomSpec spec;
    spec.dims = {30, 48, 48};  // not divisible by 4
    EXPECT_THROW(generate_dataset<float>(spec, 4, {1, 0, 0}, dir.path()), validation_error);
    PhantomSpec ok;
    ok.dims = {48, 48, 48};
    EXPECT_THROW(generate_dataset<float>(ok, 2, {1, 0, 0}, dir.path()), validation_error);
    EXPECT_THROW(generate_dataset<float>(ok, 4, {0.5, 0.0, 0.2}, dir.path()), validation_error);
}
