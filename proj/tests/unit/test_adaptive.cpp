#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "bsplat/adaptive.hpp"
#include "../scene_util.hpp"

using namespace bsplat;

namespace {

CurveSet<double> canvas(int w = 100, int h = 100) {
    CurveSet<double> cs;
    cs.canvas_w = w;
    cs.canvas_h = h;
    return cs;
}

OpenStroke<double> arc(double cx, double cy, double r, Rgb<double> color = {0.5, 0.5, 0.5}) {
    return circle_stroke<double>({cx, cy}, r, 0.0, 2.0, 0.9, color);
}

ScalarGrid<double> blocks(int w, int h, std::initializer_list<std::array<int, 4>> rects, double value = 1.0) {
    ScalarGrid<double> g(h, w, 0.0);
    for (const auto& r : rects)
        for (int y = r[1]; y < r[1] + r[3]; ++y)
            for (int x = r[0]; x < r[0] + r[2]; ++x) g(y, x) = value;
    return g;
}

} // namespace

TEST(Prune, LowOpacity) {
    auto cs = canvas();
    cs.strokes.push_back(arc(30, 30, 10));
    cs.strokes.push_back(arc(70, 70, 10, {0.9, 0.1, 0.1}));
    cs.strokes[1].opacity = {0.01, 0.01, 0.01};
    const auto r = prune(cs, SamplingParams<double>{}, PruneCriteria{});
    ASSERT_EQ(r.removed.size(), 1u);
    EXPECT_EQ(r.removed[0].curve, 1);
    EXPECT_EQ(r.removed[0].reason, PruneReason::low_opacity);
}

TEST(Prune, OneOpaqueNodeKeepsTheCurve) {
    auto cs = canvas();
    cs.strokes.push_back(arc(30, 30, 10));
    cs.strokes[0].opacity = {0.01, 0.01, 0.5};
    PruneCriteria c;
    c.mid_dip_ratio = 0; // isolate rule (a)
    EXPECT_TRUE(prune(cs, SamplingParams<double>{}, c).removed.empty());
}

TEST(Prune, SmallArea) {
    auto cs = canvas();
    OpenStroke<double> tiny = arc(50, 50, 0.2);
    tiny.width = 0.3;
    cs.strokes.push_back(tiny);
    const auto r = prune(cs, SamplingParams<double>{}, PruneCriteria{});
    ASSERT_EQ(r.removed.size(), 1u);
    EXPECT_EQ(r.removed[0].reason, PruneReason::small_area);
}

TEST(Prune, MidDip) {
    auto cs = canvas();
    cs.strokes.push_back(arc(30, 30, 10));
    cs.strokes[0].opacity = {0.9, 0.1, 0.9};
    const auto r = prune(cs, SamplingParams<double>{}, PruneCriteria{});
    ASSERT_EQ(r.removed.size(), 1u);
    EXPECT_EQ(r.removed[0].reason, PruneReason::mid_dip);
    SamplingParams<double> tied;
    tied.opacity_count = 1;
    EXPECT_TRUE(prune(cs, tied, PruneCriteria{}).removed.empty());
}

TEST(Prune, IdenticalCoincidentCurvesLoseExactlyOne) {
    auto cs = canvas();
    cs.strokes.push_back(arc(40, 40, 12));
    cs.strokes.push_back(arc(40, 40, 12));
    const auto r = prune(cs, SamplingParams<double>{}, PruneCriteria{});
    ASSERT_EQ(r.removed.size(), 1u);
    EXPECT_EQ(r.removed[0].curve, 1);
    EXPECT_EQ(r.removed[0].reason, PruneReason::redundant);
}

TEST(Prune, LargerCurveSurvivesRedundantPair) {
    auto cs = canvas();
    cs.regions.push_back(circle_region<double>({50, 50}, 5, 0, 0.9, {0.2, 0.2, 0.2}));
    cs.regions.push_back(circle_region<double>({50, 50}, 20, 0, 0.9, {0.2, 0.2, 0.21}));
    const auto r = prune(cs, SamplingParams<double>{}, PruneCriteria{});
    ASSERT_EQ(r.removed.size(), 1u);
    EXPECT_EQ(r.removed[0].curve, 0);
}

TEST(Prune, DifferentColorsOrDisjointBoxesAreKept) {
    auto cs = canvas();
    cs.strokes.push_back(arc(40, 40, 12, {0.2, 0.2, 0.2}));
    cs.strokes.push_back(arc(40, 40, 12, {0.8, 0.2, 0.2}));
    cs.strokes.push_back(arc(80, 80, 8, {0.2, 0.2, 0.2}));
    EXPECT_TRUE(prune(cs, SamplingParams<double>{}, PruneCriteria{}).removed.empty());
}

TEST(Prune, IsIdempotentOnSurvivors) {
    auto cs = bsplat::testing::random_scene<double>(4, 64, 64, 30, 0);
    for (auto& s : cs.strokes) s.color = {0.5, 0.5, 0.5};
    const SamplingParams<double> p;
    const auto first = prune(cs, p, PruneCriteria{});
    ASSERT_FALSE(first.removed.empty());
    CurveSet<double> survivors = canvas(64, 64);
    std::size_t k = 0;
    for (std::size_t i = 0; i < cs.strokes.size(); ++i) {
        if (k < first.removed.size() && first.removed[k].curve == int(i)) {
            ++k;
            continue;
        }
        survivors.strokes.push_back(cs.strokes[i]);
    }
    EXPECT_TRUE(prune(survivors, p, PruneCriteria{}).removed.empty());
}

TEST(Aabb, StraightCurveGetsAOnePixelMinimumExtent) {
    const std::vector<Vec2<double>> pts{{0, 5}, {10, 5}};
    const auto box = detail::points_aabb(pts);
    EXPECT_DOUBLE_EQ(box.y1 - box.y0, 1.0);
    EXPECT_DOUBLE_EQ(box.x1 - box.x0, 10.0);
    EXPECT_DOUBLE_EQ(detail::overlap_of_smaller(box, box), 1.0);
}

TEST(ErrorRegions, ZeroMapHasNoRegions) {
    EXPECT_TRUE(find_error_regions(ScalarGrid<double>(20, 30, 0.0)).empty());
    EXPECT_TRUE(find_error_regions(ScalarGrid<double>()).empty());
}

TEST(ErrorRegions, SingleBlock) {
    const auto regions = find_error_regions(blocks(40, 40, {{{5, 10, 10, 10}}}));
    ASSERT_EQ(regions.size(), 1u);
    EXPECT_EQ(regions[0].area, 100u);
    EXPECT_DOUBLE_EQ(regions[0].centroid.x, 10.0);
    EXPECT_DOUBLE_EQ(regions[0].centroid.y, 15.0);
    EXPECT_DOUBLE_EQ(regions[0].mean_error, 1.0);
}

TEST(ErrorRegions, RankedByAreaThenError) {
    auto g = blocks(50, 50, {{{30, 30, 5, 5}}, {{2, 2, 10, 10}}});
    for (int y = 40; y < 45; ++y)
        for (int x = 5; x < 10; ++x) g(y, x) = 2.0;
    const auto regions = find_error_regions(g);
    ASSERT_EQ(regions.size(), 3u);
    EXPECT_EQ(regions[0].area, 100u);
    EXPECT_EQ(regions[1].area, 25u);
    EXPECT_DOUBLE_EQ(regions[1].mean_error, 2.0);
    EXPECT_EQ(regions[2].area, 25u);
}

TEST(ErrorRegions, DiagonalPixelsAreSeparateComponents) {
    ScalarGrid<double> g(10, 10, 0.0);
    g(2, 2) = 1;
    g(3, 3) = 1;
    EXPECT_EQ(find_error_regions(g).size(), 2u);
}

TEST(Spawn, RadiusFromAreaWithClamps) {
    const SpawnSettings s;
    EXPECT_NEAR(spawn_radius(400, s), std::sqrt(400 / std::numbers::pi), 1e-12);
    EXPECT_DOUBLE_EQ(spawn_radius(1, s), 2.0);
    EXPECT_DOUBLE_EQ(spawn_radius(1000000, s), 64.0);
}

TEST(Spawn, StrokeTracesThreeQuarterCircle) {
    const auto s = circle_stroke<double>({20, 30}, 10, 0.0, 2.0, 0.9, {1, 0, 0});
    for (int k = 0; k <= 3; ++k) {
        const double a = k * std::numbers::pi / 2;
        EXPECT_NEAR(s.points[3 * k].x, 20 + 10 * std::cos(a), 1e-12);
        EXPECT_NEAR(s.points[3 * k].y, 30 + 10 * std::sin(a), 1e-12);
    }
    // arc midpoints stay within 0.1% of the radius
    for (int seg = 0; seg < 3; ++seg) {
        const auto m = eval_segment(s.segment(seg), 0.5);
        EXPECT_NEAR((m - Vec2<double>{20, 30}).norm(), 10.0, 0.01);
    }
    EXPECT_EQ(s.width, 2.0);
    EXPECT_EQ(s.opacity, (std::array<double, 3>{0.9, 0.9, 0.9}));
}

TEST(Spawn, RegionIsTwoSemicirclesSharingEndpoints) {
    const auto r = circle_region<double>({50, 50}, 10, 0.0, 0.9, {0, 0, 1});
    EXPECT_EQ(r.boundary_a().p[0], r.boundary_b().p[0]);
    EXPECT_EQ(r.boundary_a().p[3], r.boundary_b().p[3]);
    EXPECT_NEAR(r.points[0].x, 60, 1e-12);
    EXPECT_NEAR(r.points[3].x, 40, 1e-12);
    // the two boundaries bulge to opposite sides, 10 px from the center
    const auto ma = eval_segment(r.boundary_a(), 0.5), mb = eval_segment(r.boundary_b(), 0.5);
    EXPECT_NEAR(ma.y, 60, 1e-9);
    EXPECT_NEAR(mb.y, 40, 1e-9);
}

TEST(Spawn, CurveTakesRegionMeanColor) {
    Image<double> target(10, 10, 0.0);
    for (int x = 0; x < 10; ++x) target.at(x, 0, 0) = x < 5 ? 1.0 : 0.5;
    ErrorRegion region;
    for (int x = 0; x < 10; ++x) region.pixels.push_back(x);
    region.area = 10;
    region.centroid = {5, 0.5};
    ClosedRegion<double> out;
    spawn_curve(region, target, SpawnSettings{}, 0.0, out);
    EXPECT_NEAR(out.color[0], 0.75, 1e-12);
    EXPECT_EQ(out.opacity[1], 0.9);
}

TEST(Adapt, NothingPrunableLeavesSetUnchanged) {
    auto cs = canvas();
    cs.strokes.push_back(arc(30, 30, 10, {1, 0, 0}));
    const auto before = cs;
    const auto rep = adapt(cs, blocks(100, 100, {{{0, 0, 10, 10}}}), Image<double>(100, 100),
                           SamplingParams<double>{}, PruneCriteria{}, SpawnSettings{}, 1);
    EXPECT_TRUE(rep.removed.empty());
    EXPECT_EQ(cs.strokes, before.strokes);
}

TEST(Adapt, RefillsSlotsInTopRegionsAndKeepsCount) {
    auto cs = canvas();
    for (int i = 0; i < 5; ++i) cs.strokes.push_back(arc(15 + 15 * i, 50, 5, {0.1 * i, 0, 0}));
    for (int i : {1, 2, 4}) cs.strokes[i].opacity = {0.001, 0.001, 0.001};
    Image<double> target(100, 100, 0.25);
    const auto map = blocks(100, 100,
                            {{{0, 0, 20, 20}}, {{40, 40, 15, 15}}, {{80, 80, 10, 10}}, {{0, 80, 5, 5}}, {{90, 0, 4, 4}}});
    const auto rep = adapt(cs, map, target, SamplingParams<double>{}, PruneCriteria{}, SpawnSettings{}, 9);
    EXPECT_EQ(cs.size(), 5u);
    EXPECT_EQ(rep.respawned, (std::vector<int>{1, 2, 4}));
    EXPECT_EQ(rep.regions_found, 5u);
    const std::array<Vec2<double>, 3> centers{Vec2<double>{10, 10}, {47.5, 47.5}, {85, 85}};
    const std::array<std::size_t, 3> areas{400, 225, 100};
    for (int k = 0; k < 3; ++k) {
        const auto& s = cs.strokes[rep.respawned[k]];
        const double r = spawn_radius(areas[k], SpawnSettings{});
        EXPECT_NEAR((s.points[0] - centers[k]).norm(), r, 1e-9);
        EXPECT_NEAR((s.points[9] - centers[k]).norm(), r, 1e-9);
        EXPECT_DOUBLE_EQ(s.color[0], 0.25);
        EXPECT_DOUBLE_EQ(s.opacity[0], 0.9);
    }
}

TEST(Adapt, CyclesWithJitterWhenRegionsAreScarce) {
    auto cs = canvas();
    for (int i = 0; i < 3; ++i) {
        cs.regions.push_back(circle_region<double>({20.0 + 30 * i, 20}, 8, 0, 0.001, {0.3 * i, 0, 0}));
    }
    const auto map = blocks(100, 100, {{{50, 50, 20, 20}}});
    const auto rep = adapt(cs, map, Image<double>(100, 100), SamplingParams<double>{}, PruneCriteria{},
                           SpawnSettings{}, 3);
    ASSERT_EQ(rep.respawned.size(), 3u);
    const double r = spawn_radius(400, SpawnSettings{});
    for (int k = 0; k < 3; ++k) {
        const auto& g = cs.regions[k];
        const Vec2<double> center = (g.points[0] + g.points[3]) * 0.5;
        const double off = (center - Vec2<double>{60, 60}).norm();
        if (k == 0)
            EXPECT_NEAR(off, 0.0, 1e-9);
        else
            EXPECT_LE(off, r / 2 + 1e-9);
    }
}

TEST(Adapt, DeterministicForAFixedSeed) {
    auto a = bsplat::testing::random_scene<double>(5, 64, 64, 10, 0);
    for (auto& s : a.strokes) s.opacity[1] = 0.01;
    auto b = a;
    const auto map = bsplat::testing::random_image<double>(6, 64, 64);
    ScalarGrid<double> err(64, 64);
    for (std::size_t i = 0; i < err.v.size(); ++i) err.v[i] = map.data()[i * 3];
    const auto target = bsplat::testing::random_image<double>(7, 64, 64);
    adapt(a, err, target, SamplingParams<double>{}, PruneCriteria{}, SpawnSettings{}, 42);
    adapt(b, err, target, SamplingParams<double>{}, PruneCriteria{}, SpawnSettings{}, 42);
    EXPECT_EQ(a.strokes, b.strokes);
}

TEST(Adapt, FlatErrorMapFallsBackToRandomCenters) {
    auto cs = canvas(32, 32);
    cs.strokes.push_back(arc(16, 16, 5));
    cs.strokes[0].opacity = {0, 0, 0};
    const auto rep = adapt(cs, ScalarGrid<double>(32, 32, 0.0), Image<double>(32, 32, 0.5),
                           SamplingParams<double>{}, PruneCriteria{}, SpawnSettings{}, 8);
    EXPECT_EQ(rep.respawned.size(), 1u);
    EXPECT_EQ(rep.regions_found, 0u);
    EXPECT_DOUBLE_EQ(cs.strokes[0].opacity[0], 0.9);
    EXPECT_DOUBLE_EQ(cs.strokes[0].color[2], 0.5);
}
