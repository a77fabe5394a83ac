#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "bsplat/curve_model.hpp"

using namespace bsplat;

namespace {

// Oracle: repeated linear interpolation.
Vec2<double> de_casteljau(std::array<Vec2<double>, 4> p, double t) {
    for (int level = 3; level > 0; --level)
        for (int i = 0; i < level; ++i) p[i] = p[i] * (1 - t) + p[i + 1] * t;
    return p[0];
}

BezierSegment<double> random_segment(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-50.0, 150.0);
    BezierSegment<double> s;
    for (auto& p : s.p) p = {u(rng), u(rng)};
    return s;
}

} // namespace

TEST(Bernstein, PartitionOfUnityAndNonNegative) {
    for (int degree = 0; degree <= 6; ++degree)
        for (int i = 0; i <= 20; ++i) {
            const double t = i / 20.0;
            double sum = 0;
            for (int j = 0; j <= degree; ++j) {
                const double b = bernstein(j, degree, t);
                EXPECT_GE(b, 0.0);
                sum += b;
            }
            EXPECT_NEAR(sum, 1.0, 1e-14) << "degree " << degree << " t " << t;
        }
}

TEST(Bernstein, CubicWeightsMatchGenericBasis) {
    for (int i = 0; i <= 10; ++i) {
        const double t = i / 10.0;
        const auto w = cubic_weights(t);
        for (int j = 0; j < 4; ++j) EXPECT_NEAR(w[j], bernstein(j, 3, t), 1e-15);
    }
}

TEST(Bernstein, KnownValues) {
    EXPECT_DOUBLE_EQ(bernstein(1, 3, 0.5), 0.375);
    EXPECT_DOUBLE_EQ(bernstein(0, 3, 0.0), 1.0);
    EXPECT_DOUBLE_EQ(bernstein(3, 3, 1.0), 1.0);
    EXPECT_DOUBLE_EQ(bernstein(2, 3, 0.0), 0.0);
}

TEST(EvalSegment, MatchesDeCasteljau) {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        const auto seg = random_segment(rng);
        for (int i = 0; i <= 16; ++i) {
            const double t = i / 16.0;
            const auto a = eval_segment(seg, t);
            const auto b = de_casteljau(seg.p, t);
            EXPECT_NEAR(a.x, b.x, 1e-11);
            EXPECT_NEAR(a.y, b.y, 1e-11);
        }
    }
}

TEST(EvalSegment, InterpolatesEndpoints) {
    std::mt19937_64 rng(3);
    const auto seg = random_segment(rng);
    EXPECT_EQ(eval_segment(seg, 0.0), seg.p[0]);
    EXPECT_EQ(eval_segment(seg, 1.0), seg.p[3]);
}

TEST(BernsteinTable, RowsMatchDeCasteljauAtUniformT) {
    std::mt19937_64 rng(11);
    const auto seg = random_segment(rng);
    const BernsteinTable<double> table(32);
    ASSERT_EQ(table.samples(), 32);
    for (int k = 0; k < 32; ++k) {
        const auto a = table.eval(seg, k);
        const auto b = de_casteljau(seg.p, k / 31.0);
        EXPECT_NEAR(a.x, b.x, 1e-11);
        EXPECT_NEAR(a.y, b.y, 1e-11);
    }
    EXPECT_THROW(BernsteinTable<double>(1), std::invalid_argument);
}

TEST(BernsteinTable, FloatAgreesWithDouble) {
    std::mt19937_64 rng(5);
    const auto seg = random_segment(rng);
    BezierSegment<float> segf;
    for (int j = 0; j < 4; ++j) segf.p[j] = vec_cast<float>(seg.p[j]);
    const auto pf = sample_points(segf, 32);
    const auto pd = sample_points(seg, 32);
    for (int k = 0; k < 32; ++k) {
        EXPECT_NEAR(pf[k].x, pd[k].x, 1e-4);
        EXPECT_NEAR(pf[k].y, pd[k].y, 1e-4);
    }
}

TEST(CdfTValues, SymmetricIncreasingAndInsideUnitInterval) {
    for (int r : {1, 2, 5, 20, 21}) {
        const auto t = cdf_t_values<double>(r);
        ASSERT_EQ(int(t.size()), r);
        for (int i = 0; i < r; ++i) {
            EXPECT_GT(t[i], 0.0);
            EXPECT_LT(t[i], 1.0);
            EXPECT_NEAR(t[i] + t[r - 1 - i], 1.0, 1e-15);
            if (i > 0) EXPECT_GT(t[i], t[i - 1]);
            const double u = double(i + 1) / (r + 1);
            const double s = std::sin(std::numbers::pi * u / 2);
            EXPECT_NEAR(t[i], s * s, 1e-14);
        }
    }
    EXPECT_THROW(cdf_t_values<double>(0), std::invalid_argument);
}

TEST(CdfTValues, DenserNearBoundaries) {
    const auto t = cdf_t_values<double>(20);
    EXPECT_LT(t[1] - t[0], t[10] - t[9]);
}

TEST(ClosedRegion, BoundariesShareEndpoints) {
    ClosedRegion<double> r;
    for (int i = 0; i < 6; ++i) r.points[i] = {double(i), double(i * i)};
    const auto a = r.boundary_a(), b = r.boundary_b();
    EXPECT_EQ(a.p[0], b.p[0]);
    EXPECT_EQ(a.p[3], b.p[3]);
    EXPECT_EQ(b.p[1], r.points[4]);
    EXPECT_EQ(b.p[2], r.points[5]);
}

TEST(ClosedRegion, InterpolatedRowsStartAndEndOnBoundaries) {
    ClosedRegion<double> r;
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0, 100);
    for (auto& p : r.points) p = {u(rng), u(rng)};
    const auto segs = interpolate_region_curves(r, 20);
    ASSERT_EQ(segs.size(), 22u);
    EXPECT_EQ(segs.front(), r.boundary_a());
    EXPECT_EQ(segs.back(), r.boundary_b());
    // every interior row shares the region's two corner points
    for (const auto& s : segs) {
        EXPECT_NEAR(s.p[0].x, r.points[0].x, 1e-12);
        EXPECT_NEAR(s.p[3].y, r.points[3].y, 1e-12);
    }
    const auto grid = sample_region_points(r, 20, 32);
    EXPECT_EQ(grid.rows, 22);
    EXPECT_EQ(grid.cols, 32);
}

TEST(OpenStroke, SegmentsShareEndpoints) {
    OpenStroke<double> s;
    for (int i = 0; i < 10; ++i) s.points[i] = {double(i), -double(i)};
    for (int k = 0; k < 2; ++k) EXPECT_EQ(s.segment(k).p[3], s.segment(k + 1).p[0]);
    EXPECT_EQ(s.segment(2).p[3], s.points[9]);
}

TEST(CurveSet, CastRoundTripsThroughDouble) {
    CurveSet<float> cs;
    cs.canvas_w = 10;
    cs.canvas_h = 20;
    cs.background = {0.1f, 0.2f, 0.3f};
    OpenStroke<float> s;
    s.points[3] = {1.25f, 2.5f};
    s.width = 1.5f;
    cs.strokes.push_back(s);
    ClosedRegion<float> r;
    r.opacity = {0.1f, 0.2f, 0.3f};
    cs.regions.push_back(r);
    const auto back = cs.cast<double>().cast<float>();
    EXPECT_EQ(back.canvas_w, 10);
    EXPECT_EQ(back.strokes[0], s);
    EXPECT_EQ(back.regions[0], r);
    EXPECT_EQ(back.size(), 2u);
}

TEST(ForEachParam, VisitsEveryScalarOnce) {
    CurveSet<double> cs;
    cs.strokes.resize(2);
    cs.regions.resize(3);
    int count = 0, points = 0;
    for_each_param(
        [&](const ParamId& id, double&) {
            ++count;
            points += id.cls == ParamClass::points;
        },
        cs);
    // stroke: 20 coords + width + 3 color + 3 opacity; region: 12 coords + 3 + 3
    EXPECT_EQ(count, 2 * 27 + 3 * 18);
    EXPECT_EQ(points, 2 * 20 + 3 * 12);
}
