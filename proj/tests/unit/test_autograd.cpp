#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "bsplat/pipeline.hpp"
#include "../scene_util.hpp"

using namespace bsplat;
using namespace bsplat::testing;

namespace {

RenderSettings smooth_settings() {
    RenderSettings s;
    s.radius_mult = 8.0;
    s.t_eps = 0.0;
    return s;
}

// sum(w * color) for fixed random weights w.
double weighted_sum(const SplatBatch<double>& b, const std::vector<double>& w, int width, int height) {
    const auto buf = render(b, width, height, Rgb<double>{0.2, 0.3, 0.4}, smooth_settings());
    double s = 0;
    for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * buf.color[i];
    return s;
}

void expect_close(double analytic, double numeric, const char* what, std::size_t g) {
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-3});
    EXPECT_LT(std::abs(analytic - numeric) / scale, 1e-5) << what << " of Gaussian " << g << ": " << analytic << " vs "
                                                          << numeric;
}

PipelineConfig check_config() {
    PipelineConfig cfg;
    cfg.render = smooth_settings();
    return cfg;
}

} // namespace

TEST(BackwardBlend, MatchesFiniteDifferencesPerGaussian) {
    const int w = 24, h = 20;
    auto batch = random_gaussians<double>(3, 12, w, h);
    for (auto& g : batch.gaussians) g.opacity = std::min(g.opacity, 0.9);
    const auto weights = [&] {
        std::mt19937_64 rng(4);
        std::uniform_real_distribution<double> u(-1, 1);
        std::vector<double> v(std::size_t(w) * h * 3);
        for (auto& x : v) x = u(rng);
        return v;
    }();
    const auto buf = render(batch, w, h, Rgb<double>{0.2, 0.3, 0.4}, smooth_settings());
    const auto grads = backward_blend(batch, buf, weights);
    ASSERT_EQ(grads.size(), batch.size());

    const double step = 1e-6;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        auto fd = [&](const std::function<double&(Gaussian2D<double>&)>& field) {
            auto probe = batch;
            double& v = field(probe.gaussians[i]);
            const double saved = v;
            v = saved + step;
            const double fp = weighted_sum(probe, weights, w, h);
            v = saved - step;
            const double fm = weighted_sum(probe, weights, w, h);
            return (fp - fm) / (2 * step);
        };
        expect_close(grads[i].center.x, fd([](auto& g) -> double& { return g.center.x; }), "center.x", i);
        expect_close(grads[i].center.y, fd([](auto& g) -> double& { return g.center.y; }), "center.y", i);
        expect_close(grads[i].sigma_x, fd([](auto& g) -> double& { return g.sigma_x; }), "sigma_x", i);
        expect_close(grads[i].sigma_y, fd([](auto& g) -> double& { return g.sigma_y; }), "sigma_y", i);
        expect_close(grads[i].theta, fd([](auto& g) -> double& { return g.theta; }), "theta", i);
        expect_close(grads[i].opacity, fd([](auto& g) -> double& { return g.opacity; }), "opacity", i);
        for (int c = 0; c < 3; ++c)
            expect_close(grads[i].color[c], fd([c](auto& g) -> double& { return g.color[c]; }), "color", i);
    }
}

TEST(BackwardBlend, RejectsForeignRenderBuffer) {
    const auto a = random_gaussians<float>(1, 4, 16, 16);
    const auto b = random_gaussians<float>(2, 5, 16, 16);
    const auto buf = render(a, 16, 16, Rgb<float>{});
    const std::vector<float> dl(16 * 16 * 3, 1.0f);
    EXPECT_THROW(backward_blend(b, buf, dl), std::logic_error);
}

TEST(BackwardBlend, OffscreenGaussianGetsNoGradient) {
    auto batch = random_gaussians<float>(6, 3, 16, 16);
    batch.gaussians[1].center = {500, 500};
    const auto buf = render(batch, 16, 16, Rgb<float>{});
    const std::vector<float> dl(16 * 16 * 3, 1.0f);
    const auto g = backward_blend(batch, buf, dl);
    EXPECT_EQ(g[1].center.x, 0.0f);
    EXPECT_EQ(g[1].opacity, 0.0f);
}

TEST(BackwardBlend, DeterministicAcrossThreadCounts) {
    const auto cs = random_scene<float>(12, 64, 48, 6, 4);
    const auto target = random_image<float>(13, 64, 48);
    const SamplingParams<float> sp;
    const auto batch = build_batch(cs, sp);
    const auto buf = render(batch, 64, 48, cs.background);
    const auto l2 = l2_loss(buf.color, target);
    const int before = thread_count();
    set_thread_count(1);
    const auto g1 = backward_sampling(batch, backward_blend(batch, buf, l2.grad), cs, sp);
    set_thread_count(3);
    const auto g3 = backward_sampling(batch, backward_blend(batch, buf, l2.grad), cs, sp);
    set_thread_count(before);
    EXPECT_EQ(g1.strokes, g3.strokes);
    EXPECT_EQ(g1.regions, g3.regions);
}

TEST(GradientBuffer, ZerosLikeAndFiniteness) {
    const auto cs = random_scene<double>(1, 32, 32, 2, 1);
    auto g = GradientBuffer<double>::zeros_like(cs);
    EXPECT_EQ(g.strokes.size(), 2u);
    EXPECT_EQ(g.regions.size(), 1u);
    EXPECT_EQ(g.strokes[0].width, 0.0);
    EXPECT_TRUE(g.all_finite());
    g.regions[0].color[1] = std::nan("");
    EXPECT_FALSE(g.all_finite());
    g.set_zero();
    EXPECT_TRUE(g.all_finite());
}

class FullChainGradient : public ::testing::TestWithParam<int> {};

TEST_P(FullChainGradient, MatchesCentralDifferences) {
    const int seed = GetParam();
    const int strokes = seed % 3 == 2 ? 0 : 2, regions = seed % 3 == 1 ? 0 : 2;
    const auto cs = random_scene<double>(500 + seed, 40, 40, strokes, regions);
    const auto target = random_image<double>(900 + seed, 40, 40);
    auto cfg = check_config();
    cfg.sampling.samples = 12;
    cfg.sampling.interior = 5;
    const auto report = check_gradients(cs, target, cfg);
    EXPECT_TRUE(report.passed()) << report.summary();
    EXPECT_GT(report.samples.size(), report.excluded.size());
}

INSTANTIATE_TEST_SUITE_P(Scenes, FullChainGradient, ::testing::Range(0, 6));

TEST(FullChainGradientTied, SingleOpacityMode) {
    const auto cs = random_scene<double>(77, 40, 40, 2, 2);
    const auto target = random_image<double>(78, 40, 40);
    auto cfg = check_config();
    cfg.sampling.samples = 10;
    cfg.sampling.interior = 4;
    cfg.sampling.opacity_count = 1;
    const auto report = check_gradients(cs, target, cfg);
    EXPECT_TRUE(report.passed()) << report.summary();
}

TEST(GradCheck, SingleParameterAgreesWithManualDifference) {
    const auto cs = random_scene<double>(3, 32, 32, 1, 0);
    const auto target = random_image<double>(4, 32, 32);
    auto cfg = check_config();
    cfg.sampling.samples = 8;
    auto ev = evaluate(cs, target, cfg, true);
    const double analytic = ev.grads.strokes[0].points[4].x;
    auto probe = cs;
    probe.strokes[0].points[4].x += 1e-3;
    const double fp = evaluate(probe, target, cfg, false).report.total;
    probe.strokes[0].points[4].x -= 2e-3;
    const double fm = evaluate(probe, target, cfg, false).report.total;
    const double numeric = (fp - fm) / 2e-3;
    EXPECT_NEAR(analytic, numeric, 1e-4 * std::max(1e-4, std::abs(numeric)));
    EXPECT_THROW(check_gradients(cs, target, cfg, GradCheckOptions{0.0}), std::invalid_argument);
}
