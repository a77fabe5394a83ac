#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "bsplat/adaptive.hpp"
#include "bsplat/metrics.hpp"
#include "bsplat/pipeline.hpp"

namespace bsplat {

enum class InitColor { target, random };

struct TrainerConfig {
    CurveMode mode = CurveMode::open;
    int n_curves = 256;
    int iters = -1; // -1: 15000 open, 10000 closed

    double lr_color = 0.01;
    double lr_points = 2e-4; // fraction of the longer canvas side per unit step
    double lr_opacity = 0.1;
    double lr_width = 2e-3;
    int lr_step = -1;        // -1: a third of iters
    double lr_gamma = 0.5;

    bool adapt = true;
    int adapt_every = 400;
    int adapt_until = -1;    // -1: 14000/15000 (open) or 9200/10000 (closed) of iters
    bool dynamic_opacity_threshold = false; // 0.05 -> opacity_threshold over adapt_until
    PruneCriteria prune{};

    int samples = 32;
    int interior = 20;
    double rho = 3.0;
    double sigma_floor = 0.3;
    int opacity_count = 3;
    RenderSettings render{};
    LossConfig loss{};

    double width_min = 0.3;
    double init_width = 2.0;
    double init_opacity = 0.9;
    double init_radius = 0; // 0: derived from canvas area and curve count
    InitColor init_color = InitColor::target;
    Rgb<double> background{1, 1, 1};

    std::uint64_t seed = 0;
    int log_every = 100;

    int resolved_iters() const { return iters >= 0 ? iters : (mode == CurveMode::open ? 15000 : 10000); }
    int resolved_adapt_until() const {
        if (adapt_until >= 0) return adapt_until;
        const long long n = resolved_iters();
        return mode == CurveMode::open ? int(n * 14000 / 15000) : int(n * 9200 / 10000);
    }
    int resolved_lr_step() const { return lr_step > 0 ? lr_step : std::max(1, resolved_iters() / 3); }

    PipelineConfig pipeline() const {
        PipelineConfig p;
        p.sampling = {samples, interior, rho, sigma_floor, opacity_count};
        p.render = render;
        p.loss = loss;
        return p;
    }

    SpawnSettings spawn(int canvas_w, int canvas_h) const {
        SpawnSettings s;
        s.r_max = std::max(2.0, 0.25 * std::min(canvas_w, canvas_h));
        s.width = init_width;
        s.opacity = init_opacity;
        return s;
    }

    /// Throws std::invalid_argument describing the first violated constraint.
    void validate() const {
        auto require = [](bool ok, const char* what) {
            if (!ok) throw std::invalid_argument(std::string("invalid trainer config: ") + what);
        };
        require(n_curves >= 1, "n_curves must be >= 1");
        require(lr_color > 0 && lr_points > 0 && lr_opacity > 0 && lr_width > 0, "learning rates must be > 0");
        require(lr_gamma > 0 && lr_gamma <= 1, "lr_gamma must be in (0, 1]");
        require(adapt_every >= 1, "adapt_every must be >= 1");
        require(!adapt || resolved_iters() == 0 || resolved_adapt_until() < resolved_iters(),
                "adapt_until must be < iters");
        require(samples >= 2, "samples must be >= 2");
        require(interior >= 0, "interior must be >= 0");
        require(rho > 0, "rho must be > 0");
        require(sigma_floor > 0, "sigma_floor must be > 0");
        require(opacity_count == 1 || opacity_count == 3, "opacity_count must be 1 or 3");
        require(render.tile_size >= 1, "tile_size must be >= 1");
        require(render.alpha_max > 0 && render.alpha_max <= 1, "alpha_max must be in (0, 1]");
        require(render.t_eps >= 0 && render.t_eps < 1, "t_eps must be in [0, 1)");
        require(render.radius_mult > 0, "radius_mult must be > 0");
        require(prune.opacity_threshold > 0 && prune.opacity_threshold < 1, "opacity_threshold must be in (0, 1)");
        require(prune.aabb_overlap_threshold > 0 && prune.aabb_overlap_threshold <= 1,
                "aabb_overlap_threshold must be in (0, 1]");
        require(width_min > 0, "width_min must be > 0");
        require(log_every >= 1, "log_every must be >= 1");
    }
};

/// Adam moments mirroring the curve set, plus a per-curve step count so that
/// bias correction restarts for respawned curves.
template <class T>
struct OptimState {
    GradientBuffer<T> m;
    GradientBuffer<T> v;
    std::vector<int> steps; // per curve, strokes first
    double lr_multiplier = 1;

    static OptimState for_curves(const CurveSet<T>& curves) {
        OptimState s;
        s.m = GradientBuffer<T>::zeros_like(curves);
        s.v = GradientBuffer<T>::zeros_like(curves);
        s.steps.assign(curves.size(), 0);
        return s;
    }

    void reset_curve(int curve) {
        const int ns = int(m.strokes.size());
        if (curve < ns) {
            m.strokes[curve] = zero_stroke();
            v.strokes[curve] = zero_stroke();
        } else {
            m.regions[curve - ns] = zero_region();
            v.regions[curve - ns] = zero_region();
        }
        steps[curve] = 0;
    }

private:
    static OpenStroke<T> zero_stroke() {
        OpenStroke<T> s;
        s.width = 0;
        s.opacity = {};
        return s;
    }
    static ClosedRegion<T> zero_region() {
        ClosedRegion<T> r;
        r.opacity = {};
        return r;
    }
};

class NonFiniteGradient : public std::runtime_error {
public:
    NonFiniteGradient(const ParamId& id, const std::string& what) : std::runtime_error(what), id_(id) {}
    const ParamId& param() const { return id_; }

private:
    ParamId id_;
};

/// One Adam update with per-class learning rates, followed by the parameter
/// clamps.
template <class T>
void step(CurveSet<T>& curves, const GradientBuffer<T>& grads, OptimState<T>& state, const TrainerConfig& cfg) {
    if (grads.strokes.size() != curves.strokes.size() || grads.regions.size() != curves.regions.size() ||
        state.steps.size() != curves.size())
        throw std::logic_error("step: gradient or optimizer state does not mirror the curve set");
    for_each_param(
        [&](const ParamId& id, const T& g) {
            if (!std::isfinite(g))
                throw NonFiniteGradient(id, "non-finite gradient at " + describe(id));
        },
        grads);

    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    for (auto& s : state.steps) ++s;
    const double canvas = std::max(curves.canvas_w, curves.canvas_h);
    double lr_for[4];
    lr_for[int(ParamClass::points)] = cfg.lr_points * canvas;
    lr_for[int(ParamClass::width)] = cfg.lr_width;
    lr_for[int(ParamClass::opacity)] = cfg.lr_opacity;
    lr_for[int(ParamClass::color)] = cfg.lr_color;

    for_each_param(
        [&](const ParamId& id, T& p, const T& g, T& m, T& v) {
            const int t = state.steps[id.curve];
            m = T(beta1 * double(m) + (1 - beta1) * double(g));
            v = T(beta2 * double(v) + (1 - beta2) * double(g) * double(g));
            const double mhat = double(m) / (1 - std::pow(beta1, t));
            const double vhat = double(v) / (1 - std::pow(beta2, t));
            const double lr = lr_for[int(id.cls)] * state.lr_multiplier;
            p = T(double(p) - lr * mhat / (std::sqrt(vhat) + eps));
        },
        curves, grads, state.m, state.v);

    const T w = T(curves.canvas_w), h = T(curves.canvas_h);
    auto clamp_point = [&](Vec2<T>& p) {
        p.x = std::clamp(p.x, T(-0.25) * w, T(1.25) * w);
        p.y = std::clamp(p.y, T(-0.25) * h, T(1.25) * h);
    };
    auto clamp_common = [&](Rgb<T>& color, std::array<T, 3>& opacity) {
        for (auto& c : color) c = std::clamp(c, T(0), T(1));
        for (auto& o : opacity) o = std::clamp(o, T(0), T(1));
        if (cfg.opacity_count == 1) opacity[1] = opacity[2] = opacity[0];
    };
    for (auto& s : curves.strokes) {
        for (auto& p : s.points) clamp_point(p);
        s.width = std::max(s.width, T(cfg.width_min));
        clamp_common(s.color, s.opacity);
    }
    for (auto& r : curves.regions) {
        for (auto& p : r.points) clamp_point(p);
        clamp_common(r.color, r.opacity);
    }
}

/// Random circles (the same geometry densification spawns) with centers
/// uniform over the canvas.
template <class T>
CurveSet<T> init_curves(const TrainerConfig& cfg, const Image<T>& target) {
    CurveSet<T> curves;
    curves.canvas_w = target.width();
    curves.canvas_h = target.height();
    curves.background = rgb_cast<T>(cfg.background);
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double W = target.width(), H = target.height();
    const auto spawn = cfg.spawn(target.width(), target.height());
    const double radius = cfg.init_radius > 0
                              ? cfg.init_radius
                              : std::clamp(std::sqrt(W * H / (std::numbers::pi * cfg.n_curves)), spawn.r_min, spawn.r_max);
    for (int i = 0; i < cfg.n_curves; ++i) {
        const Vec2<double> c{unit(rng) * W, unit(rng) * H};
        const double angle = 2 * std::numbers::pi * unit(rng);
        Rgb<T> color;
        if (cfg.init_color == InitColor::random) {
            for (auto& ch : color) ch = T(unit(rng));
        } else {
            const int px = std::clamp(int(c.x), 0, std::max(0, target.width() - 1));
            const int py = std::clamp(int(c.y), 0, std::max(0, target.height() - 1));
            for (int ch = 0; ch < 3; ++ch) color[ch] = target.at(px, py, ch);
        }
        if (cfg.mode == CurveMode::open)
            curves.strokes.push_back(circle_stroke<T>(c, radius, angle, cfg.init_width, cfg.init_opacity, color));
        else
            curves.regions.push_back(circle_region<T>(c, radius, angle, cfg.init_opacity, color));
    }
    return curves;
}

struct TraceRow {
    int iter = 0;
    double l2 = 0;
    double psnr = 0;
    std::size_t curve_count = 0;
    std::size_t pruned = 0; // since the previous row
    std::size_t added = 0;
};

inline const char* kTraceHeader = "iter,l2,psnr,curve_count,pruned,added";

inline std::string format_trace_row(const TraceRow& r) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.6f,%zu,%zu,%zu", r.iter, r.l2, r.psnr, r.curve_count, r.pruned,
                  r.added);
    return buf;
}

template <class T>
struct TrainResult {
    CurveSet<T> curves;
    std::vector<TraceRow> trace;
    RenderBuffer<T> final_render;
};

template <class T>
struct TrainCallbacks {
    std::function<void(const TraceRow&)> on_trace;
    // called before the update of iteration iter, with that iteration's render
    std::function<void(int iter, const CurveSet<T>&, const RenderBuffer<T>&)> on_iteration;
};

/// Optimizes curves toward target starting from init.
template <class T>
TrainResult<T> train_from(CurveSet<T> curves, const Image<T>& target, const TrainerConfig& cfg,
                          const TrainCallbacks<T>& callbacks = {}) {
    cfg.validate();
    const int iters = cfg.resolved_iters();
    const int adapt_until = cfg.resolved_adapt_until();
    const int lr_step = cfg.resolved_lr_step();
    const auto pipe = cfg.pipeline();
    const auto sampling = pipe.sampling.cast<T>();
    const auto spawn = cfg.spawn(curves.canvas_w, curves.canvas_h);
    auto state = OptimState<T>::for_curves(curves);

    TrainResult<T> result;
    std::size_t pruned = 0, added = 0;
    auto log = [&](int iter, double l2) {
        TraceRow row{iter, l2, metrics::psnr_from_mse(l2), curves.size(), pruned, added};
        pruned = added = 0;
        result.trace.push_back(row);
        if (callbacks.on_trace) callbacks.on_trace(row);
    };

    for (int it = 0; it < iters; ++it) {
        auto ev = evaluate(curves, target, pipe, true);
        if (it % cfg.log_every == 0) log(it, double(ev.report.l2));
        if (callbacks.on_iteration) callbacks.on_iteration(it, curves, ev.buffer);
        state.lr_multiplier = std::pow(cfg.lr_gamma, it / lr_step);
        step(curves, ev.grads, state, cfg);

        const int done = it + 1;
        if (cfg.adapt && done % cfg.adapt_every == 0 && done <= adapt_until) {
            PruneCriteria criteria = cfg.prune;
            if (cfg.dynamic_opacity_threshold && adapt_until > 0) {
                const double f = std::min(1.0, double(done) / adapt_until);
                criteria.opacity_threshold = 0.05 + (cfg.prune.opacity_threshold - 0.05) * f;
            }
            const auto rep = adapt(curves, ev.report.error_map, target, sampling, criteria, spawn,
                                   cfg.seed * 0x9E3779B97F4A7C15ull + std::uint64_t(done));
            for (int slot : rep.respawned) state.reset_curve(slot);
            pruned += rep.removed.size();
            added += rep.respawned.size();
        }
    }

    auto final_eval = evaluate(curves, target, pipe, false);
    log(iters, double(final_eval.report.l2));
    result.final_render = std::move(final_eval.buffer);
    result.curves = std::move(curves);
    return result;
}

template <class T>
TrainResult<T> train(const Image<T>& target, const TrainerConfig& cfg, const TrainCallbacks<T>& callbacks = {}) {
    cfg.validate();
    return train_from(init_curves(cfg, target), target, cfg, callbacks);
}

} // namespace bsplat
