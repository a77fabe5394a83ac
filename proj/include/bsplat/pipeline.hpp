#pragma once

// One full evaluation of the objective: sample -> render -> loss -> backward.
// Shared by the trainer and the finite-difference checker.

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bsplat/losses.hpp"

namespace bsplat {

struct PipelineConfig {
    SamplingParams<double> sampling{};
    RenderSettings render{};
    LossConfig loss{};
};

template <class T>
struct Evaluation {
    SplatBatch<T> batch;
    RenderBuffer<T> buffer;
    LossReport<T> report;
    GradientBuffer<T> grads; // empty unless requested
};

/// Renders curves, scores them against target and optionally backpropagates
/// lambda1 * l2 + lambda2 * xing into a fresh GradientBuffer.
template <class T>
Evaluation<T> evaluate(const CurveSet<T>& curves, const Image<T>& target, const PipelineConfig& cfg,
                       bool with_grad = true) {
    if (target.width() != curves.canvas_w || target.height() != curves.canvas_h)
        throw std::invalid_argument("evaluate: target size does not match the canvas");
    const auto sampling = cfg.sampling.cast<T>();
    Evaluation<T> ev;
    ev.batch = build_batch(curves, sampling);
    ev.buffer = render(ev.batch, curves.canvas_w, curves.canvas_h, curves.background, cfg.render);
    auto l2 = l2_loss(ev.buffer.color, target);
    const T lambda1 = static_cast<T>(cfg.loss.lambda1), lambda2 = static_cast<T>(cfg.loss.lambda2);
    ev.report.l2 = l2.value;
    ev.report.error_map = std::move(l2.error_map);
    if (with_grad) {
        for (auto& g : l2.grad) g *= lambda1;
        const auto gauss = backward_blend(ev.batch, ev.buffer, l2.grad);
        ev.grads = backward_sampling(ev.batch, gauss, curves, sampling);
        ev.report.xing = xing_loss(curves, cfg.loss, &ev.grads, lambda2);
    } else {
        ev.report.xing = xing_loss(curves, cfg.loss);
    }
    ev.report.total = lambda1 * ev.report.l2 + lambda2 * ev.report.xing;
    return ev;
}

/// Counts of active non-smooth clamps. A finite difference whose stencil
/// changes this signature straddles a kink and is not comparable.
struct ClampSignature {
    std::size_t sigma_floor = 0;
    std::size_t alpha_max = 0;
    std::size_t width_floor = 0;

    bool operator==(const ClampSignature&) const = default;
};

template <class T>
ClampSignature clamp_signature(const CurveSet<T>& curves, const Evaluation<T>& ev, const PipelineConfig& cfg) {
    ClampSignature s;
    const T floor = static_cast<T>(cfg.sampling.sigma_floor);
    for (const auto& g : ev.batch.gaussians) s.sigma_floor += (g.sigma_x <= floor) + (g.sigma_y <= floor);
    for (const auto& st : curves.strokes) s.width_floor += st.width <= floor;
    s.alpha_max = ev.buffer.alpha_clamped;
    return s;
}

struct ClassErrorStats {
    ParamClass cls = ParamClass::points;
    std::size_t compared = 0;
    double max_rel = 0;
    double mean_rel = 0;
};

struct GradientSample {
    ParamId id;
    double analytic = 0;
    double numeric = 0;
    double error = 0; // relative, or absolute when both are near zero
    bool absolute = false;
    bool passed = true;
};

struct GradCheckReport {
    double h = 0;
    double tolerance = 0;
    std::vector<ClassErrorStats> classes; // one entry per class with at least one parameter
    std::vector<GradientSample> samples;
    std::vector<ParamId> excluded; // stencil crossed a clamp
    std::size_t failures = 0;
    GradientSample worst{};

    bool passed() const { return failures == 0; }
    std::string summary() const;
};

inline std::string describe(const ParamId& id) {
    std::ostringstream os;
    os << (id.closed ? "region" : "stroke") << " curve " << id.curve << ' ' << to_string(id.cls) << '[' << id.index
       << ']';
    if (id.cls == ParamClass::points) os << (id.component ? ".y" : ".x");
    return os.str();
}

inline std::string GradCheckReport::summary() const {
    std::ostringstream os;
    os << "gradient check h=" << h << " tol=" << tolerance << ": " << samples.size() << " compared, "
       << excluded.size() << " excluded at clamps, " << failures << " failed\n";
    for (const auto& c : classes)
        os << "  " << to_string(c.cls) << ": n=" << c.compared << " max=" << c.max_rel << " mean=" << c.mean_rel
           << '\n';
    if (!samples.empty())
        os << "  worst: " << describe(worst.id) << " analytic=" << worst.analytic << " numeric=" << worst.numeric
           << " err=" << worst.error << (worst.absolute ? " (abs)" : "") << '\n';
    return os.str();
}

struct GradCheckOptions {
    double h = 1e-3;
    double tolerance = 1e-4;      // relative
    double abs_tolerance = 1e-7;  // used when both gradients are tiny
    double near_zero = 1e-4;
};

/// Compares the analytic gradient of the total loss with central differences
/// for every scalar parameter. Parameters whose stencil changes the clamp
/// signature are excluded and listed.
inline GradCheckReport check_gradients(const CurveSet<double>& curves, const Image<double>& target,
                                       const PipelineConfig& cfg, const GradCheckOptions& opt = {}) {
    if (!(opt.h > 0)) throw std::invalid_argument("check_gradients: step h must be positive");
    GradCheckReport report;
    report.h = opt.h;
    report.tolerance = opt.tolerance;

    const auto base = evaluate(curves, target, cfg, true);
    const auto base_sig = clamp_signature(curves, base, cfg);
    auto grads = base.grads;
    CurveSet<double> probe = curves;

    const auto loss_at = [&](ClampSignature& sig) {
        const auto ev = evaluate(probe, target, cfg, false);
        sig = clamp_signature(probe, ev, cfg);
        return static_cast<double>(ev.report.total);
    };

    std::array<ClassErrorStats, 4> stats{};
    for (int c = 0; c < 4; ++c) stats[c].cls = static_cast<ParamClass>(c);

    for_each_param(
        [&](const ParamId& id, double& value, const double& analytic) {
            const double saved = value;
            ClampSignature sp, sm;
            value = saved + opt.h;
            const double fp = loss_at(sp);
            value = saved - opt.h;
            const double fm = loss_at(sm);
            value = saved;
            if (!(sp == base_sig) || !(sm == base_sig)) {
                report.excluded.push_back(id);
                return;
            }
            GradientSample s;
            s.id = id;
            s.analytic = analytic;
            s.numeric = (fp - fm) / (2 * opt.h);
            const double scale = std::max(std::abs(s.analytic), std::abs(s.numeric));
            const double diff = std::abs(s.analytic - s.numeric);
            if (scale < opt.near_zero) {
                s.absolute = true;
                s.error = diff;
                s.passed = diff < opt.abs_tolerance;
            } else {
                s.error = diff / scale;
                s.passed = s.error < opt.tolerance;
            }
            auto& st = stats[static_cast<int>(id.cls)];
            ++st.compared;
            st.mean_rel += s.absolute ? 0.0 : s.error;
            st.max_rel = std::max(st.max_rel, s.absolute ? 0.0 : s.error);
            if (!s.passed) ++report.failures;
            const bool worse = report.samples.empty() || (!s.passed && report.worst.passed) ||
                               (s.passed == report.worst.passed && s.error / (s.absolute ? opt.abs_tolerance : opt.tolerance) >
                                                                       report.worst.error / (report.worst.absolute ? opt.abs_tolerance : opt.tolerance));
            if (worse) report.worst = s;
            report.samples.push_back(s);
        },
        probe, grads);

    for (auto& st : stats) {
        if (st.compared == 0) continue;
        st.mean_rel /= static_cast<double>(st.compared);
        report.classes.push_back(st);
    }
    return report;
}

} // namespace bsplat
