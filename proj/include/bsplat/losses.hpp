#pragma once

// Training objective: lambda1 * MSE + lambda2 * Xing convexity penalty, plus
// the per-pixel error map used for densification.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "bsplat/autograd.hpp"

namespace bsplat {

struct LossConfig {
    double lambda1 = 1.0;
    double lambda2 = 0.01;
    bool xing_smooth = true;  // sigmoid-smoothed sign term; false = hard indicator
    double xing_slope = 50.0;
};

template <class T>
struct LossReport {
    T l2 = 0;
    T xing = 0;
    T total = 0;
    ScalarGrid<T> error_map; // H x W, squared error summed over channels
};

template <class T>
struct L2Result {
    T value = 0;
    std::vector<T> grad; // H x W x 3
    ScalarGrid<T> error_map;
};

/// Mean squared error over all pixels and channels.
template <class T>
L2Result<T> l2_loss(const std::vector<T>& rendered, const Image<T>& target) {
    if (rendered.size() != target.size()) throw std::invalid_argument("l2_loss: image dimensions differ");
    const std::size_t n = rendered.size();
    L2Result<T> out;
    out.grad.resize(n);
    out.error_map = ScalarGrid<T>(target.height(), target.width());
    const T scale = n > 0 ? T(1) / T(n) : T(0);
    double sum = 0;
    for (std::size_t p = 0; p < target.pixel_count(); ++p) {
        T pixel_err = 0;
        for (int ch = 0; ch < 3; ++ch) {
            const std::size_t i = p * 3 + ch;
            const T d = rendered[i] - target.data()[i];
            pixel_err += d * d;
            out.grad[i] = T(2) * d * scale;
        }
        out.error_map.v[p] = pixel_err;
        sum += static_cast<double>(pixel_err);
    }
    out.value = static_cast<T>(sum * static_cast<double>(scale));
    return out;
}

template <class T>
L2Result<T> l2_loss(const Image<T>& rendered, const Image<T>& target) {
    if (!rendered.same_shape(target)) throw std::invalid_argument("l2_loss: image dimensions differ");
    return l2_loss(rendered.data(), target);
}

namespace detail {

// sin of the turn from u to v, with its gradient wrt u and v.
template <class T>
T normalized_cross(const Vec2<T>& u, const Vec2<T>& v, Vec2<T>& du, Vec2<T>& dv) {
    const T nu = u.norm(), nv = v.norm();
    if (!(nu * nv > T(1e-12))) {
        du = {};
        dv = {};
        return T(0);
    }
    const T inv = T(1) / (nu * nv);
    const T s = cross(u, v) * inv;
    du = Vec2<T>{v.y, -v.x} * inv - u * (s / (nu * nu));
    dv = Vec2<T>{-u.y, u.x} * inv - v * (s / (nv * nv));
    return s;
}

} // namespace detail

/// Xing loss of one cubic control polygon A, B, C, D. Penalizes a turn
/// direction at C that disagrees with the turn at B. Adds d(loss)/d(points)
/// times scale to grad.
template <class T>
T xing_segment(const std::array<Vec2<T>, 4>& p, const LossConfig& cfg, std::array<Vec2<T>, 4>* grad = nullptr,
               T scale = T(1)) {
    const Vec2<T> l1 = p[1] - p[0], l2 = p[2] - p[1], l3 = p[3] - p[2];
    Vec2<T> ds1_l1, ds1_l2, ds2_l2, ds2_l3;
    const T s1 = detail::normalized_cross(l1, l2, ds1_l1, ds1_l2);
    const T s2 = detail::normalized_cross(l2, l3, ds2_l2, ds2_l3);
    T d1, dd1_ds1;
    if (cfg.xing_smooth) {
        const T k = static_cast<T>(cfg.xing_slope);
        d1 = T(1) / (T(1) + std::exp(-k * s1));
        dd1_ds1 = k * d1 * (T(1) - d1);
    } else {
        d1 = cross(l1, l2) > T(0) ? T(1) : T(0);
        dd1_ds1 = 0;
    }
    const T loss = d1 * std::max(-s2, T(0)) + (T(1) - d1) * std::max(s2, T(0));
    if (grad) {
        // relu(-x) - relu(x) = -x
        const T g_d1 = -s2 * scale;
        const T g_s2 = (s2 < T(0) ? -d1 : (s2 > T(0) ? T(1) - d1 : T(0))) * scale;
        const T g_s1 = g_d1 * dd1_ds1;
        const Vec2<T> g_l1 = ds1_l1 * g_s1;
        const Vec2<T> g_l2 = ds1_l2 * g_s1 + ds2_l2 * g_s2;
        const Vec2<T> g_l3 = ds2_l3 * g_s2;
        auto& g = *grad;
        g[0] -= g_l1;
        g[1] += g_l1 - g_l2;
        g[2] += g_l2 - g_l3;
        g[3] += g_l3;
    }
    return loss;
}

/// Sum of the Xing loss over both boundaries of every closed region. Open
/// strokes do not participate. When grad is given, adds scale * gradient.
template <class T>
T xing_loss(const CurveSet<T>& curves, const LossConfig& cfg, GradientBuffer<T>* grad = nullptr, T scale = T(1)) {
    T total = 0;
    for (std::size_t i = 0; i < curves.regions.size(); ++i) {
        const auto& r = curves.regions[i];
        for (const auto& index : {kBoundaryAIndex, kBoundaryBIndex}) {
            std::array<Vec2<T>, 4> pts, g{};
            for (int j = 0; j < 4; ++j) pts[j] = r.points[index[j]];
            total += xing_segment(pts, cfg, grad ? &g : nullptr, scale);
            if (grad)
                for (int j = 0; j < 4; ++j) grad->regions[i].points[index[j]] += g[j];
        }
    }
    return total;
}

} // namespace bsplat
