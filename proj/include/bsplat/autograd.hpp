#pragma once

// Hand-written reverse pass: pixel gradients -> per-Gaussian gradients
// (backward_blend) -> curve parameter gradients (backward_sampling).

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "bsplat/rasterizer.hpp"

namespace bsplat {

template <class T>
struct GaussianGrad {
    Vec2<T> center{};
    T sigma_x = 0;
    T sigma_y = 0;
    T theta = 0;
    Rgb<T> color{};
    T opacity = 0;
};

/// Gradient accumulators shaped exactly like a CurveSet's curves.
template <class T>
struct GradientBuffer {
    std::vector<OpenStroke<T>> strokes;
    std::vector<ClosedRegion<T>> regions;

    template <class U>
    static GradientBuffer zeros_like(const CurveSet<U>& curves) {
        GradientBuffer g;
        g.strokes.resize(curves.strokes.size());
        g.regions.resize(curves.regions.size());
        g.set_zero();
        return g;
    }

    void set_zero() {
        for_each_param([](const ParamId&, T& v) { v = T(0); }, *this);
    }

    bool all_finite() const {
        bool ok = true;
        for_each_param([&](const ParamId&, const T& v) { ok = ok && std::isfinite(v); }, *this);
        return ok;
    }
};

namespace detail {

// d(loss) wrt mean x/y, inverse covariance a/b/c, opacity, color.
template <class T>
struct SplatGrad {
    T mx = 0, my = 0, a = 0, b = 0, c = 0, opacity = 0, r = 0, g = 0, bl = 0;

    void add(const SplatGrad& o) {
        mx += o.mx;
        my += o.my;
        a += o.a;
        b += o.b;
        c += o.c;
        opacity += o.opacity;
        r += o.r;
        g += o.g;
        bl += o.bl;
    }
};

} // namespace detail

/// Reverse-mode derivative of render(). dl_dpixels is H x W x 3. Replays the
/// forward's culling and per-pixel termination; Gaussians skipped there get
/// no gradient.
template <class T>
std::vector<GaussianGrad<T>> backward_blend(const SplatBatch<T>& batch, const RenderBuffer<T>& buf,
                                            const std::vector<T>& dl_dpixels) {
    if (buf.gaussian_count != batch.size() || buf.packed.size() != batch.size())
        throw std::logic_error("backward_blend: render buffer was not produced from this batch");
    const int width = buf.width, height = buf.height;
    if (dl_dpixels.size() != static_cast<std::size_t>(width) * height * 3)
        throw std::invalid_argument("backward_blend: pixel gradient has the wrong size");

    const T alpha_max = static_cast<T>(buf.settings.alpha_max);
    const auto& tiles = buf.tiles;
    const int ts = tiles.tile_size;

    std::vector<detail::SplatGrad<T>> entry_grad(tiles.entries.size());
    parallel_for(tiles.tile_count(), [&](std::size_t tile) {
        const auto rect = detail::tile_rect(tiles, tile, width, height);
        const std::uint32_t begin = tiles.offsets[tile], end = tiles.offsets[tile + 1];
        if (begin == end) return;
        std::vector<T> t_cur(static_cast<std::size_t>(ts) * ts);
        std::vector<T> rec(static_cast<std::size_t>(ts) * ts * 3);
        std::vector<T> dl_local(static_cast<std::size_t>(ts) * ts * 3);
        std::vector<std::int32_t> last(static_cast<std::size_t>(ts) * ts);
        for (int py = rect.y0; py <= rect.y1; ++py)
            for (int px = rect.x0; px <= rect.x1; ++px) {
                const std::size_t lp = static_cast<std::size_t>(py - rect.y0) * ts + (px - rect.x0);
                const std::size_t pix = static_cast<std::size_t>(py) * width + px;
                t_cur[lp] = buf.transmittance[pix];
                last[lp] = buf.last_entry[pix];
                for (int ch = 0; ch < 3; ++ch) {
                    rec[lp * 3 + ch] = buf.background[ch];
                    dl_local[lp * 3 + ch] = dl_dpixels[pix * 3 + ch];
                }
            }
        T* t_cur_p = t_cur.data();
        T* rec_p = rec.data();
        const T* dl_p = dl_local.data();
        const std::int32_t* last_p = last.data();
        for (std::uint32_t e = end; e-- > begin;) {
            const auto& p = buf.packed[tiles.entries[e]];
            const std::int32_t local = static_cast<std::int32_t>(e - begin);
            detail::SplatGrad<T> acc;
            detail::for_each_covered_pixel(p, rect, ts, [&](int lp, T dx, T dy, T power) {
                if (local > last_p[lp]) return;
                const T gval = detail::exp_neg(power);
                T alpha = p.opacity * gval;
                const bool clamped = alpha > alpha_max;
                if (clamped) alpha = alpha_max;
                const T t_before = t_cur_p[lp] / (T(1) - alpha);
                const T* dl = dl_p + 3 * lp;
                T* rc = rec_p + 3 * lp;
                const T w = alpha * t_before;
                acc.r += w * dl[0];
                acc.g += w * dl[1];
                acc.bl += w * dl[2];
                const T dalpha = t_before * ((p.r - rc[0]) * dl[0] + (p.g - rc[1]) * dl[1] + (p.bl - rc[2]) * dl[2]);
                rc[0] = alpha * p.r + (T(1) - alpha) * rc[0];
                rc[1] = alpha * p.g + (T(1) - alpha) * rc[1];
                rc[2] = alpha * p.bl + (T(1) - alpha) * rc[2];
                t_cur_p[lp] = t_before;
                if (clamped) return;
                acc.opacity += dalpha * gval;
                const T dpower = -alpha * dalpha;
                acc.a += dpower * T(0.5) * dx * dx;
                acc.b += dpower * dx * dy;
                acc.c += dpower * T(0.5) * dy * dy;
                acc.mx -= dpower * (p.a * dx + p.b * dy);
                acc.my -= dpower * (p.b * dx + p.c * dy);
            });
            entry_grad[e] = acc;
        }
    });

    // Fixed tile-major reduction order keeps the result independent of
    // thread scheduling.
    std::vector<detail::SplatGrad<T>> per_splat(batch.size());
    for (std::size_t e = 0; e < tiles.entries.size(); ++e) per_splat[tiles.entries[e]].add(entry_grad[e]);

    std::vector<GaussianGrad<T>> out(batch.size());
    parallel_for(batch.size(), [&](std::size_t i) {
        const auto& g = batch.gaussians[i];
        const auto& s = per_splat[i];
        const T c = std::cos(g.theta), sn = std::sin(g.theta);
        const T ia = T(1) / (g.sigma_x * g.sigma_x), ib = T(1) / (g.sigma_y * g.sigma_y);
        const T d_ia = s.a * c * c + s.b * c * sn + s.c * sn * sn;
        const T d_ib = s.a * sn * sn - s.b * c * sn + s.c * c * c;
        GaussianGrad<T>& o = out[i];
        o.center = {s.mx, s.my};
        o.sigma_x = d_ia * T(-2) * ia / g.sigma_x;
        o.sigma_y = d_ib * T(-2) * ib / g.sigma_y;
        o.theta = s.a * T(2) * c * sn * (ib - ia) + s.b * (c * c - sn * sn) * (ia - ib) + s.c * T(2) * c * sn * (ia - ib);
        o.color = {s.r, s.g, s.bl};
        o.opacity = s.opacity;
    });
    return out;
}

namespace detail {

template <class T>
void distance_adjoint(const Vec2<T>& from, const Vec2<T>& to, T rho, T sigma_floor, T d_sigma, Vec2<T>& d_from,
                      Vec2<T>& d_to) {
    const Vec2<T> d = to - from;
    const T len = d.norm();
    if (!(len / rho > sigma_floor)) return; // floor active
    const Vec2<T> u = d * (d_sigma / (rho * len));
    d_to += u;
    d_from -= u;
}

template <class T>
void rotation_adjoint(const Vec2<T>* pts, Vec2<T>* d_pts, int k, int n, T d_theta) {
    const auto [lo, hi] = rotation_neighbors(k, n);
    const Vec2<T> d = pts[hi] - pts[lo];
    const T r2 = d.x * d.x + d.y * d.y;
    if (r2 == T(0)) return;
    const Vec2<T> g{-d.y / r2 * d_theta, d.x / r2 * d_theta};
    d_pts[hi] += g;
    d_pts[lo] -= g;
}

template <class T>
void backward_stroke(const OpenStroke<T>& stroke, const GaussianGrad<T>* grads, const Gaussian2D<T>* gs,
                     std::size_t count, const SamplingParams<T>& params, const BernsteinTable<T>& table,
                     OpenStroke<T>& out) {
    const auto grid = sample_stroke_points(stroke, table);
    const int K = grid.cols;
    const int n = 3 * K;
    std::vector<Vec2<T>> dx(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < count; ++i) {
        const auto& gr = grads[i];
        const int s = gs[i].parent.row, k = gs[i].parent.col;
        const int q = s * K + k;
        dx[q] += gr.center;
        const int k0 = std::min(k, K - 2);
        distance_adjoint(grid(s, k0), grid(s, k0 + 1), params.rho, params.sigma_floor, gr.sigma_x, dx[s * K + k0],
                         dx[s * K + k0 + 1]);
        if (stroke.width > params.sigma_floor) out.width += gr.sigma_y;
        rotation_adjoint(grid.pts.data(), dx.data(), q, n, gr.theta);
        out.opacity[params.opacity_count == 1 ? 0 : s] += gr.opacity;
        for (int ch = 0; ch < 3; ++ch) out.color[ch] += gr.color[ch];
    }
    for (int s = 0; s < 3; ++s)
        for (int k = 0; k < K; ++k) {
            const auto& w = table[k];
            const Vec2<T>& d = dx[s * K + k];
            for (int j = 0; j < 4; ++j) out.points[3 * s + j] += d * w[j];
        }
}

template <class T>
void backward_region(const ClosedRegion<T>& region, const GaussianGrad<T>* grads, const Gaussian2D<T>* gs,
                     std::size_t count, const SamplingParams<T>& params, const BernsteinTable<T>& table,
                     ClosedRegion<T>& out) {
    const auto grid = sample_region_points(region, params.interior, table);
    const int rows = grid.rows, K = grid.cols;
    std::vector<Vec2<T>> dx(static_cast<std::size_t>(rows) * K);
    for (std::size_t i = 0; i < count; ++i) {
        const auto& gr = grads[i];
        const int r = gs[i].parent.row, k = gs[i].parent.col;
        const std::size_t q = static_cast<std::size_t>(r) * K + k;
        dx[q] += gr.center;
        const int k0 = std::min(k, K - 2);
        distance_adjoint(grid(r, k0), grid(r, k0 + 1), params.rho, params.sigma_floor, gr.sigma_x,
                         dx[static_cast<std::size_t>(r) * K + k0], dx[static_cast<std::size_t>(r) * K + k0 + 1]);
        const int r0 = std::min(r, rows - 2);
        distance_adjoint(grid(r0, k), grid(r0 + 1, k), params.rho, params.sigma_floor, gr.sigma_y,
                         dx[static_cast<std::size_t>(r0) * K + k], dx[static_cast<std::size_t>(r0 + 1) * K + k]);
        rotation_adjoint(&grid(r, 0), &dx[static_cast<std::size_t>(r) * K], k, K, gr.theta);
        if (params.opacity_count == 1) {
            out.opacity[0] += gr.opacity;
        } else {
            const auto w = region_opacity_weights(region_row_position<T>(r, params.interior));
            for (int o = 0; o < 3; ++o) out.opacity[o] += w[o] * gr.opacity;
        }
        for (int ch = 0; ch < 3; ++ch) out.color[ch] += gr.color[ch];
    }
    const auto weights = region_row_weights<T>(params.interior);
    for (int r = 0; r < rows; ++r) {
        std::array<Vec2<T>, 4> dseg{};
        for (int k = 0; k < K; ++k) {
            const auto& w = table[k];
            const Vec2<T>& d = dx[static_cast<std::size_t>(r) * K + k];
            for (int j = 0; j < 4; ++j) dseg[j] += d * w[j];
        }
        const T wb = weights[r];
        for (int j = 0; j < 4; ++j) {
            out.points[kBoundaryAIndex[j]] += dseg[j] * (T(1) - wb);
            out.points[kBoundaryBIndex[j]] += dseg[j] * wb;
        }
    }
}

} // namespace detail

/// Chains per-Gaussian gradients back through sampling to curve parameters.
/// Accumulates into grads (which must be shaped like curves).
template <class T>
void backward_sampling(const SplatBatch<T>& batch, const std::vector<GaussianGrad<T>>& gauss_grads,
                       const CurveSet<T>& curves, const SamplingParams<T>& params, GradientBuffer<T>& grads) {
    if (gauss_grads.size() != batch.size()) throw std::logic_error("backward_sampling: gradient/batch size mismatch");
    if (grads.strokes.size() != curves.strokes.size() || grads.regions.size() != curves.regions.size())
        throw std::logic_error("backward_sampling: gradient buffer does not mirror the curve set");
    const BernsteinTable<T> table(params.samples);
    const std::size_t ns = curves.strokes.size();
    parallel_for(batch.curve_order.size(), [&](std::size_t i) {
        const int c = batch.curve_order[i];
        const std::size_t off = batch.offsets[i], count = batch.offsets[i + 1] - off;
        if (static_cast<std::size_t>(c) < ns)
            detail::backward_stroke(curves.strokes[c], gauss_grads.data() + off, batch.gaussians.data() + off, count,
                                    params, table, grads.strokes[c]);
        else
            detail::backward_region(curves.regions[c - ns], gauss_grads.data() + off, batch.gaussians.data() + off,
                                    count, params, table, grads.regions[c - ns]);
    });
}

template <class T>
GradientBuffer<T> backward_sampling(const SplatBatch<T>& batch, const std::vector<GaussianGrad<T>>& gauss_grads,
                                    const CurveSet<T>& curves, const SamplingParams<T>& params) {
    auto grads = GradientBuffer<T>::zeros_like(curves);
    backward_sampling(batch, gauss_grads, curves, params, grads);
    return grads;
}

} // namespace bsplat
