#pragma once

// Tile-based front-to-back alpha blending of 2D Gaussians, plus a brute-force
// reference renderer with no culling and no early termination.
//
// Within a tile the Gaussians are visited in depth order and each one touches
// only the pixels inside its cull ellipse. Every pixel therefore still sees
// its Gaussians strictly front to back, which is all the blend needs.

#include <bit>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "bsplat/parallel.hpp"
#include "bsplat/splat_sampler.hpp"

namespace bsplat {

struct RenderSettings {
    int tile_size = 16;
    double radius_mult = 3.0;     // cull beyond this many standard deviations
    double t_eps = 1.0 / 255.0;   // stop once transmittance drops below
    double alpha_max = 0.99;
};

/// Symmetric 2x2 matrix [[xx, xy], [xy, yy]].
template <class T>
struct Sym2 {
    T xx{};
    T xy{};
    T yy{};
};

/// Sigma = (R S)(R S)^T.
template <class T>
Sym2<T> covariance(T sigma_x, T sigma_y, T theta) {
    const T c = std::cos(theta), s = std::sin(theta);
    const T a = sigma_x * sigma_x, b = sigma_y * sigma_y;
    return {c * c * a + s * s * b, c * s * (a - b), s * s * a + c * c * b};
}

/// Sigma^-1 = R S^-2 R^T in closed form.
template <class T>
Sym2<T> inverse_covariance(T sigma_x, T sigma_y, T theta) {
    const T c = std::cos(theta), s = std::sin(theta);
    const T a = T(1) / (sigma_x * sigma_x), b = T(1) / (sigma_y * sigma_y);
    return {c * c * a + s * s * b, c * s * (a - b), s * s * a + c * c * b};
}

/// o exp(-d^T Sigma^-1 d / 2), clamped to alpha_max.
template <class T>
T gaussian_alpha(const Gaussian2D<T>& g, Vec2<T> pixel, T alpha_max = T(0.99)) {
    const auto inv = inverse_covariance(g.sigma_x, g.sigma_y, g.theta);
    const Vec2<T> d = pixel - g.center;
    const T power = T(0.5) * (inv.xx * d.x * d.x + T(2) * inv.xy * d.x * d.y + inv.yy * d.y * d.y);
    return std::min(g.opacity * std::exp(-power), alpha_max);
}

/// Rasterizer-side view of one Gaussian.
template <class T>
struct PackedSplat {
    T mx, my;
    T a, b, c; // inverse covariance
    T opacity;
    T r, g, bl;
    T ext_y;   // half-height of the cull ellipse in px
    T shift, q0, q1; // row span: center mx - shift*dy, half-width^2 q0 - q1*dy^2
    int x0, x1, y0, y1; // inclusive pixel bounds, clipped to canvas; x0 > x1 if empty
};

struct TileIndex {
    int tile_size = 16;
    int tiles_x = 0;
    int tiles_y = 0;
    std::vector<std::uint32_t> offsets; // tiles_x * tiles_y + 1
    std::vector<std::uint32_t> entries; // gaussian indices, depth order within each tile

    std::size_t tile_count() const { return static_cast<std::size_t>(tiles_x) * tiles_y; }
};

template <class T>
struct RenderBuffer {
    int width = 0;
    int height = 0;
    Rgb<T> background{};
    RenderSettings settings{};
    std::vector<T> color;          // H x W x 3
    std::vector<T> transmittance;  // H x W
    std::vector<int> contrib_count; // Gaussians blended per pixel
    // replay state for the backward pass
    std::vector<std::int32_t> last_entry; // local tile entry where blending stopped, or INT32_MAX
    std::vector<PackedSplat<T>> packed;
    TileIndex tiles;
    std::size_t gaussian_count = 0;
    std::size_t alpha_clamped = 0; // (pixel, Gaussian) pairs with alpha at alpha_max

    Image<T> image() const {
        Image<T> out(width, height);
        out.data() = color;
        return out;
    }
};

inline constexpr std::int32_t kNotTerminated = std::numeric_limits<std::int32_t>::max();

namespace detail {

template <class T>
inline int floor_int(T v) {
    const int i = static_cast<int>(v);
    return i - (static_cast<T>(i) > v);
}

template <class T>
inline int ceil_int(T v) {
    const int i = static_cast<int>(v);
    return i + (static_cast<T>(i) < v);
}

/// exp(-x) for x >= 0. The float version is an inlined range reduction plus a
/// degree-6 polynomial (about 1 ulp); libm's expf is several times slower in
/// the blend loops.
template <class T>
inline T exp_neg(T x) {
    return std::exp(-x);
}

template <>
inline float exp_neg<float>(float x) {
    const float v = std::max(-x, -87.0f);
    constexpr float log2e = 1.44269504088896341f, ln2_hi = 0.693359375f, ln2_lo = -2.12194440e-4f;
    constexpr float shifter = 12582912.0f; // 1.5 * 2^23: adding it rounds to an integer
    const float t = v * log2e + shifter;
    const int k = std::bit_cast<int>(t) - std::bit_cast<int>(shifter);
    const float kf = t - shifter;
    const float r = (v - kf * ln2_hi) - kf * ln2_lo;
    float p = 1.0f / 720.0f;
    p = p * r + 1.0f / 120.0f;
    p = p * r + 1.0f / 24.0f;
    p = p * r + 1.0f / 6.0f;
    p = p * r + 0.5f;
    p = p * r + 1.0f;
    p = p * r + 1.0f;
    return p * std::bit_cast<float>((k + 127) << 23);
}

template <class T>
PackedSplat<T> pack_splat(const Gaussian2D<T>& g, int width, int height, T radius) {
    PackedSplat<T> p{};
    p.mx = g.center.x;
    p.my = g.center.y;
    const auto inv = inverse_covariance(g.sigma_x, g.sigma_y, g.theta);
    p.a = inv.xx;
    p.b = inv.xy;
    p.c = inv.yy;
    p.opacity = g.opacity;
    p.r = g.color[0];
    p.g = g.color[1];
    p.bl = g.color[2];
    p.shift = p.b / p.a;
    p.q0 = radius * radius / p.a;
    p.q1 = (p.a * p.c - p.b * p.b) / (p.a * p.a);
    const auto cov = covariance(g.sigma_x, g.sigma_y, g.theta);
    const T ext_x = radius * std::sqrt(std::max(cov.xx, T(0)));
    p.ext_y = radius * std::sqrt(std::max(cov.yy, T(0)));
    // pixel centers at i + 0.5; one pixel of slack, the power test is exact
    auto lo = [](T v) { return floor_int(v - T(0.5)); };
    auto hi = [](T v) { return ceil_int(v - T(0.5)); };
    const T fx0 = p.mx - ext_x, fx1 = p.mx + ext_x;
    const T fy0 = p.my - p.ext_y, fy1 = p.my + p.ext_y;
    if (!(std::isfinite(fx0) && std::isfinite(fx1) && std::isfinite(fy0) && std::isfinite(fy1)) ||
        fx1 < T(-1) || fy1 < T(-1) || fx0 > T(width + 1) || fy0 > T(height + 1)) {
        p.x0 = 0;
        p.x1 = -1;
        p.y0 = 0;
        p.y1 = -1;
        return p;
    }
    p.x0 = std::max(lo(fx0), 0);
    p.x1 = std::min(hi(fx1), width - 1);
    p.y0 = std::max(lo(fy0), 0);
    p.y1 = std::min(hi(fy1), height - 1);
    return p;
}

/// Pixels [xb, xe] of row offset dy whose centers lie inside the cull ellipse
/// of p. This is the inclusion test for both passes.
template <class T>
inline void row_span(const PackedSplat<T>& p, T dy, int& xb, int& xe) {
    const T hw_sq = p.q0 - p.q1 * dy * dy;
    if (!(hw_sq >= T(0))) {
        xb = 1;
        xe = 0;
        return;
    }
    const T hw = std::sqrt(hw_sq);
    const T mid = p.mx - p.shift * dy - T(0.5);
    xb = ceil_int(mid - hw);
    xe = floor_int(mid + hw);
}

template <class T>
inline T splat_power(const PackedSplat<T>& p, T dx, T dy) {
    return T(0.5) * (p.a * dx * dx + p.c * dy * dy) + p.b * dx * dy;
}

template <class T>
TileIndex bin_splats(const std::vector<PackedSplat<T>>& packed, int width, int height, int tile_size) {
    TileIndex idx;
    idx.tile_size = tile_size;
    idx.tiles_x = (width + tile_size - 1) / tile_size;
    idx.tiles_y = (height + tile_size - 1) / tile_size;
    const std::size_t n_tiles = idx.tile_count();
    idx.offsets.assign(n_tiles + 1, 0);
    for (const auto& p : packed) {
        if (p.x0 > p.x1 || p.y0 > p.y1) continue;
        for (int ty = p.y0 / tile_size; ty <= p.y1 / tile_size; ++ty)
            for (int tx = p.x0 / tile_size; tx <= p.x1 / tile_size; ++tx)
                ++idx.offsets[static_cast<std::size_t>(ty) * idx.tiles_x + tx + 1];
    }
    for (std::size_t t = 0; t < n_tiles; ++t) idx.offsets[t + 1] += idx.offsets[t];
    idx.entries.resize(idx.offsets.back());
    std::vector<std::uint32_t> cursor(idx.offsets.begin(), idx.offsets.end() - 1);
    for (std::uint32_t i = 0; i < packed.size(); ++i) {
        const auto& p = packed[i];
        if (p.x0 > p.x1 || p.y0 > p.y1) continue;
        for (int ty = p.y0 / tile_size; ty <= p.y1 / tile_size; ++ty)
            for (int tx = p.x0 / tile_size; tx <= p.x1 / tile_size; ++tx)
                idx.entries[cursor[static_cast<std::size_t>(ty) * idx.tiles_x + tx]++] = i;
    }
    return idx;
}

struct TileRect {
    int x0, y0, x1, y1; // inclusive
};

inline TileRect tile_rect(const TileIndex& idx, std::size_t tile, int width, int height) {
    const int tx = static_cast<int>(tile % idx.tiles_x);
    const int ty = static_cast<int>(tile / idx.tiles_x);
    const int x0 = tx * idx.tile_size, y0 = ty * idx.tile_size;
    return {x0, y0, std::min(x0 + idx.tile_size, width) - 1, std::min(y0 + idx.tile_size, height) - 1};
}

/// Calls fn(local, dx, dy, power) for every pixel of the tile inside the cull
/// ellipse of p, where local = (py - rect.y0) * stride + (px - rect.x0).
/// Shared by forward and backward so both make identical inclusion decisions.
template <class T, class Fn>
inline void for_each_covered_pixel(const PackedSplat<T>& p, const TileRect& rect, int stride, Fn&& fn) {
    const int y0 = std::max(p.y0, rect.y0), y1 = std::min(p.y1, rect.y1);
    const int cx0 = std::max(p.x0, rect.x0), cx1 = std::min(p.x1, rect.x1);
    for (int py = y0; py <= y1; ++py) {
        const T dy = T(py) + T(0.5) - p.my;
        int xb, xe;
        row_span(p, dy, xb, xe);
        xb = std::max(xb, cx0);
        xe = std::min(xe, cx1);
        const int row = (py - rect.y0) * stride - rect.x0;
        for (int px = xb; px <= xe; ++px) {
            const T dx = T(px) + T(0.5) - p.mx;
            fn(row + px, dx, dy, splat_power(p, dx, dy));
        }
    }
}

} // namespace detail

template <class T>
RenderBuffer<T> render(const SplatBatch<T>& batch, int width, int height, const Rgb<T>& background,
                       const RenderSettings& settings = {}) {
    if (width < 0 || height < 0) throw std::invalid_argument("canvas dimensions must be non-negative");
    if (settings.tile_size < 1) throw std::invalid_argument("tile size must be positive");
    RenderBuffer<T> buf;
    buf.width = width;
    buf.height = height;
    buf.background = background;
    buf.settings = settings;
    buf.gaussian_count = batch.size();
    const std::size_t n_pix = static_cast<std::size_t>(width) * height;
    buf.color.assign(n_pix * 3, T(0));
    buf.transmittance.assign(n_pix, T(1));
    buf.contrib_count.assign(n_pix, 0);
    buf.last_entry.assign(n_pix, kNotTerminated);

    const T radius = static_cast<T>(settings.radius_mult);
    const T t_eps = static_cast<T>(settings.t_eps);
    const T alpha_max = static_cast<T>(settings.alpha_max);

    buf.packed.resize(batch.size());
    parallel_for(batch.size(), [&](std::size_t i) {
        buf.packed[i] = detail::pack_splat(batch.gaussians[i], width, height, radius);
    });
    buf.tiles = detail::bin_splats(buf.packed, width, height, settings.tile_size);

    const std::size_t n_tiles = buf.tiles.tile_count();
    std::vector<std::size_t> clamped(n_tiles, 0);
    const int ts = settings.tile_size;
    parallel_for(n_tiles, [&](std::size_t tile) {
        const auto rect = detail::tile_rect(buf.tiles, tile, width, height);
        const std::uint32_t begin = buf.tiles.offsets[tile], end = buf.tiles.offsets[tile + 1];
        std::size_t n_clamped = 0;
        // tile-local state, written back once at the end
        const std::size_t n_local = static_cast<std::size_t>(ts) * ts;
        std::vector<T> tr(n_local, T(1)), col(n_local * 3, T(0));
        std::vector<std::int32_t> last(n_local, kNotTerminated), count(n_local, 0);
        T* tr_p = tr.data();
        T* col_p = col.data();
        std::int32_t* last_p = last.data();
        std::int32_t* count_p = count.data();
        for (std::uint32_t e = begin; e < end; ++e) {
            const auto& p = buf.packed[buf.tiles.entries[e]];
            const std::int32_t local = static_cast<std::int32_t>(e - begin);
            detail::for_each_covered_pixel(p, rect, ts, [&](int lp, T, T, T power) {
                if (last_p[lp] != kNotTerminated) return;
                T alpha = p.opacity * detail::exp_neg(power);
                if (alpha > alpha_max) {
                    alpha = alpha_max;
                    ++n_clamped;
                }
                const T t = tr_p[lp];
                const T w = alpha * t;
                T* c = col_p + 3 * lp;
                c[0] += p.r * w;
                c[1] += p.g * w;
                c[2] += p.bl * w;
                const T next = t * (T(1) - alpha);
                tr_p[lp] = next;
                ++count_p[lp];
                if (next < t_eps) last_p[lp] = local;
            });
        }
        for (int py = rect.y0; py <= rect.y1; ++py)
            for (int px = rect.x0; px <= rect.x1; ++px) {
                const std::size_t pix = static_cast<std::size_t>(py) * width + px;
                const std::size_t lp = static_cast<std::size_t>(py - rect.y0) * ts + (px - rect.x0);
                for (int ch = 0; ch < 3; ++ch) buf.color[pix * 3 + ch] = col[lp * 3 + ch] + background[ch] * tr[lp];
                buf.transmittance[pix] = tr[lp];
                buf.last_entry[pix] = last[lp];
                buf.contrib_count[pix] = count[lp];
            }
        clamped[tile] = n_clamped;
    });
    for (auto c : clamped) buf.alpha_clamped += c;
    return buf;
}

/// Every Gaussian visits every pixel; no culling, no early termination.
template <class T>
RenderBuffer<T> render_bruteforce(const SplatBatch<T>& batch, int width, int height, const Rgb<T>& background,
                                  const RenderSettings& settings = {}) {
    RenderBuffer<T> buf;
    buf.width = width;
    buf.height = height;
    buf.background = background;
    buf.settings = settings;
    buf.gaussian_count = batch.size();
    const std::size_t n_pix = static_cast<std::size_t>(width) * height;
    buf.color.assign(n_pix * 3, T(0));
    buf.transmittance.assign(n_pix, T(1));
    buf.contrib_count.assign(n_pix, 0);
    buf.last_entry.assign(n_pix, kNotTerminated);
    const T alpha_max = static_cast<T>(settings.alpha_max);
    parallel_for(static_cast<std::size_t>(height), [&](std::size_t row) {
        const int py = static_cast<int>(row);
        for (int px = 0; px < width; ++px) {
            const std::size_t pix = static_cast<std::size_t>(py) * width + px;
            const Vec2<T> at{T(px) + T(0.5), T(py) + T(0.5)};
            T tr = 1;
            Rgb<T> acc{};
            for (const auto& g : batch.gaussians) {
                const T alpha = gaussian_alpha(g, at, alpha_max);
                for (int ch = 0; ch < 3; ++ch) acc[ch] += g.color[ch] * alpha * tr;
                tr *= (T(1) - alpha);
            }
            for (int ch = 0; ch < 3; ++ch) buf.color[pix * 3 + ch] = acc[ch] + background[ch] * tr;
            buf.transmittance[pix] = tr;
            buf.contrib_count[pix] = static_cast<int>(batch.size());
        }
    });
    return buf;
}

} // namespace bsplat
