#pragma once

// Turns curve samples into fully parameterized 2D Gaussians and assembles the
// depth-sorted batch consumed by the rasterizer.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <utility>
#include <vector>

#include "bsplat/curve_model.hpp"
#include "bsplat/parallel.hpp"

namespace bsplat {

template <class T>
struct SamplingParams {
    int samples = 32;       // K, points per cubic segment
    int interior = 20;      // R, interpolated curves per closed region
    T rho = T(3);           // density divisor for scales
    T sigma_floor = T(0.3); // px
    int opacity_count = 3;  // 1 ties every segment/row to opacity[0]

    template <class U>
    SamplingParams<U> cast() const {
        return {samples, interior, static_cast<U>(rho), static_cast<U>(sigma_floor), opacity_count};
    }
};

/// (curve, row, column) a Gaussian was sampled from. curve indexes strokes
/// first, then regions.
struct Provenance {
    int curve = 0;
    int row = 0;
    int col = 0;
};

template <class T>
struct Gaussian2D {
    Vec2<T> center{};
    T sigma_x = T(1);
    T sigma_y = T(1);
    T theta = T(0);
    Rgb<T> color{};
    T opacity = T(1);
    T depth = T(0);
    Provenance parent{};
};

/// Gaussians sorted front to back. Each curve's Gaussians are contiguous;
/// curve_order[i] is the curve occupying [offsets[i], offsets[i+1]).
template <class T>
struct SplatBatch {
    std::vector<Gaussian2D<T>> gaussians;
    std::vector<std::size_t> offsets{0};
    std::vector<int> curve_order;
    std::vector<T> curve_depth; // indexed by curve, not by batch position

    std::size_t size() const { return gaussians.size(); }
};

template <class T>
struct ScalarGrid {
    int rows = 0;
    int cols = 0;
    std::vector<T> v;

    ScalarGrid() = default;
    ScalarGrid(int r, int c, T fill = T(0)) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, fill) {}
    T& operator()(int r, int k) { return v[static_cast<std::size_t>(r) * cols + k]; }
    const T& operator()(int r, int k) const { return v[static_cast<std::size_t>(r) * cols + k]; }
};

/// sigma_x from consecutive points along a row, sigma_y from corresponding
/// points on adjacent rows, both divided by rho and floored. The last column
/// (row) repeats the preceding difference.
template <class T>
std::pair<ScalarGrid<T>, ScalarGrid<T>> scales_from_grid(const PointGrid<T>& grid, T rho, T sigma_floor) {
    if (!(rho > T(0))) throw std::invalid_argument("rho must be positive");
    ScalarGrid<T> sx(grid.rows, grid.cols, sigma_floor);
    ScalarGrid<T> sy(grid.rows, grid.cols, sigma_floor);
    for (int r = 0; r < grid.rows; ++r) {
        for (int k = 0; k < grid.cols; ++k) {
            if (grid.cols >= 2) {
                const int k0 = std::min(k, grid.cols - 2);
                sx(r, k) = std::max((grid(r, k0 + 1) - grid(r, k0)).norm() / rho, sigma_floor);
            }
            if (grid.rows >= 2) {
                const int r0 = std::min(r, grid.rows - 2);
                sy(r, k) = std::max((grid(r0 + 1, k) - grid(r0, k)).norm() / rho, sigma_floor);
            }
        }
    }
    return {std::move(sx), std::move(sy)};
}

/// Central-difference direction of neighbor k in a run of n points; the ends
/// use their single neighbor.
inline std::pair<int, int> rotation_neighbors(int k, int n) {
    return {std::max(k - 1, 0), std::min(k + 1, n - 1)};
}

template <class T>
T rotation_at(const Vec2<T>* row, int k, int n) {
    const auto [lo, hi] = rotation_neighbors(k, n);
    const Vec2<T> d = row[hi] - row[lo];
    if (d.x == T(0) && d.y == T(0)) return T(0);
    return std::atan2(d.y, d.x);
}

template <class T>
ScalarGrid<T> rotations_from_grid(const PointGrid<T>& grid) {
    if (grid.cols < 2) throw std::invalid_argument("rotation needs at least two points per row");
    ScalarGrid<T> theta(grid.rows, grid.cols);
    for (int r = 0; r < grid.rows; ++r) {
        const Vec2<T>* row = &grid(r, 0);
        for (int k = 0; k < grid.cols; ++k) theta(r, k) = rotation_at(row, k, grid.cols);
    }
    return theta;
}

/// Piecewise-linear weights of the three region opacities at normalized row
/// position u, nodes at 0, 0.5, 1.
template <class T>
std::array<T, 3> region_opacity_weights(T u) {
    if (u <= T(0.5)) {
        const T a = u / T(0.5);
        return {T(1) - a, a, T(0)};
    }
    const T a = (u - T(0.5)) / T(0.5);
    return {T(0), T(1) - a, a};
}

template <class T>
T region_row_position(int row, int interior) {
    return T(row) / T(interior + 1);
}

/// 3 x K grid of the stroke's samples, one row per segment.
template <class T>
PointGrid<T> sample_stroke_points(const OpenStroke<T>& stroke, const BernsteinTable<T>& table) {
    PointGrid<T> grid{3, table.samples(), {}};
    grid.pts.resize(static_cast<std::size_t>(3) * grid.cols);
    for (int s = 0; s < 3; ++s) {
        const auto seg = stroke.segment(s);
        for (int k = 0; k < grid.cols; ++k) grid(s, k) = table.eval(seg, k);
    }
    return grid;
}

namespace detail {

template <class T>
void splat_stroke_into(const OpenStroke<T>& stroke, int curve, const SamplingParams<T>& params,
                       const BernsteinTable<T>& table, Gaussian2D<T>* out) {
    const auto grid = sample_stroke_points(stroke, table);
    const int K = grid.cols;
    const int n = 3 * K;
    const T sigma_y = std::max(stroke.width, params.sigma_floor);
    for (int s = 0; s < 3; ++s) {
        const T o = stroke.opacity[params.opacity_count == 1 ? 0 : s];
        for (int k = 0; k < K; ++k) {
            const int k0 = std::min(k, K - 2);
            Gaussian2D<T>& g = out[s * K + k];
            g.center = grid(s, k);
            g.sigma_x = std::max((grid(s, k0 + 1) - grid(s, k0)).norm() / params.rho, params.sigma_floor);
            g.sigma_y = sigma_y;
            // rotation runs along the concatenated 3K sequence
            g.theta = rotation_at(grid.pts.data(), s * K + k, n);
            g.color = stroke.color;
            g.opacity = o;
            g.parent = {curve, s, k};
        }
    }
}

template <class T>
void splat_region_into(const ClosedRegion<T>& region, int curve, const SamplingParams<T>& params,
                       const BernsteinTable<T>& table, Gaussian2D<T>* out) {
    const auto grid = sample_region_points(region, params.interior, table);
    const auto [sx, sy] = scales_from_grid(grid, params.rho, params.sigma_floor);
    for (int r = 0; r < grid.rows; ++r) {
        T o = region.opacity[0];
        if (params.opacity_count != 1) {
            const auto w = region_opacity_weights(region_row_position<T>(r, params.interior));
            o = w[0] * region.opacity[0] + w[1] * region.opacity[1] + w[2] * region.opacity[2];
        }
        const Vec2<T>* row = &grid(r, 0);
        for (int k = 0; k < grid.cols; ++k) {
            Gaussian2D<T>& g = out[static_cast<std::size_t>(r) * grid.cols + k];
            g.center = grid(r, k);
            g.sigma_x = sx(r, k);
            g.sigma_y = sy(r, k);
            g.theta = rotation_at(row, k, grid.cols);
            g.color = region.color;
            g.opacity = o;
            g.parent = {curve, r, k};
        }
    }
}

} // namespace detail

template <class T>
std::size_t gaussians_per_stroke(const SamplingParams<T>& p) {
    return static_cast<std::size_t>(3) * p.samples;
}

template <class T>
std::size_t gaussians_per_region(const SamplingParams<T>& p) {
    return static_cast<std::size_t>(p.interior + 2) * p.samples;
}

template <class T>
std::vector<Gaussian2D<T>> splat_stroke(const OpenStroke<T>& stroke, const SamplingParams<T>& params, int curve = 0) {
    const BernsteinTable<T> table(params.samples);
    std::vector<Gaussian2D<T>> out(gaussians_per_stroke(params));
    detail::splat_stroke_into(stroke, curve, params, table, out.data());
    return out;
}

template <class T>
std::vector<Gaussian2D<T>> splat_region(const ClosedRegion<T>& region, const SamplingParams<T>& params, int curve = 0) {
    const BernsteinTable<T> table(params.samples);
    std::vector<Gaussian2D<T>> out(gaussians_per_region(params));
    detail::splat_region_into(region, curve, params, table, out.data());
    return out;
}

/// Stroke footprint: sampled polyline length times width.
template <class T>
T stroke_area(const OpenStroke<T>& stroke, const BernsteinTable<T>& table) {
    const auto grid = sample_stroke_points(stroke, table);
    T length = 0;
    for (int s = 0; s < 3; ++s)
        for (int k = 0; k + 1 < grid.cols; ++k) length += (grid(s, k + 1) - grid(s, k)).norm();
    return length * stroke.width;
}

/// Shoelace area of boundary_a's samples followed by boundary_b's in reverse.
template <class T>
T region_area(const ClosedRegion<T>& region, const BernsteinTable<T>& table) {
    const auto a = region.boundary_a();
    const auto b = region.boundary_b();
    const int K = table.samples();
    std::vector<Vec2<T>> poly;
    poly.reserve(static_cast<std::size_t>(2) * K);
    for (int k = 0; k < K; ++k) poly.push_back(table.eval(a, k));
    for (int k = K - 1; k >= 0; --k) poly.push_back(table.eval(b, k));
    T twice = 0;
    for (std::size_t i = 0; i < poly.size(); ++i) twice += cross(poly[i], poly[(i + 1) % poly.size()]);
    return std::abs(twice) / T(2);
}

/// Per-curve depth keys (curve index order). Smaller area sorts in front.
template <class T>
std::vector<T> assign_depths(const CurveSet<T>& curves, const SamplingParams<T>& params) {
    const BernsteinTable<T> table(params.samples);
    std::vector<T> keys(curves.size());
    const std::size_t ns = curves.strokes.size();
    parallel_for(curves.size(), [&](std::size_t i) {
        keys[i] = i < ns ? stroke_area(curves.strokes[i], table) : region_area(curves.regions[i - ns], table);
    });
    return keys;
}

/// Front-to-back curve order: ascending depth key, ties by curve index.
template <class T>
std::vector<int> depth_order(const std::vector<T>& keys) {
    std::vector<int> order(keys.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return keys[a] < keys[b]; });
    return order;
}

template <class T>
SplatBatch<T> build_batch(const CurveSet<T>& curves, const SamplingParams<T>& params) {
    const BernsteinTable<T> table(params.samples);
    SplatBatch<T> batch;
    batch.curve_depth = assign_depths(curves, params);
    batch.curve_order = depth_order(batch.curve_depth);
    const std::size_t ns = curves.strokes.size();
    batch.offsets.assign(curves.size() + 1, 0);
    for (std::size_t i = 0; i < curves.size(); ++i) {
        const int c = batch.curve_order[i];
        const std::size_t n = static_cast<std::size_t>(c) < ns ? gaussians_per_stroke(params) : gaussians_per_region(params);
        batch.offsets[i + 1] = batch.offsets[i] + n;
    }
    batch.gaussians.resize(batch.offsets.back());
    parallel_for(curves.size(), [&](std::size_t i) {
        const int c = batch.curve_order[i];
        Gaussian2D<T>* out = batch.gaussians.data() + batch.offsets[i];
        if (static_cast<std::size_t>(c) < ns)
            detail::splat_stroke_into(curves.strokes[c], c, params, table, out);
        else
            detail::splat_region_into(curves.regions[c - ns], c, params, table, out);
        const std::size_t n = batch.offsets[i + 1] - batch.offsets[i];
        for (std::size_t g = 0; g < n; ++g) out[g].depth = batch.curve_depth[c];
    });
    return batch;
}

} // namespace bsplat
