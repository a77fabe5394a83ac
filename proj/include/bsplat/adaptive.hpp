#pragma once

// Pruning of unhelpful curves and densification into high-error regions.
// The curve count never changes: every removed slot is refilled in place.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "bsplat/splat_sampler.hpp"

namespace bsplat {

enum class CurveMode { open, closed };

inline const char* to_string(CurveMode m) { return m == CurveMode::open ? "open" : "closed"; }

struct PruneCriteria {
    double opacity_threshold = 0.02;
    double area_threshold = 4.0;   // px^2, same measure as the depth key
    double mid_dip_ratio = 0.5;
    double color_sim_threshold = 0.05;
    double aabb_overlap_threshold = 0.9;
};

enum class PruneReason { low_opacity, small_area, mid_dip, redundant };

inline const char* to_string(PruneReason r) {
    switch (r) {
    case PruneReason::low_opacity: return "low_opacity";
    case PruneReason::small_area: return "small_area";
    case PruneReason::mid_dip: return "mid_dip";
    case PruneReason::redundant: return "redundant";
    }
    return "?";
}

struct Removal {
    int curve = 0; // strokes first, then regions
    PruneReason reason = PruneReason::low_opacity;
};

struct Aabb {
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    double area() const { return (x1 - x0) * (y1 - y0); }
};

namespace detail {

template <class T>
Aabb points_aabb(const std::vector<Vec2<T>>& pts) {
    Aabb box{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
             -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (const auto& p : pts) {
        box.x0 = std::min(box.x0, double(p.x));
        box.y0 = std::min(box.y0, double(p.y));
        box.x1 = std::max(box.x1, double(p.x));
        box.y1 = std::max(box.y1, double(p.y));
    }
    // Straight or point-like curves would have a zero-area box; give every box
    // at least one pixel of extent per axis.
    for (auto [lo, hi] : {std::pair<double*, double*>{&box.x0, &box.x1}, {&box.y0, &box.y1}}) {
        const double grow = std::max(0.0, 1.0 - (*hi - *lo)) / 2;
        *lo -= grow;
        *hi += grow;
    }
    return box;
}

inline double overlap_of_smaller(const Aabb& a, const Aabb& b) {
    const double w = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
    const double h = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
    if (w <= 0 || h <= 0) return 0;
    return w * h / std::min(a.area(), b.area());
}

template <class T>
double color_distance(const Rgb<T>& a, const Rgb<T>& b) {
    double s = 0;
    for (int c = 0; c < 3; ++c) s += (double(a[c]) - double(b[c])) * (double(a[c]) - double(b[c]));
    return std::sqrt(s);
}

} // namespace detail

/// Bounding box of the Gaussian centers a curve produces.
template <class T>
std::vector<Aabb> curve_aabbs(const CurveSet<T>& curves, const SamplingParams<T>& params) {
    const BernsteinTable<T> table(params.samples);
    std::vector<Aabb> out(curves.size());
    const std::size_t ns = curves.strokes.size();
    parallel_for(curves.size(), [&](std::size_t i) {
        if (i < ns) {
            out[i] = detail::points_aabb(sample_stroke_points(curves.strokes[i], table).pts);
        } else {
            const auto& r = curves.regions[i - ns];
            // interior rows are convex combinations of the boundary samples
            auto pts = sample_region_points(r, 0, table).pts;
            out[i] = detail::points_aabb(pts);
        }
    });
    return out;
}

struct PruneResult {
    std::vector<Removal> removed; // ascending curve index
};

/// Applies the four removal rules. For redundant pairs the larger-area curve
/// survives (lower index on ties), so running prune again on the survivors
/// removes nothing.
template <class T>
PruneResult prune(const CurveSet<T>& curves, const SamplingParams<T>& params, const PruneCriteria& criteria) {
    const std::size_t n = curves.size(), ns = curves.strokes.size();
    const auto areas = assign_depths(curves, params);
    const auto boxes = curve_aabbs(curves, params);
    auto opacity = [&](std::size_t i) -> const std::array<T, 3>& {
        return i < ns ? curves.strokes[i].opacity : curves.regions[i - ns].opacity;
    };
    auto color = [&](std::size_t i) -> const Rgb<T>& {
        return i < ns ? curves.strokes[i].color : curves.regions[i - ns].color;
    };

    std::vector<int> reason(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& o = opacity(i);
        if (params.opacity_count == 1) {
            if (double(o[0]) < criteria.opacity_threshold) reason[i] = int(PruneReason::low_opacity);
        } else if (double(std::max({o[0], o[1], o[2]})) < criteria.opacity_threshold) {
            reason[i] = int(PruneReason::low_opacity);
        }
        if (reason[i] < 0 && double(areas[i]) < criteria.area_threshold) reason[i] = int(PruneReason::small_area);
        if (reason[i] < 0 && params.opacity_count != 1 &&
            double(o[1]) < criteria.mid_dip_ratio * double(std::min(o[0], o[2])))
            reason[i] = int(PruneReason::mid_dip);
    }

    // Redundancy: i goes if a better-ranked curve j (larger area, or equal area
    // and lower index) that is not itself removed is similar and overlapping.
    std::vector<std::size_t> rank(n);
    std::iota(rank.begin(), rank.end(), std::size_t{0});
    std::stable_sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) { return areas[a] > areas[b]; });
    std::vector<std::size_t> kept;
    for (std::size_t i : rank) {
        if (reason[i] >= 0) continue;
        bool redundant = false;
        for (std::size_t j : kept) {
            if (detail::color_distance(color(i), color(j)) < criteria.color_sim_threshold &&
                detail::overlap_of_smaller(boxes[i], boxes[j]) > criteria.aabb_overlap_threshold) {
                redundant = true;
                break;
            }
        }
        if (redundant)
            reason[i] = int(PruneReason::redundant);
        else
            kept.push_back(i);
    }

    PruneResult result;
    for (std::size_t i = 0; i < n; ++i)
        if (reason[i] >= 0) result.removed.push_back({int(i), static_cast<PruneReason>(reason[i])});
    return result;
}

struct ErrorRegion {
    std::vector<int> pixels; // linear indices y * W + x
    std::size_t area = 0;
    Vec2<double> centroid{}; // pixel-center coordinates
    double mean_error = 0;
};

/// Connected (4-neighbour) components of pixels whose error exceeds
/// mean + 1 stddev, largest first, then by mean error.
template <class T>
std::vector<ErrorRegion> find_error_regions(const ScalarGrid<T>& error_map) {
    const int h = error_map.rows, w = error_map.cols;
    const std::size_t n = error_map.v.size();
    std::vector<ErrorRegion> regions;
    if (n == 0) return regions;
    double mean = 0;
    for (const auto& e : error_map.v) mean += double(e);
    mean /= double(n);
    double var = 0;
    for (const auto& e : error_map.v) var += (double(e) - mean) * (double(e) - mean);
    const double threshold = mean + std::sqrt(var / double(n));

    std::vector<char> seen(n, 0);
    std::vector<int> stack;
    for (std::size_t start = 0; start < n; ++start) {
        if (seen[start] || !(double(error_map.v[start]) > threshold)) continue;
        ErrorRegion reg;
        double sx = 0, sy = 0, se = 0;
        seen[start] = 1;
        stack.assign(1, int(start));
        while (!stack.empty()) {
            const int p = stack.back();
            stack.pop_back();
            reg.pixels.push_back(p);
            const int x = p % w, y = p / w;
            sx += x + 0.5;
            sy += y + 0.5;
            se += double(error_map.v[p]);
            const int nbr[4][2] = {{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}};
            for (const auto& q : nbr) {
                if (q[0] < 0 || q[0] >= w || q[1] < 0 || q[1] >= h) continue;
                const int qi = q[1] * w + q[0];
                if (seen[qi] || !(double(error_map.v[qi]) > threshold)) continue;
                seen[qi] = 1;
                stack.push_back(qi);
            }
        }
        std::sort(reg.pixels.begin(), reg.pixels.end());
        reg.area = reg.pixels.size();
        reg.centroid = {sx / double(reg.area), sy / double(reg.area)};
        reg.mean_error = se / double(reg.area);
        regions.push_back(std::move(reg));
    }
    std::stable_sort(regions.begin(), regions.end(), [](const ErrorRegion& a, const ErrorRegion& b) {
        if (a.area != b.area) return a.area > b.area;
        return a.mean_error > b.mean_error;
    });
    return regions;
}

struct SpawnSettings {
    double r_min = 2.0;
    double r_max = 64.0;
    double width = 2.0;
    double opacity = 0.9;
};

inline double spawn_radius(std::size_t area, const SpawnSettings& s) {
    const double r = std::sqrt(double(area) / std::numbers::pi);
    return std::clamp(r, s.r_min, std::max(s.r_min, s.r_max));
}

/// Three cubic quarter arcs covering 270 degrees of the circle, starting at
/// angle start.
template <class T>
OpenStroke<T> circle_stroke(Vec2<double> c, double r, double start, double width, double opacity, const Rgb<T>& color) {
    constexpr double kappa = 0.5523;
    OpenStroke<T> s;
    for (int seg = 0; seg < 3; ++seg) {
        const double a0 = start + seg * std::numbers::pi / 2, a1 = a0 + std::numbers::pi / 2;
        const Vec2<double> p0{c.x + r * std::cos(a0), c.y + r * std::sin(a0)};
        const Vec2<double> p3{c.x + r * std::cos(a1), c.y + r * std::sin(a1)};
        const Vec2<double> t0{-std::sin(a0), std::cos(a0)}, t1{-std::sin(a1), std::cos(a1)};
        s.points[3 * seg] = vec_cast<T>(p0);
        s.points[3 * seg + 1] = vec_cast<T>(p0 + t0 * (kappa * r));
        s.points[3 * seg + 2] = vec_cast<T>(p3 - t1 * (kappa * r));
        s.points[3 * seg + 3] = vec_cast<T>(p3);
    }
    s.width = static_cast<T>(width);
    s.color = color;
    s.opacity = {T(opacity), T(opacity), T(opacity)};
    return s;
}

/// Two cubic semicircles from angle start to start + pi, one each way round.
template <class T>
ClosedRegion<T> circle_region(Vec2<double> c, double r, double start, double opacity, const Rgb<T>& color) {
    constexpr double handle = 4.0 / 3.0; // 4/3 tan(pi/4): a cubic's best fit to a half circle
    const double a0 = start, a1 = start + std::numbers::pi;
    const Vec2<double> p0{c.x + r * std::cos(a0), c.y + r * std::sin(a0)};
    const Vec2<double> p3{c.x + r * std::cos(a1), c.y + r * std::sin(a1)};
    const Vec2<double> t0{-std::sin(a0), std::cos(a0)}, t1{-std::sin(a1), std::cos(a1)};
    ClosedRegion<T> g;
    g.points[0] = vec_cast<T>(p0);
    g.points[1] = vec_cast<T>(p0 + t0 * (handle * r));
    g.points[2] = vec_cast<T>(p3 - t1 * (handle * r));
    g.points[3] = vec_cast<T>(p3);
    g.points[4] = vec_cast<T>(p0 - t0 * (handle * r));
    g.points[5] = vec_cast<T>(p3 + t1 * (handle * r));
    g.color = color;
    g.opacity = {T(opacity), T(opacity), T(opacity)};
    return g;
}

template <class T>
Rgb<T> mean_color(const Image<T>& target, const std::vector<int>& pixels) {
    Rgb<double> acc{};
    for (int p : pixels)
        for (int c = 0; c < 3; ++c) acc[c] += double(target.data()[std::size_t(p) * 3 + c]);
    Rgb<T> out{};
    if (pixels.empty()) return out;
    for (int c = 0; c < 3; ++c) out[c] = static_cast<T>(std::clamp(acc[c] / double(pixels.size()), 0.0, 1.0));
    return out;
}

/// Circle-shaped curve at an error region's centroid, filled with the
/// region's mean target color. center overrides the centroid when given.
template <class T>
void spawn_curve(const ErrorRegion& region, const Image<T>& target, const SpawnSettings& settings, double start_angle,
                 OpenStroke<T>& out, const Vec2<double>* center = nullptr) {
    out = circle_stroke<T>(center ? *center : region.centroid, spawn_radius(region.area, settings), start_angle,
                           settings.width, settings.opacity, mean_color(target, region.pixels));
}

template <class T>
void spawn_curve(const ErrorRegion& region, const Image<T>& target, const SpawnSettings& settings, double start_angle,
                 ClosedRegion<T>& out, const Vec2<double>* center = nullptr) {
    out = circle_region<T>(center ? *center : region.centroid, spawn_radius(region.area, settings), start_angle,
                           settings.opacity, mean_color(target, region.pixels));
}

struct AdaptReport {
    std::vector<Removal> removed;
    std::vector<int> respawned; // curve slots that now hold new curves
    std::size_t regions_found = 0;
};

/// Prune, then refill every freed slot with a new curve of the same kind
/// placed in the top-ranked error regions (cycling with jitter when there are
/// fewer regions than removals). Pure function of its inputs and seed.
template <class T>
AdaptReport adapt(CurveSet<T>& curves, const ScalarGrid<T>& error_map, const Image<T>& target,
                  const SamplingParams<T>& params, const PruneCriteria& criteria, const SpawnSettings& spawn,
                  std::uint64_t seed) {
    AdaptReport report;
    report.removed = prune(curves, params, criteria).removed;
    if (report.removed.empty()) return report;
    const auto regions = find_error_regions(error_map);
    report.regions_found = regions.size();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const std::size_t ns = curves.strokes.size();

    for (std::size_t k = 0; k < report.removed.size(); ++k) {
        const int slot = report.removed[k].curve;
        const double angle = 2 * std::numbers::pi * unit(rng);
        ErrorRegion fallback;
        const ErrorRegion* region = nullptr;
        Vec2<double> center;
        if (regions.empty()) {
            // flat error map: drop the curve somewhere random, colored from the target
            center = {unit(rng) * curves.canvas_w, unit(rng) * curves.canvas_h};
            const int px = std::clamp(int(center.x), 0, std::max(0, curves.canvas_w - 1));
            const int py = std::clamp(int(center.y), 0, std::max(0, curves.canvas_h - 1));
            fallback.pixels = {py * curves.canvas_w + px};
            fallback.area = std::size_t(std::round(std::numbers::pi * spawn.r_min * spawn.r_min * 4));
            fallback.centroid = center;
            region = &fallback;
        } else {
            region = &regions[k % regions.size()];
            center = region->centroid;
            if (k >= regions.size()) {
                const double jr = spawn_radius(region->area, spawn) / 2 * std::sqrt(unit(rng));
                const double ja = 2 * std::numbers::pi * unit(rng);
                center = center + Vec2<double>{std::cos(ja), std::sin(ja)} * jr;
            }
        }
        if (std::size_t(slot) < ns)
            spawn_curve(*region, target, spawn, angle, curves.strokes[slot], &center);
        else
            spawn_curve(*region, target, spawn, angle, curves.regions[slot - ns], &center);
        report.respawned.push_back(slot);
    }
    return report;
}

} // namespace bsplat
