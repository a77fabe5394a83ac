#pragma once

// Bezier primitives and curve-space sampling: Bernstein evaluation, uniform
// parameter sampling, and the paired-boundary interpolation used to fill
// closed regions.

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "bsplat/types.hpp"

namespace bsplat {

/// C(degree, j) (1-t)^(degree-j) t^j. t outside [0,1] is clamped.
template <class T>
T bernstein(int j, int degree, T t) {
    assert(degree >= 0 && j >= 0 && j <= degree);
    assert(t >= T(0) && t <= T(1));
    t = std::clamp(t, T(0), T(1));
    T binom = 1;
    for (int i = 1; i <= j; ++i) binom = binom * T(degree - j + i) / T(i);
    T value = binom;
    for (int i = 0; i < degree - j; ++i) value *= (T(1) - t);
    for (int i = 0; i < j; ++i) value *= t;
    return value;
}

template <class T>
struct BezierSegment {
    std::array<Vec2<T>, 4> p{};

    bool operator==(const BezierSegment&) const = default;
};

template <class T>
std::array<T, 4> cubic_weights(T t) {
    const T s = T(1) - t;
    return {s * s * s, T(3) * s * s * t, T(3) * s * t * t, t * t * t};
}

template <class T>
Vec2<T> eval_segment(const BezierSegment<T>& seg, T t) {
    assert(t >= T(0) && t <= T(1));
    const auto w = cubic_weights(std::clamp(t, T(0), T(1)));
    Vec2<T> out = seg.p[0] * w[0];
    for (int j = 1; j < 4; ++j) out += seg.p[j] * w[j];
    return out;
}

/// K x 4 Bernstein weights at t_k = k / (K - 1). Shared by every segment that
/// is sampled at K points, so sampling and its adjoint are small dense products.
template <class T>
class BernsteinTable {
public:
    explicit BernsteinTable(int samples) : samples_(samples) {
        if (samples < 2) throw std::invalid_argument("sample count must be >= 2");
        weights_.resize(static_cast<std::size_t>(samples));
        for (int k = 0; k < samples; ++k) {
            const T t = T(k) / T(samples - 1);
            weights_[k] = cubic_weights(t);
        }
    }

    int samples() const { return samples_; }
    const std::array<T, 4>& operator[](int k) const { return weights_[k]; }

    Vec2<T> eval(const BezierSegment<T>& seg, int k) const {
        const auto& w = weights_[k];
        Vec2<T> out = seg.p[0] * w[0];
        for (int j = 1; j < 4; ++j) out += seg.p[j] * w[j];
        return out;
    }

private:
    int samples_;
    std::vector<std::array<T, 4>> weights_;
};

template <class T>
std::vector<Vec2<T>> sample_points(const BezierSegment<T>& seg, int count) {
    const BernsteinTable<T> table(count);
    std::vector<Vec2<T>> out(static_cast<std::size_t>(count));
    for (int k = 0; k < count; ++k) out[k] = table.eval(seg, k);
    return out;
}

/// Interpolation weights for the R interior curves of a closed region:
/// t_k = sin^2(pi u_k / 2), u_k = k / (R + 1). Symmetric about 0.5 and dense
/// near both boundaries.
template <class T>
std::vector<T> cdf_t_values(int count) {
    if (count < 1) throw std::invalid_argument("interior curve count must be >= 1");
    std::vector<T> t(static_cast<std::size_t>(count));
    const int n = count + 1;
    for (int k = 1; 2 * k <= n; ++k) {
        const T u = T(k) / T(n);
        const T s = std::sin(std::numbers::pi_v<T> * u / T(2));
        const T value = 2 * k == n ? T(0.5) : s * s;
        t[k - 1] = value;
        t[count - k] = T(1) - value;
    }
    return t;
}

/// Row interpolation weights including both boundaries: [0, t_1..t_R, 1].
template <class T>
std::vector<T> region_row_weights(int interior) {
    std::vector<T> w;
    w.reserve(static_cast<std::size_t>(interior) + 2);
    w.push_back(T(0));
    if (interior > 0) {
        const auto inner = cdf_t_values<T>(interior);
        w.insert(w.end(), inner.begin(), inner.end());
    }
    w.push_back(T(1));
    return w;
}

/// Open stroke: three cubic segments sharing endpoints, 10 control points.
/// Segment k uses points[3k .. 3k+3].
template <class T>
struct OpenStroke {
    std::array<Vec2<T>, 10> points{};
    T width = T(2);
    Rgb<T> color{};
    std::array<T, 3> opacity{T(1), T(1), T(1)};

    BezierSegment<T> segment(int k) const {
        return {{points[3 * k], points[3 * k + 1], points[3 * k + 2], points[3 * k + 3]}};
    }

    bool operator==(const OpenStroke&) const = default;
};

/// Closed region: two cubic boundaries from points[0] to points[3].
/// boundary_a = (p0, p1, p2, p3), boundary_b = (p0, p4, p5, p3).
template <class T>
struct ClosedRegion {
    std::array<Vec2<T>, 6> points{};
    Rgb<T> color{};
    std::array<T, 3> opacity{T(1), T(1), T(1)};

    BezierSegment<T> boundary_a() const { return {{points[0], points[1], points[2], points[3]}}; }
    BezierSegment<T> boundary_b() const { return {{points[0], points[4], points[5], points[3]}}; }

    bool operator==(const ClosedRegion&) const = default;
};

/// Index of boundary_b's control point j inside ClosedRegion::points.
inline constexpr std::array<int, 4> kBoundaryBIndex{0, 4, 5, 3};
inline constexpr std::array<int, 4> kBoundaryAIndex{0, 1, 2, 3};

template <class T>
struct CurveSet {
    std::vector<OpenStroke<T>> strokes;
    std::vector<ClosedRegion<T>> regions;
    int canvas_w = 0;
    int canvas_h = 0;
    Rgb<T> background{T(1), T(1), T(1)};

    std::size_t size() const { return strokes.size() + regions.size(); }
    bool operator==(const CurveSet&) const = default;

    template <class U>
    CurveSet<U> cast() const;
};

template <class T>
template <class U>
CurveSet<U> CurveSet<T>::cast() const {
    CurveSet<U> out;
    out.canvas_w = canvas_w;
    out.canvas_h = canvas_h;
    out.background = rgb_cast<U>(background);
    for (const auto& s : strokes) {
        OpenStroke<U> o;
        for (int i = 0; i < 10; ++i) o.points[i] = vec_cast<U>(s.points[i]);
        o.width = static_cast<U>(s.width);
        o.color = rgb_cast<U>(s.color);
        for (int i = 0; i < 3; ++i) o.opacity[i] = static_cast<U>(s.opacity[i]);
        out.strokes.push_back(o);
    }
    for (const auto& r : regions) {
        ClosedRegion<U> o;
        for (int i = 0; i < 6; ++i) o.points[i] = vec_cast<U>(r.points[i]);
        o.color = rgb_cast<U>(r.color);
        for (int i = 0; i < 3; ++i) o.opacity[i] = static_cast<U>(r.opacity[i]);
        out.regions.push_back(o);
    }
    return out;
}

template <class T>
std::vector<BezierSegment<T>> interpolate_region_curves(const ClosedRegion<T>& region, int interior) {
    if (interior < 0) throw std::invalid_argument("interior curve count must be >= 0");
    const auto a = region.boundary_a();
    const auto b = region.boundary_b();
    const auto w = region_row_weights<T>(interior);
    std::vector<BezierSegment<T>> out;
    out.reserve(w.size());
    out.push_back(a);
    for (int r = 1; r <= interior; ++r) {
        BezierSegment<T> seg;
        for (int j = 0; j < 4; ++j) seg.p[j] = a.p[j] * (T(1) - w[r]) + b.p[j] * w[r];
        out.push_back(seg);
    }
    out.push_back(b);
    return out;
}

/// rows x cols grid of points, row-major.
template <class T>
struct PointGrid {
    int rows = 0;
    int cols = 0;
    std::vector<Vec2<T>> pts;

    Vec2<T>& operator()(int r, int k) { return pts[static_cast<std::size_t>(r) * cols + k]; }
    const Vec2<T>& operator()(int r, int k) const { return pts[static_cast<std::size_t>(r) * cols + k]; }
};

template <class T>
PointGrid<T> sample_region_points(const ClosedRegion<T>& region, int interior, const BernsteinTable<T>& table) {
    const auto segs = interpolate_region_curves(region, interior);
    PointGrid<T> grid{static_cast<int>(segs.size()), table.samples(), {}};
    grid.pts.resize(static_cast<std::size_t>(grid.rows) * grid.cols);
    for (int r = 0; r < grid.rows; ++r)
        for (int k = 0; k < grid.cols; ++k) grid(r, k) = table.eval(segs[r], k);
    return grid;
}

template <class T>
PointGrid<T> sample_region_points(const ClosedRegion<T>& region, int interior, int count) {
    return sample_region_points(region, interior, BernsteinTable<T>(count));
}

enum class ParamClass { points, width, opacity, color };

inline const char* to_string(ParamClass c) {
    switch (c) {
    case ParamClass::points: return "points";
    case ParamClass::width: return "width";
    case ParamClass::opacity: return "opacity";
    case ParamClass::color: return "color";
    }
    return "?";
}

/// Identifies one scalar parameter. curve indexes strokes first, then regions.
struct ParamId {
    int curve = 0;
    bool closed = false;
    ParamClass cls = ParamClass::points;
    int index = 0;     // control point / opacity slot / color channel
    int component = 0; // 0 = x, 1 = y for points
};

/// Visits every scalar parameter of several same-shaped curve containers in
/// lockstep: fn(ParamId, T0&, T1&, ...). Containers need strokes and regions
/// members of identical sizes.
template <class Fn, class First, class... Rest>
void for_each_param(Fn&& fn, First& first, Rest&... rest) {
    const int n_strokes = static_cast<int>(first.strokes.size());
    for (int i = 0; i < n_strokes; ++i) {
        auto& s = first.strokes[i];
        for (int p = 0; p < 10; ++p) {
            fn(ParamId{i, false, ParamClass::points, p, 0}, s.points[p].x, rest.strokes[i].points[p].x...);
            fn(ParamId{i, false, ParamClass::points, p, 1}, s.points[p].y, rest.strokes[i].points[p].y...);
        }
        fn(ParamId{i, false, ParamClass::width, 0, 0}, s.width, rest.strokes[i].width...);
        for (int c = 0; c < 3; ++c)
            fn(ParamId{i, false, ParamClass::color, c, 0}, s.color[c], rest.strokes[i].color[c]...);
        for (int o = 0; o < 3; ++o)
            fn(ParamId{i, false, ParamClass::opacity, o, 0}, s.opacity[o], rest.strokes[i].opacity[o]...);
    }
    for (int i = 0; i < static_cast<int>(first.regions.size()); ++i) {
        auto& r = first.regions[i];
        const int id = n_strokes + i;
        for (int p = 0; p < 6; ++p) {
            fn(ParamId{id, true, ParamClass::points, p, 0}, r.points[p].x, rest.regions[i].points[p].x...);
            fn(ParamId{id, true, ParamClass::points, p, 1}, r.points[p].y, rest.regions[i].points[p].y...);
        }
        for (int c = 0; c < 3; ++c)
            fn(ParamId{id, true, ParamClass::color, c, 0}, r.color[c], rest.regions[i].color[c]...);
        for (int o = 0; o < 3; ++o)
            fn(ParamId{id, true, ParamClass::opacity, o, 0}, r.opacity[o], rest.regions[i].opacity[o]...);
    }
}

} // namespace bsplat
