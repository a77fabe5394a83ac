#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "bsplat/types.hpp"

namespace bsplat::metrics {

/// Returned by psnr() for identical images.
inline constexpr double kInfinitePsnr = std::numeric_limits<double>::infinity();

template <class T>
double mse(const Image<T>& a, const Image<T>& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("mse: image shapes differ");
    if (a.size() == 0) return 0.0;
    double sum = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i]);
        sum += d * d;
    }
    return sum / static_cast<double>(a.size());
}

inline double psnr_from_mse(double m) { return m > 0 ? 10.0 * std::log10(1.0 / m) : kInfinitePsnr; }

template <class T>
double psnr(const Image<T>& a, const Image<T>& b) {
    return psnr_from_mse(mse(a, b));
}

namespace detail {

struct Plane {
    int w = 0, h = 0;
    std::vector<double> v;
    double& at(int x, int y) { return v[static_cast<std::size_t>(y) * w + x]; }
    double at(int x, int y) const { return v[static_cast<std::size_t>(y) * w + x]; }
};

inline std::vector<double> gaussian_window(int size, double sigma) {
    std::vector<double> k(static_cast<std::size_t>(size));
    const double mid = (size - 1) / 2.0;
    double sum = 0;
    for (int i = 0; i < size; ++i) {
        k[i] = std::exp(-((i - mid) * (i - mid)) / (2 * sigma * sigma));
        sum += k[i];
    }
    for (auto& x : k) x /= sum;
    return k;
}

// Separable 'valid' filtering.
inline Plane filter_valid(const Plane& in, const std::vector<double>& k) {
    const int n = static_cast<int>(k.size());
    Plane tmp{in.w - n + 1, in.h, {}};
    tmp.v.assign(static_cast<std::size_t>(tmp.w) * tmp.h, 0.0);
    for (int y = 0; y < in.h; ++y)
        for (int x = 0; x < tmp.w; ++x) {
            double s = 0;
            for (int i = 0; i < n; ++i) s += k[i] * in.at(x + i, y);
            tmp.at(x, y) = s;
        }
    Plane out{tmp.w, in.h - n + 1, {}};
    out.v.assign(static_cast<std::size_t>(out.w) * out.h, 0.0);
    for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x) {
            double s = 0;
            for (int i = 0; i < n; ++i) s += k[i] * tmp.at(x, y + i);
            out.at(x, y) = s;
        }
    return out;
}

struct SsimParts {
    double ssim = 0;
    double cs = 0;
};

inline SsimParts ssim_plane(const Plane& a, const Plane& b) {
    constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    const int size = std::min({11, a.w, a.h});
    const auto k = gaussian_window(size, 1.5);
    Plane aa = a, bb = b, ab = a;
    for (std::size_t i = 0; i < a.v.size(); ++i) {
        aa.v[i] = a.v[i] * a.v[i];
        bb.v[i] = b.v[i] * b.v[i];
        ab.v[i] = a.v[i] * b.v[i];
    }
    const Plane mu_a = filter_valid(a, k), mu_b = filter_valid(b, k);
    const Plane e_aa = filter_valid(aa, k), e_bb = filter_valid(bb, k), e_ab = filter_valid(ab, k);
    double s_sum = 0, cs_sum = 0;
    for (std::size_t i = 0; i < mu_a.v.size(); ++i) {
        const double ma = mu_a.v[i], mb = mu_b.v[i];
        const double va = e_aa.v[i] - ma * ma, vb = e_bb.v[i] - mb * mb, cov = e_ab.v[i] - ma * mb;
        const double cs = (2 * cov + c2) / (va + vb + c2);
        const double lum = (2 * ma * mb + c1) / (ma * ma + mb * mb + c1);
        s_sum += lum * cs;
        cs_sum += cs;
    }
    const double n = static_cast<double>(mu_a.v.size());
    return {s_sum / n, cs_sum / n};
}

template <class T>
Plane channel(const Image<T>& img, int ch) {
    Plane p{img.width(), img.height(), {}};
    p.v.resize(img.pixel_count());
    for (std::size_t i = 0; i < p.v.size(); ++i) p.v[i] = static_cast<double>(img.data()[i * 3 + ch]);
    return p;
}

inline Plane downsample2(const Plane& in) {
    Plane out{in.w / 2, in.h / 2, {}};
    out.v.resize(static_cast<std::size_t>(out.w) * out.h);
    for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x)
            out.at(x, y) = 0.25 * (in.at(2 * x, 2 * y) + in.at(2 * x + 1, 2 * y) + in.at(2 * x, 2 * y + 1) +
                                   in.at(2 * x + 1, 2 * y + 1));
    return out;
}

} // namespace detail

/// Single-scale SSIM: 11x11 Gaussian window (sigma 1.5), data range 1,
/// computed per channel and averaged. Windows shrink to fit images smaller
/// than 11 px.
template <class T>
double ssim(const Image<T>& a, const Image<T>& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("ssim: image shapes differ");
    if (a.width() < 1 || a.height() < 1) throw std::invalid_argument("ssim: empty image");
    double total = 0;
    for (int ch = 0; ch < 3; ++ch) total += detail::ssim_plane(detail::channel(a, ch), detail::channel(b, ch)).ssim;
    return total / 3.0;
}

/// Five-scale MS-SSIM with the standard exponents.
template <class T>
double ms_ssim(const Image<T>& a, const Image<T>& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("ms_ssim: image shapes differ");
    if (std::min(a.width(), a.height()) < 160) throw std::invalid_argument("ms_ssim: needs both dimensions >= 160");
    static constexpr std::array<double, 5> weights{0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
    double total = 0;
    for (int ch = 0; ch < 3; ++ch) {
        auto pa = detail::channel(a, ch);
        auto pb = detail::channel(b, ch);
        double value = 1;
        for (int level = 0; level < 5; ++level) {
            const auto parts = detail::ssim_plane(pa, pb);
            const double term = level == 4 ? parts.ssim : parts.cs;
            value *= std::pow(std::max(term, 0.0), weights[level]);
            if (level < 4) {
                pa = detail::downsample2(pa);
                pb = detail::downsample2(pb);
            }
        }
        total += value;
    }
    return total / 3.0;
}

} // namespace bsplat::metrics
