#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace bsplat {

template <class T>
struct Vec2 {
    T x{};
    T y{};

    constexpr Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    constexpr Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    constexpr Vec2 operator*(T s) const { return {x * s, y * s}; }
    constexpr Vec2& operator+=(const Vec2& o) {
        x += o.x;
        y += o.y;
        return *this;
    }
    constexpr Vec2& operator-=(const Vec2& o) {
        x -= o.x;
        y -= o.y;
        return *this;
    }
    constexpr bool operator==(const Vec2&) const = default;

    T norm() const { return std::sqrt(x * x + y * y); }
};

template <class T>
constexpr Vec2<T> operator*(T s, const Vec2<T>& v) {
    return {s * v.x, s * v.y};
}

template <class T>
constexpr T cross(const Vec2<T>& a, const Vec2<T>& b) {
    return a.x * b.y - a.y * b.x;
}

template <class T>
constexpr T dot(const Vec2<T>& a, const Vec2<T>& b) {
    return a.x * b.x + a.y * b.y;
}

template <class T>
using Rgb = std::array<T, 3>;

template <class To, class From>
Vec2<To> vec_cast(const Vec2<From>& v) {
    return {static_cast<To>(v.x), static_cast<To>(v.y)};
}

template <class To, class From>
Rgb<To> rgb_cast(const Rgb<From>& c) {
    return {static_cast<To>(c[0]), static_cast<To>(c[1]), static_cast<To>(c[2])};
}

/// Row-major H x W x 3 image. Channel values are nominally in [0, 1].
template <class T>
class Image {
public:
    Image() = default;
    Image(int width, int height, T fill = T(0))
        : width_(width), height_(height),
          data_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3, fill) {
        if (width < 0 || height < 0) throw std::invalid_argument("image dimensions must be non-negative");
    }

    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }
    std::size_t size() const { return data_.size(); }

    T& at(int x, int y, int c) { return data_[index(x, y) * 3 + c]; }
    const T& at(int x, int y, int c) const { return data_[index(x, y) * 3 + c]; }
    T* pixel(int x, int y) { return data_.data() + index(x, y) * 3; }
    const T* pixel(int x, int y) const { return data_.data() + index(x, y) * 3; }

    std::vector<T>& data() { return data_; }
    const std::vector<T>& data() const { return data_; }

    bool same_shape(const Image& o) const { return width_ == o.width_ && height_ == o.height_; }

    template <class U>
    Image<U> cast() const {
        Image<U> out(width_, height_);
        for (std::size_t i = 0; i < data_.size(); ++i) out.data()[i] = static_cast<U>(data_[i]);
        return out;
    }

private:
    std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width_ + x; }

    int width_ = 0;
    int height_ = 0;
    std::vector<T> data_;
};

class IoError : public std::runtime_error {
public:
    IoError(const std::string& path, const std::string& what)
        : std::runtime_error(what + ": " + path), path_(path) {}
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

/// Malformed, truncated or invariant-violating persisted data.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class UnsupportedVersion : public FormatError {
public:
    using FormatError::FormatError;
};

} // namespace bsplat
