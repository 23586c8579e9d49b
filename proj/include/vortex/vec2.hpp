#pragma once

#include <cmath>

namespace vortex {

/// Plane vector. Everything in the library is 2D double precision.
struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    constexpr Vec2() = default;
    constexpr Vec2(double x_, double y_) : x(x_), y(y_) {}

    constexpr Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
    constexpr Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
    constexpr Vec2 operator-() const { return {-x, -y}; }
    constexpr Vec2 operator*(double s) const { return {x * s, y * s}; }
    constexpr Vec2 operator/(double s) const { return {x / s, y / s}; }
    Vec2& operator+=(Vec2 o) {
        x += o.x;
        y += o.y;
        return *this;
    }
    Vec2& operator-=(Vec2 o) {
        x -= o.x;
        y -= o.y;
        return *this;
    }
    Vec2& operator*=(double s) {
        x *= s;
        y *= s;
        return *this;
    }
    constexpr bool operator==(const Vec2&) const = default;

    /// Counter-clockwise quarter turn: (x, y) -> (-y, x).
    constexpr Vec2 perp() const { return {-y, x}; }

    constexpr double dot(Vec2 o) const { return x * o.x + y * o.y; }
    constexpr double norm_sq() const { return x * x + y * y; }
    double norm() const { return std::hypot(x, y); }

    bool is_finite() const { return std::isfinite(x) && std::isfinite(y); }
};

constexpr Vec2 operator*(double s, Vec2 v) { return v * s; }

}  // namespace vortex
