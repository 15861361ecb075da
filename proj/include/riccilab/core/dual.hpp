#pragma once

#include <cmath>

namespace riccilab {

/// Forward-mode dual number: value and one directional derivative.
struct Dual {
    double v = 0.0;
    double d = 0.0;

    constexpr Dual() = default;
    constexpr Dual(double value, double deriv = 0.0) : v(value), d(deriv) {}

    friend constexpr Dual operator+(Dual a, Dual b) { return {a.v + b.v, a.d + b.d}; }
    friend constexpr Dual operator-(Dual a, Dual b) { return {a.v - b.v, a.d - b.d}; }
    friend constexpr Dual operator-(Dual a) { return {-a.v, -a.d}; }
    friend constexpr Dual operator*(Dual a, Dual b) { return {a.v * b.v, a.d * b.v + a.v * b.d}; }
    friend constexpr Dual operator/(Dual a, Dual b) {
        return {a.v / b.v, (a.d * b.v - a.v * b.d) / (b.v * b.v)};
    }
    friend constexpr Dual operator*(double s, Dual a) { return {s * a.v, s * a.d}; }
    friend constexpr Dual operator*(Dual a, double s) { return {s * a.v, s * a.d}; }
    friend constexpr Dual operator+(double s, Dual a) { return {s + a.v, a.d}; }
    friend constexpr Dual operator+(Dual a, double s) { return {s + a.v, a.d}; }
    friend constexpr Dual operator-(double s, Dual a) { return {s - a.v, -a.d}; }
    friend constexpr Dual operator-(Dual a, double s) { return {a.v - s, a.d}; }
    friend constexpr Dual operator/(Dual a, double s) { return {a.v / s, a.d / s}; }
};

}  // namespace riccilab
