#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>

#include "reachcas/common.hpp"

namespace rcas {

/// Closed interval [lo, hi].
struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    Interval() = default;
    Interval(double l, double h) : lo(l), hi(h) { require(l <= h, "interval lo > hi"); }
    static Interval point(double v) { return {v, v}; }

    double width() const { return hi - lo; }
    double mid() const { return 0.5 * (lo + hi); }
    bool contains(double v) const { return lo <= v && v <= hi; }
    bool contains(const Interval& o) const { return lo <= o.lo && o.hi <= hi; }
    bool intersects(const Interval& o) const { return lo <= o.hi && o.lo <= hi; }
    /// Overlap with nonzero measure (boundary touching does not count).
    bool overlaps_open(const Interval& o) const { return lo < o.hi && o.lo < hi; }

    Interval operator+(const Interval& o) const { return {lo + o.lo, hi + o.hi}; }
    Interval operator-(const Interval& o) const { return {lo - o.hi, hi - o.lo}; }
    Interval operator+(double v) const { return {lo + v, hi + v}; }
    Interval operator-(double v) const { return {lo - v, hi - v}; }

    Interval operator*(double k) const {
        return k >= 0 ? Interval{lo * k, hi * k} : Interval{hi * k, lo * k};
    }

    Interval operator*(const Interval& o) const {
        const double a = lo * o.lo, b = lo * o.hi, c = hi * o.lo, d = hi * o.hi;
        return {std::min(std::min(a, b), std::min(c, d)), std::max(std::max(a, b), std::max(c, d))};
    }
};

inline Interval hull(const Interval& a, const Interval& b) {
    return {std::min(a.lo, b.lo), std::max(a.hi, b.hi)};
}

/// Exact range of cos over [x.lo, x.hi].
inline Interval cos_range(const Interval& x) {
    if (x.width() >= 2.0 * std::numbers::pi) return {-1.0, 1.0};
    double lo = std::min(std::cos(x.lo), std::cos(x.hi));
    double hi = std::max(std::cos(x.lo), std::cos(x.hi));
    // cos attains +-1 at multiples of pi inside the interval
    const double k_lo = std::ceil(x.lo / std::numbers::pi);
    const double k_hi = std::floor(x.hi / std::numbers::pi);
    for (double k = k_lo; k <= k_hi; k += 1.0) {
        const double v = (std::fmod(std::abs(k), 2.0) < 0.5) ? 1.0 : -1.0;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    return {lo, hi};
}

inline Interval sin_range(const Interval& x) {
    return cos_range({x.lo - std::numbers::pi / 2.0, x.hi - std::numbers::pi / 2.0});
}

/// Wraps an angle to (-pi, pi].
inline double wrap_angle(double a) {
    a = std::remainder(a, 2.0 * std::numbers::pi);
    if (a <= -std::numbers::pi) a += 2.0 * std::numbers::pi;
    return a;
}

}  // namespace rcas
