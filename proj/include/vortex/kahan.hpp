#pragma once

#include <cstddef>
#include <span>

#include "vortex/vec2.hpp"

namespace vortex {

/// Kahan-compensated accumulator. Conservation checks in this code base rely
/// on sums of O(1e5) terms staying exact to ~1e-15 relative, which plain
/// left-to-right accumulation does not guarantee.
class KahanSum {
  public:
    KahanSum() = default;
    explicit KahanSum(double init) : sum_(init) {}

    void add(double v) {
        const double y = v - comp_;
        const double t = sum_ + y;
        comp_ = (t - sum_) - y;
        sum_ = t;
    }

    KahanSum& operator+=(double v) {
        add(v);
        return *this;
    }

    double value() const { return sum_; }

  private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

class KahanSum2 {
  public:
    void add(Vec2 v) {
        x_.add(v.x);
        y_.add(v.y);
    }
    Vec2 value() const { return {x_.value(), y_.value()}; }

  private:
    KahanSum x_;
    KahanSum y_;
};

inline double kahan_total(std::span<const double> values) {
    KahanSum s;
    for (double v : values) s.add(v);
    return s.value();
}

}  // namespace vortex
