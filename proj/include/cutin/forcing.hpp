#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "errors.hpp"

namespace cutin {

// Scalar input that is constant between breakpoints.
// Value on (breaks[i], breaks[i+1]] is values[i]; `before` applies for
// t <= breaks.front() and `after` for t > breaks.back().
struct PiecewiseConstant {
    std::vector<double> breaks;
    std::vector<double> values;
    double before = 0.0;
    double after = 0.0;

    static PiecewiseConstant zero() { return {}; }
    static PiecewiseConstant constant(double v) { return {{}, {}, v, v}; }
    // value v for t > t0, `pre` before.
    static PiecewiseConstant step(double t0, double v, double pre = 0.0) { return {{t0}, {}, pre, v}; }

    void validate() const {
        if (breaks.empty() ? !values.empty() : values.size() + 1 != breaks.size())
            throw ValidationError("PiecewiseConstant: need one value per interval");
        for (std::size_t i = 1; i < breaks.size(); ++i)
            if (!(breaks[i] > breaks[i - 1])) throw ValidationError("PiecewiseConstant: breaks must increase");
    }

    double operator()(double t) const {
        if (breaks.empty() || t <= breaks.front()) return before;
        if (t > breaks.back()) return after;
        auto it = std::lower_bound(breaks.begin(), breaks.end(), t);
        return values[std::size_t(it - breaks.begin()) - 1];
    }

    bool is_zero() const {
        if (before != 0.0 || after != 0.0) return false;
        return std::all_of(values.begin(), values.end(), [](double v) { return v == 0.0; });
    }

    // g(t) = f(t + t0), i.e. the same signal in a clock starting at t0.
    PiecewiseConstant shifted(double t0) const {
        PiecewiseConstant out = *this;
        for (double& b : out.breaks) b -= t0;
        return out;
    }

    struct Piece {
        double lo, hi, value;
    };
    // Constant pieces covering [lo, hi], zero-length pieces dropped.
    std::vector<Piece> pieces(double lo, double hi) const {
        std::vector<Piece> out;
        if (!(hi > lo)) return out;
        double cur = lo;
        for (double b : breaks) {
            if (b <= cur) continue;
            if (b >= hi) break;
            out.push_back({cur, b, (*this)(0.5 * (cur + b))});
            cur = b;
        }
        out.push_back({cur, hi, (*this)(0.5 * (cur + hi))});
        return out;
    }
};

}  // namespace cutin
