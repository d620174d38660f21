#pragma once

#include <algorithm>
#include <unordered_map>
#include <vector>

#include "errors.hpp"
#include "forcing.hpp"
#include "linalg.hpp"

namespace cutin {

// Exact solution of x' = M x + g + h a(t) for piecewise-constant a, from
// x(t0) = x0. States at the input breakpoints are precomputed; propagators
// for repeated step lengths are cached, so an instance is not thread-safe.
class LinearOde {
public:
    LinearOde(const Mat3& m, const Vec3& g, const Vec3& h, PiecewiseConstant a, double t0, const Vec3& x0)
        : m_(m), g_(g), h_(h), a_(std::move(a)), t0_(t0) {
        knots_.push_back(t0);
        states_.push_back(x0);
        for (double b : a_.breaks) {
            if (b <= t0) continue;
            states_.push_back(propagate(states_.back(), knots_.back(), b));
            knots_.push_back(b);
        }
    }

    double t0() const { return t0_; }

    Vec3 at(double t) const {
        if (t < t0_) throw ValidationError("LinearOde: t before origin");
        std::size_t i = std::size_t(std::upper_bound(knots_.begin(), knots_.end(), t) - knots_.begin()) - 1;
        return propagate(states_[i], knots_[i], t);
    }

    // d/dt x at t (right derivative at input jumps).
    Vec3 derivative(double t) const {
        const double eps = 1e-12 * std::max(1.0, std::abs(t));
        return m_ * at(t) + g_ + h_ * a_(t + eps);
    }

private:
    Vec3 propagate(const Vec3& x, double ta, double tb) const {
        double dt = tb - ta;
        if (dt == 0.0) return x;
        double av = a_(0.5 * (ta + tb));
        const auto& p = prop(dt);
        return p.first * x + p.second * (g_ + h_ * av);
    }

    const std::pair<Mat3, Mat3>& prop(double dt) const {
        auto it = cache_.find(dt);
        if (it != cache_.end()) return it->second;
        if (cache_.size() > 4096) cache_.clear();
        return cache_.emplace(dt, expm_and_integral(m_, dt)).first->second;
    }

    Mat3 m_;
    Vec3 g_, h_;
    PiecewiseConstant a_;
    double t0_;
    std::vector<double> knots_;
    std::vector<Vec3> states_;
    mutable std::unordered_map<double, std::pair<Mat3, Mat3>> cache_;
};

}  // namespace cutin
