#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "errors.hpp"
#include "forcing.hpp"
#include "linalg.hpp"
#include "spectral.hpp"

namespace cutin {

// Fixed-step RK4 for y' = f(t, y, y(t - theta)) by the method of steps.
//
// Delayed values come from cubic Hermite interpolation of the stored steps,
// using the one-sided derivatives at each node so kinks from discontinuous
// inputs are not smeared. Stage times are kept strictly inside the step so a
// piecewise-constant input is sampled on the correct side of its jumps.
template <int Dim>
class DelayIntegrator {
public:
    using State = Eigen::Matrix<double, Dim, 1>;
    using Rhs = std::function<State(double t, const State& y, const State& y_delayed)>;
    using Hist = std::function<State(double t)>;

    DelayIntegrator(Rhs f, Hist history, double t0, double theta, double dt)
        : f_(std::move(f)), hist_(std::move(history)), t0_(t0), theta_(theta) {
        if (!(dt > 0) || !std::isfinite(dt)) throw ValidationError("DelayIntegrator: dt must be > 0");
        if (!(theta >= 0) || !std::isfinite(theta)) throw ValidationError("DelayIntegrator: theta must be >= 0");
        // Delayed arguments must never reach into the step being taken.
        h_ = theta > 0 ? std::min(dt, theta) : dt;
        if (theta > 0 && h_ < dt) {
            int sub = int(std::ceil(dt / theta - 1e-12));
            h_ = dt / sub;
        }
        t_.push_back(t0);
        y_.push_back(hist_(t0));
        dl_.push_back(State::Zero());
        dr_.push_back(State::Zero());
    }

    DelayIntegrator(Rhs f, Hist history, const State& y0, double t0, double theta, double dt)
        : DelayIntegrator(std::move(f), std::move(history), t0, theta, dt) {
        y_[0] = y0;
    }

    double step_size() const { return h_; }
    double t_end() const { return t_.back(); }
    const std::vector<double>& times() const { return t_; }
    const std::vector<State>& states() const { return y_; }

    void advance_to(double t_final) {
        const double eps = 1e-9 * h_;
        while (t_.back() < t_final - 1e-12 * std::max(1.0, std::abs(t_final))) {
            const double t = t_.back();
            const double h = std::min(h_, t_final - t);
            const State y = y_.back();
            const double lo = t + 1e-9 * h, hi = t + h - 1e-9 * h;
            auto clampt = [&](double s) { return std::min(std::max(s, lo), hi); };
            auto rhs = [&](double s, const State& ys) {
                double sc = clampt(s);
                return f_(sc, ys, delayed(sc, ys));
            };
            State k1 = rhs(t, y);
            State k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1);
            State k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2);
            State k4 = rhs(t + h, y + h * k3);
            State yn = y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            dr_.back() = k1;
            t_.push_back(t + h);
            y_.push_back(yn);
            // Left derivative at the new node.
            dl_.push_back(f_(t + h - eps, yn, delayed(t + h - eps, yn)));
            dr_.push_back(dl_.back());
        }
    }

    // Dense output on [t0, t_end]; the history before t0.
    State at(double t) const {
        if (t <= t0_) return t == t0_ ? y_.front() : hist_(t);
        if (t >= t_.back()) return y_.back();
        auto it = std::upper_bound(t_.begin(), t_.end(), t);
        std::size_t i = std::size_t(it - t_.begin()) - 1;
        return hermite(i, t);
    }

private:
    State hermite(std::size_t i, double t) const {
        const double a = t_[i], b = t_[i + 1], h = b - a;
        const double s = (t - a) / h;
        const double h00 = (1 + 2 * s) * (1 - s) * (1 - s);
        const double h10 = s * (1 - s) * (1 - s);
        const double h01 = s * s * (3 - 2 * s);
        const double h11 = s * s * (s - 1);
        return h00 * y_[i] + h10 * h * dr_[i] + h01 * y_[i + 1] + h11 * h * dl_[i + 1];
    }

    State delayed(double t, const State& y_now) const {
        if (theta_ == 0.0) return y_now;
        const double td = t - theta_;
        if (td < t0_) return hist_(td);
        if (td >= t_.back()) return y_.back();
        return at(td);
    }

    Rhs f_;
    Hist hist_;
    double t0_;
    double theta_;
    double h_;
    std::vector<double> t_;
    std::vector<State> y_;
    std::vector<State> dl_;  // derivative approaching each node from the left
    std::vector<State> dr_;  // derivative leaving each node to the right
};

// Sampled trajectory of the 3-state error dynamics with dense evaluation.
struct StateTrajectory {
    std::vector<double> t;
    std::vector<Vec3> x;
    std::function<Vec3(double)> dense;

    Vec3 at(double s) const { return dense(s); }
};

// Independent check on the spectral solution: integrates
// x' = A x + B K x(t - theta) + D a(t) from t = 0 with history on [-theta, 0].
inline StateTrajectory integrate_oracle(const SystemMatrices& sys, double theta, const History& history,
                                        const PiecewiseConstant& forcing, double horizon, double dt,
                                        const Vec3* x_at_0 = nullptr) {
    if (!(horizon >= 0)) throw ValidationError("integrate_oracle: horizon must be >= 0");
    const Mat3 a = sys.A, bk = sys.BK();
    const Vec3 d = sys.D;
    auto f = [a, bk, d, forcing](double t, const Vec3& x, const Vec3& xd) -> Vec3 {
        return a * x + bk * xd + d * forcing(t);
    };
    auto hist = [history](double t) -> Vec3 { return history(t); };
    Vec3 x0 = x_at_0 ? *x_at_0 : history(0.0);
    auto integ = std::make_shared<DelayIntegrator<3>>(f, hist, x0, 0.0, theta, dt);
    integ->advance_to(horizon);

    StateTrajectory tr;
    const int n = int(std::llround(horizon / dt));
    for (int i = 0; i <= n; ++i) {
        double s = std::min(horizon, i * dt);
        tr.t.push_back(s);
        tr.x.push_back(integ->at(s));
    }
    tr.dense = [integ](double s) { return integ->at(s); };
    return tr;
}

}  // namespace cutin
