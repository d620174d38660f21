#pragma once

#include <cmath>
#include <string>

#include "errors.hpp"
#include "linalg.hpp"

namespace cutin {

// Controller and vehicle parameters of one follower.
struct ParamSet {
    double ks = 0.26;   // spacing gain, 1/s^2
    double kv = 0.71;   // speed-difference gain, 1/s
    double ka = -1.31;  // acceleration gain
    double tau = 1.18;  // desired time gap, s
    double l = 7.64;    // standstill distance, m
    double TL = 0.37;   // actuation lag, s

    bool operator==(const ParamSet&) const = default;

    void validate() const {
        auto finite = [](double v, const char* name) {
            if (!std::isfinite(v)) throw ValidationError(std::string("ParamSet.") + name + " is not finite");
        };
        finite(ks, "ks");
        finite(kv, "kv");
        finite(ka, "ka");
        finite(tau, "tau");
        finite(l, "l");
        finite(TL, "TL");
        if (!(tau > 0)) throw ValidationError("ParamSet.tau must be > 0");
        if (!(TL > 0)) throw ValidationError("ParamSet.TL must be > 0");
        if (!(l >= 0)) throw ValidationError("ParamSet.l must be >= 0");
    }

    double equilibrium_spacing(double v) const { return v * tau + l; }
};

struct SystemMatrices {
    Mat3 A;
    Vec3 B;
    Vec3 D;
    Eigen::RowVector3d K;

    Mat3 BK() const { return B * K; }
};

//   x = [spacing deviation, speed difference, follower acceleration]
//   x' = A x + B K x(t - theta) + D a_leader
inline SystemMatrices build_system(const ParamSet& p) {
    p.validate();
    SystemMatrices s;
    s.A << 0.0, 1.0, -p.tau,
           0.0, 0.0, -1.0,
           0.0, 0.0, -1.0 / p.TL;
    s.B << 0.0, 0.0, 1.0 / p.TL;
    s.D << 0.0, 1.0, 0.0;
    s.K << p.ks, p.kv, p.ka;
    return s;
}

}  // namespace cutin
