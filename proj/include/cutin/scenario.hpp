#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "io.hpp"
#include "linear_ode.hpp"
#include "oracle.hpp"
#include "spectral.hpp"

namespace cutin {

// Acceleration of the cut-in vehicle, clock starting at the cut-in.
struct CutInProfile {
    double a1 = -2.0;
    double t1 = 2.0;
    double a2 = 2.0;
    double t2 = 5.0;

    void validate() const {
        if (!std::isfinite(a1) || !std::isfinite(a2)) throw ValidationError("CutInProfile: accelerations must be finite");
        if (!(t1 > 0) || !(t2 > t1)) throw ValidationError("CutInProfile: need 0 < t1 < t2");
    }

    static CutInProfile flat() { return {0.0, 2.0, 0.0, 5.0}; }

    PiecewiseConstant as_forcing() const { return {{0.0, t1, t2}, {a1, a2}, 0.0, 0.0}; }
};

// a1 on (0, t1], a2 on (t1, t2), zero elsewhere.
inline double cutin_accel(const CutInProfile& p, double t) {
    if (t > 0 && t <= p.t1) return p.a1;
    if (t > p.t1 && t < p.t2) return p.a2;
    return 0.0;
}

enum class ScenarioMode { full_feedback, worst_case_braking };
enum class Engine { automatic, analytic, stepped };

inline const char* to_string(ScenarioMode m) {
    return m == ScenarioMode::full_feedback ? "full_feedback" : "worst_case_braking";
}
inline const char* to_string(Engine e) {
    switch (e) {
        case Engine::automatic: return "auto";
        case Engine::analytic: return "analytic";
        default: return "stepped";
    }
}

// Initial deviations from equilibrium at the analysis start, used instead of
// absolute positions by the sensitivity sweeps.
struct InitialDeviations {
    double ds_c = 0.0, dv_c = 0.0;
    double ds_l = 0.0, dv_l = 0.0;
};

struct ScenarioConfig {
    double theta = 0.0;      // sensing delay, s
    double phi = 0.0;        // anticipation, s
    double t_l = -1.0;       // analysis start (cut-in at t = 0), s
    double u_b = -5.0;       // braking bound, m/s^2
    double u_max = 2.0;      // upper demand bound in full feedback, m/s^2
    bool saturate = true;    // clamp the demand in full feedback
    double lprime = 3.0;     // vehicle length, m
    double dt = 0.1;         // output grid and collision scan step, s
    double horizon = 60.0;   // end time, s
    ScenarioMode mode = ScenarioMode::full_feedback;
    Engine engine = Engine::automatic;
    double stepped_dt = 0.01;
    int N = 10;
    CutInProfile profile;
    PiecewiseConstant a_l;   // leader acceleration, absolute clock

    // Kinematics: leader and follower at t_l, cut-in vehicle at t = 0.
    double p_l0 = 100.0, v_l0 = 20.0;
    double p_f0 = 50.0, v_f0 = 20.0, a_f0 = 0.0;
    double p_c0 = 110.0, v_c0 = 20.0;
    std::optional<InitialDeviations> deviations;

    double anticipation_success_prob = 1.0;
    std::uint64_t seed = 0;

    double t_switch() const { return std::max(t_l, theta - phi); }

    void validate() const {
        auto fin = [](double v, const char* n) {
            if (!std::isfinite(v)) throw ValidationError(std::string("ScenarioConfig.") + n + " is not finite");
        };
        fin(theta, "theta");
        fin(phi, "phi");
        fin(t_l, "tl_start");
        fin(u_b, "ufb");
        fin(lprime, "lprime");
        fin(dt, "dt");
        fin(horizon, "horizon");
        if (!(theta >= 0)) throw ValidationError("ScenarioConfig.theta must be >= 0");
        if (!(phi >= 0)) throw ValidationError("ScenarioConfig.phi must be >= 0");
        if (!(t_l < 0)) throw ValidationError("ScenarioConfig.tl_start must be < 0");
        if (!(u_b <= 0)) throw ValidationError("ScenarioConfig.ufb must be <= 0");
        if (!(u_max >= 0)) throw ValidationError("ScenarioConfig.umax must be >= 0");
        if (!(dt > 0)) throw ValidationError("ScenarioConfig.dt must be > 0");
        if (!(stepped_dt > 0)) throw ValidationError("ScenarioConfig.stepped_dt must be > 0");
        if (!(lprime > 0)) throw ValidationError("ScenarioConfig.lprime must be > 0");
        if (!(horizon > 0)) throw ValidationError("ScenarioConfig.horizon must be > 0");
        if (N < 0) throw ValidationError("ScenarioConfig.N must be >= 0");
        if (!(anticipation_success_prob >= 0 && anticipation_success_prob <= 1))
            throw ValidationError("ScenarioConfig.anticipation_prob must be in [0, 1]");
        profile.validate();
        a_l.validate();
        if (!deviations) {
            if (!(p_l0 > p_f0)) throw ValidationError("ScenarioConfig: leader must start ahead of the follower");
            if (!(p_c0 + v_c0 * t_l > p_f0))
                throw ValidationError("ScenarioConfig: cut-in vehicle must start ahead of the follower");
        }
    }
};

// Absolute kinematics for one parameter set, deviations resolved.
struct ResolvedKinematics {
    double p_l0, v_l0, p_f0, v_f0, a_f0, p_c0, v_c0;
};

inline ResolvedKinematics resolve_kinematics(const ScenarioConfig& c, const ParamSet& p) {
    ResolvedKinematics k{c.p_l0, c.v_l0, c.p_f0, c.v_f0, c.a_f0, c.p_c0, c.v_c0};
    if (c.deviations) {
        const auto& d = *c.deviations;
        const double s_eq = p.equilibrium_spacing(c.v_f0);
        k.p_l0 = c.p_f0 + s_eq + d.ds_l;
        k.v_l0 = c.v_f0 + d.dv_l;
        k.v_c0 = c.v_f0 + d.dv_c;
        k.p_c0 = c.p_f0 + s_eq + d.ds_c - k.v_c0 * c.t_l;
    }
    return k;
}

struct Kinematics {
    double t;
    double p_l, v_l, a_l;
    double p_c, v_c, a_c;
    double p_f, v_f, a_f;
    Vec3 x_l, x_c;
    double gap;
};

namespace detail {

// Velocity and position increments of a piecewise-constant acceleration
// integrated from t0 to t.
inline std::pair<double, double> integrate_accel(const PiecewiseConstant& a, double t0, double t) {
    double dv = 0.0, dp = 0.0;
    for (const auto& pc : a.pieces(t0, t)) {
        double h = pc.hi - pc.lo;
        dp += dv * h + 0.5 * pc.value * h * h;
        dv += pc.value * h;
    }
    return {dv, dp};
}

}  // namespace detail

// Dense solution of one cut-in scenario for one parameter set.
class ScenarioSolver {
public:
    // `basis` may be supplied to share branch solves across scenarios with
    // the same parameters and delay.
    ScenarioSolver(const ScenarioConfig& cfg, const ParamSet& p,
                   std::shared_ptr<const SpectralBasis> basis = nullptr)
        : cfg_(cfg), p_(p), sys_(build_system(p)), kin_(resolve_kinematics(cfg, p)) {
        cfg_.validate();
        p_.validate();
        ac_ = cfg_.profile.as_forcing();
        ts_ = cfg_.t_switch();
        Engine e = cfg_.engine;
        if (e == Engine::stepped) {
            build_stepped();
            return;
        }
        try {
            build_analytic(std::move(basis));
            if (cfg_.mode == ScenarioMode::full_feedback && cfg_.saturate && demand_violates_bounds()) {
                if (e == Engine::analytic)
                    throw NumericalError("ScenarioSolver: demand leaves the saturation bounds", 0.0);
                notices_.push_back("demand saturates; switched to stepped integration");
                build_stepped();
            }
        } catch (const NumericalError& err) {
            if (e == Engine::analytic) throw;
            notices_.push_back(std::string("analytic path failed (") + err.what() + "); switched to stepped integration");
            build_stepped();
        }
    }

    // Whether the analytic path uses the delayed-system spectral basis.
    static bool needs_basis(const ScenarioConfig& c) {
        return c.theta > 0 && (c.t_switch() > c.t_l || c.mode == ScenarioMode::full_feedback);
    }

    ScenarioSolver(const ScenarioSolver&) = delete;
    ScenarioSolver& operator=(const ScenarioSolver&) = delete;

    const ScenarioConfig& config() const { return cfg_; }
    const ParamSet& params() const { return p_; }
    double t_switch() const { return ts_; }
    Engine engine() const { return stepped_ ? Engine::stepped : Engine::analytic; }
    const std::vector<std::string>& notices() const { return notices_; }
    const ResolvedKinematics& initial() const { return kin_; }

    double leader_accel(double t) const { return cfg_.a_l(t); }
    double cutin_acc(double t) const { return cutin_accel(cfg_.profile, t); }

    Kinematics at(double t) const {
        if (t < cfg_.t_l) throw ValidationError("ScenarioSolver: t before analysis start");
        Kinematics k;
        k.t = t;
        auto [dvl, dpl] = detail::integrate_accel(cfg_.a_l, cfg_.t_l, t);
        k.v_l = kin_.v_l0 + dvl;
        k.p_l = kin_.p_l0 + kin_.v_l0 * (t - cfg_.t_l) + dpl;
        k.a_l = cfg_.a_l(t);
        if (t <= 0) {
            k.v_c = kin_.v_c0;
            k.p_c = kin_.p_c0 + kin_.v_c0 * t;
        } else {
            auto [dvc, dpc] = detail::integrate_accel(ac_, 0.0, t);
            k.v_c = kin_.v_c0 + dvc;
            k.p_c = kin_.p_c0 + kin_.v_c0 * t + dpc;
        }
        k.a_c = cutin_acc(t);

        if (stepped_) {
            auto y = stepped_->at(t);
            k.p_f = y(4);
            k.v_f = y(5);
            k.a_f = y(6);
            k.p_l = y(0);
            k.v_l = y(1);
            k.p_c = y(2);
            k.v_c = y(3);
        } else if (t < ts_) {
            Vec3 xl = phase1_x_l(t);
            k.v_f = k.v_l - xl(1);
            k.p_f = k.p_l - xl(0) - p_.equilibrium_spacing(k.v_f);
            k.a_f = xl(2);
        } else {
            Vec3 xc = phase2_x_c(t);
            k.v_f = k.v_c - xc(1);
            k.p_f = k.p_c - xc(0) - p_.equilibrium_spacing(k.v_f);
            k.a_f = xc(2);
        }
        const double s_eq = p_.equilibrium_spacing(k.v_f);
        k.x_l = Vec3(k.p_l - k.p_f - s_eq, k.v_l - k.v_f, k.a_f);
        k.x_c = Vec3(k.p_c - k.p_f - s_eq, k.v_c - k.v_f, k.a_f);
        k.gap = k.p_c - k.p_f - cfg_.lprime;
        return k;
    }

    double gap(double t) const { return at(t).gap; }

    // Demand entering the actuator at time t, before saturation.
    double raw_demand(double t) const {
        if (cfg_.mode == ScenarioMode::worst_case_braking && t >= ts_) return cfg_.u_b;
        double td = std::max(t - cfg_.theta, cfg_.t_l);
        Kinematics k = at(td);
        return sys_.K * (t < ts_ ? k.x_l : k.x_c);
    }

private:
    Vec3 x_l0() const {
        return {kin_.p_l0 - kin_.p_f0 - p_.equilibrium_spacing(kin_.v_f0), kin_.v_l0 - kin_.v_f0, kin_.a_f0};
    }

    // x_c - x_l depends only on the leader and cut-in kinematics.
    Vec3 cut_offset(double t) const {
        auto [dvl, dpl] = detail::integrate_accel(cfg_.a_l, cfg_.t_l, t);
        double v_l = kin_.v_l0 + dvl, p_l = kin_.p_l0 + kin_.v_l0 * (t - cfg_.t_l) + dpl;
        double v_c = kin_.v_c0, p_c = kin_.p_c0 + kin_.v_c0 * t;
        if (t > 0) {
            auto [dvc, dpc] = detail::integrate_accel(ac_, 0.0, t);
            v_c += dvc;
            p_c += dpc;
        }
        return {p_c - p_l, v_c - v_l, 0.0};
    }

    Vec3 phase1_x_l(double t) const {
        if (ode1_) return ode1_->at(t);
        if (sol1_) return sol1_->eval(t - cfg_.t_l, al_local_);
        return x_l0();
    }

    // x_c before the switch, frozen before the analysis start.
    Vec3 phase1_x_c(double t) const {
        double tt = std::max(t, cfg_.t_l);
        return phase1_x_l(tt) + cut_offset(tt);
    }

    Vec3 phase2_x_c(double t) const {
        if (ode2_) return ode2_->at(t);
        return sol2_->eval(t - ts_, ac_local_);
    }

    void build_analytic(std::shared_ptr<const SpectralBasis> basis) {
        const double th = cfg_.theta;
        const Mat3 a = sys_.A, bk = sys_.BK();
        const Vec3 b = sys_.B, d = sys_.D;
        if (!basis && needs_basis(cfg_)) {
            SpectralOptions so;
            so.N = cfg_.N;
            basis = std::make_shared<const SpectralBasis>(sys_, th, so);
        }
        basis_ = basis;
        // Phase 1: follower tracks the original leader.
        if (ts_ > cfg_.t_l) {
            if (th == 0) {
                ode1_ = std::make_shared<LinearOde>(Mat3(a + bk), Vec3::Zero(), d, cfg_.a_l, cfg_.t_l, x_l0());
            } else {
                al_local_ = cfg_.a_l.shifted(cfg_.t_l);
                sol1_ = std::make_shared<SpectralSolution>(basis_, History::constant(x_l0()), x_l0());
            }
        }
        const Vec3 xs = ts_ > cfg_.t_l ? phase1_x_c(ts_) : Vec3(x_l0() + cut_offset(cfg_.t_l));
        // Phase 2: constant braking demand, or feedback on the cut-in vehicle.
        if (cfg_.mode == ScenarioMode::worst_case_braking) {
            ode2_ = std::make_shared<LinearOde>(a, Vec3(b * cfg_.u_b), d, ac_, ts_, xs);
        } else if (th == 0) {
            ode2_ = std::make_shared<LinearOde>(Mat3(a + bk), Vec3::Zero(), d, ac_, ts_, xs);
        } else {
            ac_local_ = ac_.shifted(ts_);
            History h;
            const double ts = ts_;
            h.f = [this, ts](double s) { return phase1_x_c(ts + s); };
            for (double bpt : {cfg_.t_l, 0.0, cfg_.profile.t1, cfg_.profile.t2}) {
                double local = bpt - ts;
                if (local > -th && local < 0) h.breaks.push_back(local);
            }
            for (double bpt : cfg_.a_l.breaks) {
                double local = bpt - ts;
                if (local > -th && local < 0) h.breaks.push_back(local);
            }
            sol2_ = std::make_shared<SpectralSolution>(basis_, std::move(h), xs);
        }
    }

    bool demand_violates_bounds() const {
        const double tol = 1e-9;
        const double step = std::min(cfg_.dt, 0.05);
        const int n = int(std::ceil((cfg_.horizon - cfg_.t_l) / step));
        for (int i = 0; i <= n; ++i) {
            double t = std::min(cfg_.horizon, cfg_.t_l + i * step);
            double u = raw_demand(t);
            if (u < cfg_.u_b - tol || u > cfg_.u_max + tol) return true;
        }
        return false;
    }

    // Seven-state integration: p_l v_l p_c v_c p_f v_f a_f.
    void build_stepped() {
        using Y = DelayIntegrator<7>::State;
        ode1_.reset();
        ode2_.reset();
        sol1_.reset();
        sol2_.reset();
        Y y0;
        y0 << kin_.p_l0, kin_.v_l0, kin_.p_c0 + kin_.v_c0 * cfg_.t_l, kin_.v_c0, kin_.p_f0, kin_.v_f0, kin_.a_f0;
        const ScenarioConfig c = cfg_;
        const ParamSet p = p_;
        const Eigen::RowVector3d K = sys_.K;
        const double ts = ts_;
        auto rhs = [c, p, K, ts](double t, const Y& y, const Y& yd) -> Y {
            const double s_eq = p.equilibrium_spacing(yd(5));
            double u;
            if (c.mode == ScenarioMode::worst_case_braking && t >= ts) {
                u = c.u_b;
            } else {
                Vec3 x = t < ts ? Vec3(yd(0) - yd(4) - s_eq, yd(1) - yd(5), yd(6))
                                : Vec3(yd(2) - yd(4) - s_eq, yd(3) - yd(5), yd(6));
                u = K * x;
                if (c.mode == ScenarioMode::full_feedback && c.saturate) u = std::min(std::max(u, c.u_b), c.u_max);
            }
            Y dy;
            dy << y(1), c.a_l(t), y(3), cutin_accel(c.profile, t), y(5), y(6), (u - y(6)) / p.TL;
            return dy;
        };
        auto hist = [y0](double) { return y0; };
        stepped_ = std::make_shared<DelayIntegrator<7>>(rhs, hist, y0, cfg_.t_l, cfg_.theta, cfg_.stepped_dt);
        std::vector<double> stops{ts_, 0.0, cfg_.profile.t1, cfg_.profile.t2};
        for (double b : cfg_.a_l.breaks) stops.push_back(b);
        std::sort(stops.begin(), stops.end());
        for (double s : stops)
            if (s > cfg_.t_l && s < cfg_.horizon) stepped_->advance_to(s);
        stepped_->advance_to(cfg_.horizon);
    }

    ScenarioConfig cfg_;
    ParamSet p_;
    SystemMatrices sys_;
    ResolvedKinematics kin_;
    PiecewiseConstant ac_, ac_local_, al_local_;
    double ts_ = 0.0;
    std::shared_ptr<const SpectralBasis> basis_;
    std::shared_ptr<LinearOde> ode1_, ode2_;
    std::shared_ptr<SpectralSolution> sol1_, sol2_;
    std::shared_ptr<DelayIntegrator<7>> stepped_;
    std::vector<std::string> notices_;
};

struct Trajectory {
    std::vector<Kinematics> samples;
    double t_switch = 0.0;
    double t_l = 0.0;
    double lprime = 0.0;
    Engine engine = Engine::analytic;
    std::vector<std::string> notices;

    std::size_t size() const { return samples.size(); }
};

// Samples the scenario on the dt grid from the analysis start to the horizon.
inline Trajectory simulate(const ScenarioConfig& cfg, const ParamSet& p,
                           std::shared_ptr<const SpectralBasis> basis = nullptr) {
    ScenarioSolver solver(cfg, p, std::move(basis));
    Trajectory tr;
    tr.t_switch = solver.t_switch();
    tr.t_l = cfg.t_l;
    tr.lprime = cfg.lprime;
    tr.engine = solver.engine();
    tr.notices = solver.notices();
    const long n = std::lround((cfg.horizon - cfg.t_l) / cfg.dt);
    for (long i = 0; i <= n; ++i) tr.samples.push_back(solver.at(std::min(cfg.horizon, cfg.t_l + double(i) * cfg.dt)));
    if (tr.samples.back().t < cfg.horizon) tr.samples.push_back(solver.at(cfg.horizon));
    return tr;
}

struct MinGap {
    double value;
    double time;
    bool collision;
};

// Smallest gap, refined by a parabola through the smallest sample and its neighbours.
inline MinGap min_gap(const Trajectory& tr) {
    if (tr.samples.empty()) throw ValidationError("min_gap: empty trajectory");
    std::size_t i = 0;
    for (std::size_t j = 1; j < tr.samples.size(); ++j)
        if (tr.samples[j].gap < tr.samples[i].gap) i = j;
    MinGap m{tr.samples[i].gap, tr.samples[i].t, false};
    if (i > 0 && i + 1 < tr.samples.size()) {
        double t0 = tr.samples[i - 1].t, t1 = tr.samples[i].t, t2 = tr.samples[i + 1].t;
        double g0 = tr.samples[i - 1].gap, g1 = tr.samples[i].gap, g2 = tr.samples[i + 1].gap;
        double d1 = (g1 - g0) / (t1 - t0), d2 = (g2 - g1) / (t2 - t1);
        double c2 = (d2 - d1) / (t2 - t0);
        if (c2 > 0) {
            double b1 = d1 - c2 * (t0 + t1);
            double tv = -b1 / (2 * c2);
            if (tv > t0 && tv < t2) {
                double gv = g0 + d1 * (tv - t0) + c2 * (tv - t0) * (tv - t1);
                if (gv < m.value) {
                    m.value = gv;
                    m.time = tv;
                }
            }
        }
    }
    m.collision = m.value < 0;
    return m;
}

// Columns: t (from the analysis start), kinematics, cut-in deviations, gap.
inline std::string trajectory_csv(const Trajectory& tr) {
    std::string s = "t,p_l,v_l,a_l,p_c,v_c,a_c,p_f,v_f,a_f,ds_c,dv_c,gap\n";
    for (const auto& k : tr.samples) {
        for (double v : {k.t - tr.t_l, k.p_l, k.v_l, k.a_l, k.p_c, k.v_c, k.a_c, k.p_f, k.v_f, k.a_f, k.x_c(0),
                         k.x_c(1), k.gap}) {
            s += fmt(v);
            s += ',';
        }
        s.back() = '\n';
    }
    return s;
}

}  // namespace cutin
