#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "branch.hpp"
#include "oracle.hpp"
#include "parallel.hpp"
#include "population.hpp"

namespace cutin {

enum class StabilityMethod { no_delay_eig, lambert_branches, oracle_growth };

inline const char* to_string(StabilityMethod m) {
    switch (m) {
        case StabilityMethod::no_delay_eig: return "no_delay_eig";
        case StabilityMethod::lambert_branches: return "lambert_branches";
        default: return "oracle_growth";
    }
}

struct RootWitness {
    int k;  // branch, 0 for the delay-free eigenvalues
    cd root;
};

struct StabilityVerdict {
    bool stable = false;
    double rightmost_real_part = 0.0;
    std::vector<RootWitness> witnesses;
    StabilityMethod method = StabilityMethod::no_delay_eig;
};

struct StabilityOptions {
    double margin = 0.0;
    std::vector<int> branches{0, 1, -1};
    BranchOptions branch;
};

namespace detail {

inline StabilityVerdict verdict_from_roots(const std::vector<RootWitness>& roots, double margin,
                                           StabilityMethod method) {
    StabilityVerdict v;
    v.method = method;
    v.rightmost_real_part = -HUGE_VAL;
    for (const auto& r : roots) v.rightmost_real_part = std::max(v.rightmost_real_part, r.root.real());
    const double tie = 1e-9 * std::max(1.0, std::abs(v.rightmost_real_part));
    for (const auto& r : roots)
        if (r.root.real() >= v.rightmost_real_part - tie) v.witnesses.push_back(r);
    v.stable = v.rightmost_real_part < -margin;
    return v;
}

}  // namespace detail

// Eigenvalues of A + B K.
inline StabilityVerdict stable_no_delay(const ParamSet& p, double margin = 0.0) {
    auto sys = build_system(p);
    Eigen::EigenSolver<Mat3> es(Mat3(sys.A + sys.BK()));
    std::vector<RootWitness> roots;
    for (int i = 0; i < 3; ++i) roots.push_back({0, es.eigenvalues()(i)});
    return detail::verdict_from_roots(roots, margin, StabilityMethod::no_delay_eig);
}

// Rightmost eigenvalue over S_k for the configured branches (0 and +-1 by default).
inline StabilityVerdict stable_with_delay(const ParamSet& p, double theta, const StabilityOptions& opt = {}) {
    if (theta == 0.0) return stable_no_delay(p, opt.margin);
    auto sys = build_system(p);
    std::vector<RootWitness> roots;
    for (int k : opt.branches) {
        auto b = solve_branch(sys, theta, k, opt.branch);
        for (int i = 0; i < 3; ++i) roots.push_back({k, b.eigenvalues(i)});
    }
    return detail::verdict_from_roots(roots, opt.margin, StabilityMethod::lambert_branches);
}

enum class GrowthClass { stable, unstable, marginal };

inline const char* to_string(GrowthClass g) {
    switch (g) {
        case GrowthClass::stable: return "stable";
        case GrowthClass::unstable: return "unstable";
        default: return "marginal";
    }
}

struct GrowthOptions {
    double horizon = 200.0;
    double fit_window = 100.0;
    double dt = 0.01;
    double threshold = 1e-3;
};

struct GrowthResult {
    GrowthClass cls = GrowthClass::marginal;
    double rate = 0.0;  // fitted exponential rate of the envelope, 1/s
};

// Time-domain classification: perturb the spacing by 1 m, integrate with no
// input and fit the growth rate of the log-norm envelope over the final
// window (least squares through the per-second maxima).
inline GrowthResult oracle_growth(const ParamSet& p, double theta, const GrowthOptions& opt = {}) {
    auto sys = build_system(p);
    Vec3 x0(1.0, 0.0, 0.0);
    auto tr = integrate_oracle(sys, theta, History::constant(Vec3::Zero()), PiecewiseConstant::zero(),
                               opt.horizon, opt.dt, &x0);
    const double t_fit = opt.horizon - opt.fit_window;
    std::vector<double> ts, ls;
    double bucket_end = t_fit + 1.0, best = -HUGE_VAL, best_t = t_fit;
    for (std::size_t i = 0; i < tr.t.size(); ++i) {
        if (tr.t[i] < t_fit) continue;
        double n = tr.x[i].norm();
        if (!std::isfinite(n)) return {GrowthClass::unstable, HUGE_VAL};
        double l = n > 0 ? std::log(n) : -HUGE_VAL;
        if (tr.t[i] > bucket_end) {
            if (std::isfinite(best)) {
                ts.push_back(best_t);
                ls.push_back(best);
            }
            best = -HUGE_VAL;
            bucket_end += 1.0;
        }
        if (l > best) {
            best = l;
            best_t = tr.t[i];
        }
    }
    if (std::isfinite(best)) {
        ts.push_back(best_t);
        ls.push_back(best);
    }
    // Decayed to nothing (or to denormals): clearly stable.
    if (ts.size() < 3 || ls.back() < -600.0) return {GrowthClass::stable, -HUGE_VAL};
    double mt = 0, ml = 0;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        mt += ts[i];
        ml += ls[i];
    }
    mt /= double(ts.size());
    ml /= double(ts.size());
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        sxy += (ts[i] - mt) * (ls[i] - ml);
        sxx += (ts[i] - mt) * (ts[i] - mt);
    }
    GrowthResult g;
    g.rate = sxy / sxx;
    g.cls = g.rate > opt.threshold ? GrowthClass::unstable
            : g.rate < -opt.threshold ? GrowthClass::stable
                                      : GrowthClass::marginal;
    return g;
}

struct ScanRow {
    std::string id;
    ParamSet params;
    std::optional<StabilityVerdict> verdict;
    std::string error;
};

struct ScanResult {
    double theta = 0.0;
    std::vector<ScanRow> rows;  // input order
    std::vector<std::string> stable, unstable, failed;
};

// Classifies every set; failures are recorded per set and never abort the scan.
inline ScanResult stability_scan(const Population& pop, double theta, const StabilityOptions& opt = {},
                                 unsigned threads = 0) {
    if (pop.empty()) throw ValidationError("stability_scan: population is empty");
    if (!(theta >= 0) || !std::isfinite(theta)) throw ValidationError("stability_scan: theta must be >= 0");
    ScanResult res;
    res.theta = theta;
    res.rows = parallel_map(
        pop.size(),
        [&](std::size_t i) {
            ScanRow r{pop.ids[i], pop.sets[i], std::nullopt, {}};
            try {
                r.verdict = stable_with_delay(pop.sets[i], theta, opt);
            } catch (const Error& e) {
                r.error = e.what();
            }
            return r;
        },
        threads);
    for (const auto& r : res.rows) {
        if (!r.verdict) res.failed.push_back(r.id);
        else if (r.verdict->stable) res.stable.push_back(r.id);
        else res.unstable.push_back(r.id);
    }
    return res;
}

inline std::string scan_to_csv(const ScanResult& s) {
    std::string out = "id,ks,kv,ka,tau,l,TL,theta,status,rightmost_real,method,error\n";
    for (const auto& r : s.rows) {
        out += r.id;
        for (std::size_t j = 0; j < 6; ++j) out += "," + fmt(param_get(r.params, j));
        out += "," + fmt(s.theta);
        if (r.verdict) {
            out += r.verdict->stable ? ",stable," : ",unstable,";
            out += fmt(r.verdict->rightmost_real_part) + "," + to_string(r.verdict->method) + ",";
        } else {
            std::string msg = r.error;
            for (char& c : msg)
                if (c == ',' || c == '\n') c = ';';
            out += ",failed,,," + msg;
        }
        out += "\n";
    }
    return out;
}

// Sets whose delayed verdict is stable, in input order, optionally the first n.
inline Population filter_stable(const Population& pop, double theta, std::size_t n = SIZE_MAX,
                                const StabilityOptions& opt = {}, unsigned threads = 0) {
    auto scan = stability_scan(pop, theta, opt, threads);
    if (!scan.failed.empty()) throw NumericalError("filter_stable: classification failed for set " + scan.failed.front(), 0.0);
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < scan.rows.size() && keep.size() < n; ++i)
        if (scan.rows[i].verdict->stable) keep.push_back(i);
    return pop.subset(keep);
}

}  // namespace cutin
