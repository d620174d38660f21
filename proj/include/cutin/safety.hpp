#pragma once

#include <cmath>
#include <future>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "parallel.hpp"
#include "population.hpp"
#include "rng.hpp"
#include "scenario.hpp"

namespace cutin {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct TtcResult {
    double t_c_star = kInf;  // s after the cut-in, +inf without collision
    double inverse = 0.0;
    std::string param_index;

    bool collision() const { return std::isfinite(t_c_star); }

    static TtcResult make(double t, std::string id) {
        TtcResult r;
        r.t_c_star = t;
        r.inverse = std::isfinite(t) ? 1.0 / t : 0.0;
        r.param_index = std::move(id);
        return r;
    }
};

struct TtcOptions {
    double resolution = 1e-4;  // bisection tolerance, s
    bool early_exit = true;
};

namespace detail {

// True once the gap can no longer close. Worst-case braking: past every input
// change, the cut-in vehicle is not slower and the follower not accelerating;
// a_f then relaxes monotonically toward u_b <= 0, so the closing speed only
// falls. Full feedback: the gap is back above its equilibrium value and opening.
inline bool gap_settled(const ScenarioSolver& s, const Kinematics& k) {
    const auto& c = s.config();
    double quiet = std::max(c.profile.t2, s.t_switch());
    if (!(k.t > quiet)) return false;
    if (c.mode == ScenarioMode::worst_case_braking) return k.v_c - k.v_f >= 0 && k.a_f <= 0;
    const double eq_gap = s.params().equilibrium_spacing(k.v_f) - c.lprime;
    return k.gap >= eq_gap && k.v_c - k.v_f >= 0;
}

}  // namespace detail

// Earliest root of the gap after the cut-in: scan on the dt grid, then bisect.
inline TtcResult time_to_collision(const ScenarioConfig& cfg, const ParamSet& p,
                                   std::shared_ptr<const SpectralBasis> basis = nullptr, std::string id = {},
                                   const TtcOptions& opt = {}) {
    try {
        ScenarioSolver s(cfg, p, std::move(basis));
        Kinematics k = s.at(0.0);
        if (!(k.gap > 0)) throw ValidationError("time_to_collision: gap not positive at the cut-in instant");
        double t_prev = 0.0;
        const long n = long(std::ceil(cfg.horizon / cfg.dt - 1e-9));
        for (long i = 1; i <= n; ++i) {
            double t = std::min(cfg.horizon, double(i) * cfg.dt);
            k = s.at(t);
            if (k.gap <= 0) {
                double lo = t_prev, hi = t;
                while (hi - lo > opt.resolution) {
                    double mid = 0.5 * (lo + hi);
                    (s.gap(mid) > 0 ? lo : hi) = mid;
                }
                return TtcResult::make(hi, std::move(id));
            }
            if (opt.early_exit && detail::gap_settled(s, k)) break;
            t_prev = t;
        }
        return TtcResult::make(kInf, std::move(id));
    } catch (const ValidationError& e) {
        if (id.empty()) throw;
        throw ValidationError("set " + id + ": " + e.what());
    } catch (const NumericalError& e) {
        if (id.empty()) throw;
        throw NumericalError("set " + id + ": " + e.what(), e.residual());
    }
}

inline std::vector<double> default_gamma_grid() {
    std::vector<double> g;
    for (int i = 0; i <= 100; ++i) g.push_back(i / 100.0);
    return g;
}

struct SafetyAggregate {
    std::size_t M = 0;
    double expectation_inverse_ttc = 0.0;
    double collision_probability = 0.0;
    std::vector<std::pair<double, double>> cdf;  // (gamma, fraction with inverse <= gamma)
    std::size_t failures = 0;                    // excluded sets, if exclusion was requested
    std::vector<TtcResult> results;
};

// Mean of inverse TTC (0 for no collision), collision fraction and the
// empirical CDF of the inverse on `gamma`. The grid is extended by the largest
// inverse when it does not reach it, so the CDF always ends at 1.
inline SafetyAggregate aggregate(std::vector<TtcResult> results, std::vector<double> gamma = default_gamma_grid()) {
    if (results.empty()) throw ValidationError("aggregate: need at least one result");
    for (std::size_t i = 1; i < gamma.size(); ++i)
        if (!(gamma[i] > gamma[i - 1])) throw ValidationError("aggregate: gamma grid must increase");
    SafetyAggregate a;
    a.M = results.size();
    double sum = 0.0, max_inv = 0.0;
    std::size_t hits = 0;
    std::vector<double> inv;
    for (const auto& r : results) {
        if (r.collision() && !(r.t_c_star > 0)) throw ValidationError("aggregate: non-positive TTC");
        sum += r.inverse;
        hits += r.collision();
        max_inv = std::max(max_inv, r.inverse);
        inv.push_back(r.inverse);
    }
    a.expectation_inverse_ttc = sum / double(a.M);
    a.collision_probability = double(hits) / double(a.M);
    if (gamma.empty() || gamma.back() < max_inv) gamma.push_back(max_inv);
    std::sort(inv.begin(), inv.end());
    for (double g : gamma) {
        auto cnt = std::upper_bound(inv.begin(), inv.end(), g) - inv.begin();
        a.cdf.emplace_back(g, double(cnt) / double(a.M));
    }
    a.results = std::move(results);
    return a;
}

// Bernoulli trial for the anticipation: the prediction either holds (full
// anticipation) or is missed (pure delayed response).
inline double anticipation_outcome(double success_prob, std::mt19937_64& stream, double phi) {
    if (!(success_prob >= 0 && success_prob <= 1))
        throw ValidationError("anticipation_outcome: success probability must be in [0, 1]");
    return uniform01(stream) < success_prob ? phi : 0.0;
}

// Spectral bases shared by every scenario with the same set and delay.
class BasisCache {
public:
    explicit BasisCache(int N) : N_(N) {}

    std::shared_ptr<const SpectralBasis> get(std::size_t index, const ParamSet& p, double theta) {
        std::shared_future<std::shared_ptr<const SpectralBasis>> fut;
        std::promise<std::shared_ptr<const SpectralBasis>> prom;
        bool owner = false;
        {
            std::lock_guard<std::mutex> lk(mu_);
            auto key = std::make_pair(index, theta);
            auto it = map_.find(key);
            if (it == map_.end()) {
                fut = prom.get_future().share();
                map_.emplace(key, fut);
                owner = true;
            } else {
                fut = it->second;
            }
        }
        if (owner) {
            try {
                SpectralOptions so;
                so.N = N_;
                prom.set_value(std::make_shared<const SpectralBasis>(build_system(p), theta, so));
            } catch (...) {
                prom.set_exception(std::current_exception());
            }
        }
        return fut.get();
    }

private:
    int N_;
    std::mutex mu_;
    std::map<std::pair<std::size_t, double>, std::shared_future<std::shared_ptr<const SpectralBasis>>> map_;
};

struct SafetyOptions {
    std::vector<double> gamma = default_gamma_grid();
    std::size_t trials = 1;          // anticipation draws per set
    bool exclude_failures = false;   // default: any failed set fails the whole aggregate
    unsigned threads = 0;
    TtcOptions ttc;
};

namespace detail {

inline std::optional<TtcResult> run_trial(const ScenarioConfig& cfg, const Population& pop, std::size_t i,
                                          std::uint64_t cell, std::size_t trial, BasisCache& cache,
                                          const TtcOptions& topt, std::string* error) {
    ScenarioConfig c = cfg;
    auto g = keyed_stream(cfg.seed, {cell, i, trial});
    c.phi = anticipation_outcome(c.anticipation_success_prob, g, c.phi);
    try {
        std::shared_ptr<const SpectralBasis> basis;
        if (c.engine != Engine::stepped && ScenarioSolver::needs_basis(c)) basis = cache.get(i, pop.sets[i], c.theta);
        return time_to_collision(c, pop.sets[i], basis, pop.ids[i], topt);
    } catch (const Error& e) {
        *error = e.what();
        if (error->rfind("set ", 0) != 0) *error = "set " + pop.ids[i] + ": " + *error;
        return std::nullopt;
    }
}

inline SafetyAggregate finish(std::vector<std::optional<TtcResult>> rs, const std::vector<std::string>& errors,
                              const SafetyOptions& opt) {
    std::vector<TtcResult> ok;
    std::size_t failed = 0;
    for (std::size_t j = 0; j < rs.size(); ++j) {
        if (rs[j]) ok.push_back(std::move(*rs[j]));
        else if (!opt.exclude_failures) throw NumericalError(errors[j], 0.0);
        else ++failed;
    }
    auto a = aggregate(std::move(ok), opt.gamma);
    a.failures = failed;
    return a;
}

}  // namespace detail

// TTC statistics of one scenario over a population.
inline SafetyAggregate aggregate(const Population& pop, const ScenarioConfig& cfg, const SafetyOptions& opt = {},
                                 BasisCache* cache = nullptr) {
    if (pop.empty()) throw ValidationError("aggregate: population is empty");
    if (opt.trials == 0) throw ValidationError("aggregate: trials must be >= 1");
    cfg.validate();
    BasisCache local(cfg.N);
    BasisCache& bc = cache ? *cache : local;
    const std::size_t n = pop.size() * opt.trials;
    std::vector<std::string> errors(n);
    auto rs = parallel_map(
        n,
        [&](std::size_t j) {
            return detail::run_trial(cfg, pop, j / opt.trials, 0, j % opt.trials, bc, opt.ttc, &errors[j]);
        },
        opt.threads);
    return detail::finish(std::move(rs), errors, opt);
}

inline const std::vector<std::string>& sweep_axis_names() {
    static const std::vector<std::string> names{"ds_c", "dv_c", "ds_l", "dv_l", "theta", "phi"};
    return names;
}

struct SweepAxis {
    std::string name;
    double lo = 0.0, hi = 0.0, step = 1.0;

    void validate() const {
        const auto& names = sweep_axis_names();
        if (std::find(names.begin(), names.end(), name) == names.end())
            throw ValidationError("SweepAxis: unknown axis '" + name + "'");
        if (!(step > 0) || !std::isfinite(step)) throw ValidationError("SweepAxis " + name + ": step must be > 0");
        if (!(hi >= lo) || !std::isfinite(lo) || !std::isfinite(hi))
            throw ValidationError("SweepAxis " + name + ": need lo <= hi");
    }

    // Inclusive of both ends; values are lo + i*step rounded to 1e-9, the last
    // snapped to hi.
    std::vector<double> values() const {
        validate();
        long n = std::lround(std::floor((hi - lo) / step + 1e-9));
        std::vector<double> v;
        for (long i = 0; i <= n; ++i) v.push_back(std::round((lo + double(i) * step) * 1e9) / 1e9);
        if (std::abs(v.back() - hi) <= 1e-9 * std::max(1.0, std::abs(hi))) v.back() = hi;
        else v.push_back(hi);
        return v;
    }
};

struct SweepGrid {
    std::vector<SweepAxis> axes;
    ScenarioConfig base;

    void validate() const {
        if (axes.empty()) throw ValidationError("SweepGrid: no axes");
        for (std::size_t i = 0; i < axes.size(); ++i) {
            axes[i].validate();
            for (std::size_t j = 0; j < i; ++j)
                if (axes[j].name == axes[i].name) throw ValidationError("SweepGrid: duplicate axis " + axes[i].name);
        }
        base.validate();
    }

    // Full-factorial cells, last axis fastest.
    std::vector<std::vector<double>> cells() const {
        std::vector<std::vector<double>> vals;
        for (const auto& a : axes) vals.push_back(a.values());
        std::vector<std::vector<double>> out{{}};
        for (const auto& v : vals) {
            std::vector<std::vector<double>> next;
            for (const auto& prefix : out)
                for (double x : v) {
                    auto c = prefix;
                    c.push_back(x);
                    next.push_back(std::move(c));
                }
            out = std::move(next);
        }
        return out;
    }

    ScenarioConfig config_at(const std::vector<double>& coords) const {
        ScenarioConfig c = base;
        for (std::size_t i = 0; i < axes.size(); ++i) {
            const std::string& n = axes[i].name;
            double v = coords[i];
            if (n == "theta") c.theta = v;
            else if (n == "phi") c.phi = v;
            else {
                if (!c.deviations) c.deviations = InitialDeviations{};
                if (n == "ds_c") c.deviations->ds_c = v;
                else if (n == "dv_c") c.deviations->dv_c = v;
                else if (n == "ds_l") c.deviations->ds_l = v;
                else c.deviations->dv_l = v;
            }
        }
        return c;
    }
};

struct SweepCell {
    std::vector<double> coords;
    std::optional<SafetyAggregate> result;
    std::string error;
};

struct SweepResult {
    std::vector<std::string> axis_names;
    std::vector<SweepCell> cells;
};

inline SweepResult sweep(const SweepGrid& grid, const Population& pop, const SafetyOptions& opt = {}) {
    grid.validate();
    if (pop.empty()) throw ValidationError("sweep: population is empty");
    if (opt.trials == 0) throw ValidationError("sweep: trials must be >= 1");
    const auto coords = grid.cells();
    std::vector<ScenarioConfig> cfgs;
    for (const auto& c : coords) {
        cfgs.push_back(grid.config_at(c));
        cfgs.back().validate();
    }
    BasisCache cache(grid.base.N);
    const std::size_t per_cell = pop.size() * opt.trials;
    const std::size_t n = coords.size() * per_cell;
    std::vector<std::string> errors(n);
    auto rs = parallel_map(
        n,
        [&](std::size_t j) {
            std::size_t cell = j / per_cell, r = j % per_cell;
            return detail::run_trial(cfgs[cell], pop, r / opt.trials, cell, r % opt.trials, cache, opt.ttc,
                                     &errors[j]);
        },
        opt.threads);
    SweepResult out;
    for (const auto& a : grid.axes) out.axis_names.push_back(a.name);
    for (std::size_t cell = 0; cell < coords.size(); ++cell) {
        SweepCell sc{coords[cell], std::nullopt, {}};
        std::vector<std::optional<TtcResult>> part(rs.begin() + long(cell * per_cell),
                                                   rs.begin() + long((cell + 1) * per_cell));
        std::vector<std::string> errs(errors.begin() + long(cell * per_cell),
                                      errors.begin() + long((cell + 1) * per_cell));
        try {
            sc.result = detail::finish(std::move(part), errs, opt);
        } catch (const Error& e) {
            sc.error = e.what();
        }
        out.cells.push_back(std::move(sc));
    }
    return out;
}

namespace detail {
inline std::string csv_text(std::string s) {
    for (char& c : s)
        if (c == ',' || c == '\n' || c == '\r') c = ';';
    return s;
}
}  // namespace detail

inline std::string heatmap_csv(const SweepResult& r) {
    std::string s;
    for (const auto& n : r.axis_names) s += n + ",";
    s += "M,collision_probability,expectation_inverse_ttc,failures,error\n";
    for (const auto& c : r.cells) {
        for (double v : c.coords) s += fmt(v) + ",";
        if (c.result)
            s += std::to_string(c.result->M) + "," + fmt(c.result->collision_probability) + "," +
                 fmt(c.result->expectation_inverse_ttc) + "," + std::to_string(c.result->failures) + ",";
        else
            s += ",,,," + detail::csv_text(c.error);
        s += "\n";
    }
    return s;
}

inline std::string cdf_csv(const SafetyAggregate& a) {
    std::string s = "gamma,cdf\n";
    for (const auto& [g, c] : a.cdf) s += fmt(g) + "," + fmt(c) + "\n";
    return s;
}

// Counts of the inverse TTC: one row for exact zeros (no collision), then
// bins (lo, hi] of width `width` up to the largest value.
inline std::string histogram_csv(const SafetyAggregate& a, double width = 0.05) {
    if (!(width > 0)) throw ValidationError("histogram_csv: width must be > 0");
    std::size_t zeros = 0;
    double mx = 0.0;
    for (const auto& r : a.results) {
        zeros += r.inverse == 0.0;
        mx = std::max(mx, r.inverse);
    }
    std::string s = "bin_lo,bin_hi,count,fraction\n";
    s += "0,0," + std::to_string(zeros) + "," + fmt(double(zeros) / double(a.M)) + "\n";
    long nb = std::max(1L, long(std::ceil(mx / width - 1e-12)));
    std::vector<std::size_t> cnt(std::size_t(nb), 0);
    for (const auto& r : a.results) {
        if (r.inverse == 0.0) continue;
        long b = std::min(nb - 1, std::max(0L, long(std::ceil(r.inverse / width - 1e-12)) - 1));
        ++cnt[std::size_t(b)];
    }
    auto edge = [&](long b) { return std::round(double(b) * width * 1e9) / 1e9; };
    for (long b = 0; b < nb; ++b)
        s += fmt(edge(b)) + "," + fmt(edge(b + 1)) + "," + std::to_string(cnt[std::size_t(b)]) +
             "," + fmt(double(cnt[std::size_t(b)]) / double(a.M)) + "\n";
    return s;
}

inline std::string ttc_csv(const SafetyAggregate& a) {
    std::string s = "id,t_c_star,inverse\n";
    for (const auto& r : a.results) s += r.param_index + "," + fmt(r.t_c_star) + "," + fmt(r.inverse) + "\n";
    return s;
}

}  // namespace cutin
