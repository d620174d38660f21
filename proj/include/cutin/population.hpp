#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <json.hpp>

#include "io.hpp"
#include "params.hpp"
#include "rng.hpp"

namespace cutin {

inline constexpr const char* kParamHeader = "id,ks,kv,ka,tau,l,TL";
inline constexpr std::array<const char*, 6> kParamNames{"ks", "kv", "ka", "tau", "l", "TL"};

inline double& param_ref(ParamSet& p, std::size_t i) {
    switch (i) {
        case 0: return p.ks;
        case 1: return p.kv;
        case 2: return p.ka;
        case 3: return p.tau;
        case 4: return p.l;
        default: return p.TL;
    }
}
inline double param_get(const ParamSet& p, std::size_t i) { return param_ref(const_cast<ParamSet&>(p), i); }

// Truncated normal for one parameter.
struct ParamDist {
    double center = 0.0;
    double spread = 0.0;  // standard deviation before truncation
    double lo = -HUGE_VAL;
    double hi = HUGE_VAL;
};

struct SamplerSpec {
    std::array<ParamDist, 6> dist;  // in kParamNames order
    std::size_t count = 1;
    std::uint64_t seed = 0;

    // Nominal calibration as centers, spreads of 20 % of each magnitude,
    // truncated at two spreads from the center.
    static SamplerSpec defaults(std::size_t count = 334, std::uint64_t seed = 20240527) {
        SamplerSpec s;
        ParamSet c;
        for (std::size_t i = 0; i < 6; ++i) {
            double m = param_get(c, i);
            double sd = 0.2 * std::abs(m);
            s.dist[i] = {m, sd, m - 2 * sd, m + 2 * sd};
        }
        s.count = count;
        s.seed = seed;
        return s;
    }

    // Same centers with every spread multiplied by `factor`.
    SamplerSpec widened(double factor) const {
        SamplerSpec s = *this;
        for (auto& d : s.dist) {
            d.spread *= factor;
            double half_lo = d.center - d.lo, half_hi = d.hi - d.center;
            d.lo = d.center - half_lo * factor;
            d.hi = d.center + half_hi * factor;
        }
        s.clamp_to_invariants();
        return s;
    }

    void clamp_to_invariants() {
        dist[3].lo = std::max(dist[3].lo, 1e-3);
        dist[5].lo = std::max(dist[5].lo, 1e-3);
        dist[4].lo = std::max(dist[4].lo, 0.0);
    }

    void validate() const {
        if (count == 0) throw ValidationError("SamplerSpec: count must be >= 1");
        for (std::size_t i = 0; i < 6; ++i) {
            const auto& d = dist[i];
            std::string n = kParamNames[i];
            if (!std::isfinite(d.center) || !(d.spread >= 0) || !std::isfinite(d.spread))
                throw ValidationError("SamplerSpec." + n + ": center/spread invalid");
            if (!(d.lo <= d.hi)) throw ValidationError("SamplerSpec." + n + ": empty truncation interval");
            if (d.spread == 0 && (d.center < d.lo || d.center > d.hi))
                throw ValidationError("SamplerSpec." + n + ": degenerate center outside bounds");
        }
        if (!(dist[3].lo > 0) || !(dist[5].lo > 0))
            throw ValidationError("SamplerSpec: tau and TL truncation must be strictly positive");
        if (!(dist[4].lo >= 0)) throw ValidationError("SamplerSpec: l truncation must be >= 0");
        for (std::size_t i = 0; i < 6; ++i) {
            const auto& d = dist[i];
            if (d.spread == 0) continue;
            boost::math::normal nd(d.center, d.spread);
            double mass = (std::isfinite(d.hi) ? boost::math::cdf(nd, d.hi) : 1.0) -
                          (std::isfinite(d.lo) ? boost::math::cdf(nd, d.lo) : 0.0);
            if (!(mass > 1e-9))
                throw ValidationError(std::string("SamplerSpec.") + kParamNames[i] + ": truncation has no mass");
        }
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["count"] = count;
        j["seed"] = seed;
        j["distribution"] = "independent truncated normal";
        for (std::size_t i = 0; i < 6; ++i)
            j["params"][kParamNames[i]] = {{"center", dist[i].center},
                                           {"spread", dist[i].spread},
                                           {"lo", fmt(dist[i].lo)},
                                           {"hi", fmt(dist[i].hi)}};
        return j;
    }
};

struct Provenance {
    enum class Kind { file, synthetic } kind = Kind::file;
    std::string source;  // file path for Kind::file
    SamplerSpec spec;    // for Kind::synthetic
};

struct Population {
    std::vector<std::string> ids;
    std::vector<ParamSet> sets;
    Provenance provenance;

    std::size_t size() const { return sets.size(); }
    bool empty() const { return sets.empty(); }

    void add(std::string id, const ParamSet& p) {
        ids.push_back(std::move(id));
        sets.push_back(p);
    }

    void validate() const {
        if (ids.size() != sets.size()) throw ValidationError("Population: ids/sets size mismatch");
        std::set<std::string> seen;
        for (std::size_t i = 0; i < sets.size(); ++i) {
            if (!seen.insert(ids[i]).second) throw ValidationError("Population: duplicate id " + ids[i]);
            try {
                sets[i].validate();
            } catch (const ValidationError& e) {
                throw ValidationError("Population set " + ids[i] + ": " + e.what());
            }
        }
    }

    Population subset(const std::vector<std::size_t>& idx) const {
        Population out;
        out.provenance = provenance;
        for (std::size_t i : idx) out.add(ids[i], sets[i]);
        return out;
    }

    nlohmann::json provenance_json() const {
        nlohmann::json j;
        j["count"] = sets.size();
        if (provenance.kind == Provenance::Kind::synthetic) {
            j["kind"] = "synthetic";
            j["note"] = "synthetic stand-in, not a calibrated population";
            j["sampler"] = provenance.spec.to_json();
        } else {
            j["kind"] = "file";
            j["source"] = provenance.source;
        }
        return j;
    }
};

inline std::string to_csv(const Population& pop) {
    std::string s = std::string(kParamHeader) + "\n";
    for (std::size_t i = 0; i < pop.size(); ++i) {
        s += pop.ids[i];
        for (std::size_t j = 0; j < 6; ++j) s += "," + fmt(param_get(pop.sets[i], j));
        s += "\n";
    }
    return s;
}

inline Population parse_population(const std::string& text, const std::string& source) {
    std::istringstream is(text);
    std::string line;
    int row = 0;
    bool header = false;
    Population pop;
    pop.provenance.kind = Provenance::Kind::file;
    pop.provenance.source = source;
    while (std::getline(is, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        auto f = split_csv_line(line);
        if (!header) {
            std::string joined;
            for (std::size_t i = 0; i < f.size(); ++i) joined += (i ? "," : "") + f[i];
            if (joined != kParamHeader)
                throw ValidationError(source + ": row " + std::to_string(row) + ": expected header '" +
                                      kParamHeader + "'");
            header = true;
            continue;
        }
        if (f.size() != 7)
            throw ValidationError(source + ": row " + std::to_string(row) + ": expected 7 columns, got " +
                                  std::to_string(f.size()));
        ParamSet p;
        for (std::size_t j = 0; j < 6; ++j)
            param_ref(p, j) = parse_double(f[j + 1], source + ": row " + std::to_string(row) + ", column " +
                                                         kParamNames[j]);
        std::string id = f[0].empty() ? std::to_string(pop.size()) : f[0];
        try {
            p.validate();
        } catch (const ValidationError& e) {
            throw ValidationError(source + ": row " + std::to_string(row) + " (id " + id + "): " + e.what());
        }
        pop.add(id, p);
    }
    if (!header) throw ValidationError(source + ": empty file");
    if (pop.empty()) throw ValidationError(source + ": no parameter rows");
    pop.validate();
    return pop;
}

inline Population load(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw ValidationError("no such file: " + path.string());
    return parse_population(read_file(path), path.string());
}

inline void save(const Population& pop, const std::filesystem::path& path) { write_atomic(path, to_csv(pop)); }

// Independent truncated normals by inverse CDF, one keyed stream per
// (set, parameter), so any prefix of a population is stable under `count`.
inline Population synth_sample(const SamplerSpec& spec) {
    spec.validate();
    Population pop;
    pop.provenance.kind = Provenance::Kind::synthetic;
    pop.provenance.spec = spec;
    for (std::size_t i = 0; i < spec.count; ++i) {
        ParamSet p;
        for (std::size_t j = 0; j < 6; ++j) {
            const auto& d = spec.dist[j];
            double v = d.center;
            if (d.spread > 0) {
                auto g = keyed_stream(spec.seed, {i, j});
                boost::math::normal nd(d.center, d.spread);
                double plo = std::isfinite(d.lo) ? boost::math::cdf(nd, d.lo) : 0.0;
                double phi = std::isfinite(d.hi) ? boost::math::cdf(nd, d.hi) : 1.0;
                double u = plo + (phi - plo) * (0.5 + (uniform01(g) - 0.5) * (1.0 - 1e-12));
                v = boost::math::quantile(nd, std::min(std::max(u, 1e-300), 1.0 - 1e-16));
                v = std::min(std::max(v, d.lo), d.hi);
            }
            param_ref(p, j) = v;
        }
        pop.add(std::to_string(i), p);
    }
    pop.validate();
    return pop;
}

}  // namespace cutin
