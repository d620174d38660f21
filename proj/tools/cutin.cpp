#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <cutin/config.hpp>
#include <cutin/lambert_w.hpp>
#include <cutin/population.hpp>
#include <cutin/safety.hpp>
#include <cutin/scenario.hpp>
#include <cutin/stability.hpp>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cutin;

namespace {

struct Output {
    fs::path path;
    std::string content;
};

// Collected results of one command; nothing touches the disk until the
// command has finished without error.
struct Run {
    std::string command;
    std::vector<std::string> argv;
    json config = json::object();
    std::uint64_t seed = 0;
    std::vector<Output> outputs;
    fs::path manifest;

    void add(fs::path p, std::string content) { outputs.push_back({std::move(p), std::move(content)}); }

    void commit(double seconds) {
        json files = json::array();
        for (const auto& o : outputs) files.push_back(o.path.string());
        json m;
        m["command"] = command;
        m["argv"] = argv;
        m["version"] = kVersion;
        m["seed"] = seed;
        m["config"] = config;
        m["outputs"] = files;
        m["duration_s"] = seconds;
        for (const auto& o : outputs) write_atomic(o.path, o.content);
        write_atomic(manifest, m.dump(2) + "\n");
    }
};

struct PopulationFlags {
    std::string params;
    std::size_t synthetic = 0;
    std::uint64_t seed = 20240527;
    double spread_factor = 1.0;
    double filter_theta = -1.0;
    std::size_t take = 0;

    void add_to(CLI::App* app, bool with_filter) {
        app->add_option("--params", params, "parameter CSV (id,ks,kv,ka,tau,l,TL)");
        app->add_option("--synthetic", synthetic, "draw this many synthetic sets instead of reading --params");
        app->add_option("--sample-seed", seed, "seed of the synthetic sampler");
        app->add_option("--spread-factor", spread_factor, "multiplier on the default sampler spreads");
        if (with_filter) {
            app->add_option("--filter-theta", filter_theta, "keep sets stable at this delay (negative: no filter)");
            app->add_option("--take", take, "keep the first n sets after filtering (0: all)");
        }
    }

    Population resolve(json& cfg) const {
        Population pop;
        if (!params.empty() && synthetic > 0) throw ValidationError("--params and --synthetic are exclusive");
        if (!params.empty()) {
            pop = load(params);
        } else if (synthetic > 0) {
            auto spec = SamplerSpec::defaults(synthetic, seed);
            if (spread_factor != 1.0) spec = spec.widened(spread_factor);
            pop = synth_sample(spec);
        } else {
            pop.add("nominal", ParamSet{});
            pop.provenance.source = "built-in nominal set";
        }
        cfg["population"] = pop.provenance_json();
        if (filter_theta >= 0) {
            pop = filter_stable(pop, filter_theta, take == 0 ? SIZE_MAX : take);
            cfg["population"]["filter_stable_theta"] = filter_theta;
        } else if (take > 0 && take < pop.size()) {
            std::vector<std::size_t> idx(take);
            for (std::size_t i = 0; i < take; ++i) idx[i] = i;
            pop = pop.subset(idx);
        }
        cfg["population"]["take"] = take;
        cfg["population"]["used"] = pop.size();
        if (pop.empty()) throw ValidationError("population is empty after filtering");
        return pop;
    }
};

struct ScenarioFlags {
    std::string config;
    std::optional<double> theta, phi, ufb, anticipation;
    std::string mode, engine;
    std::optional<std::uint64_t> seed;

    void add_to(CLI::App* app) {
        app->add_option("--config", config, "scenario key-value file");
        app->add_option("--theta", theta, "sensing delay, s");
        app->add_option("--phi", phi, "anticipation, s");
        app->add_option("--ufb", ufb, "braking bound, m/s^2");
        app->add_option("--mode", mode, "full_feedback or worst_case_braking");
        app->add_option("--engine", engine, "auto, analytic or stepped");
        app->add_option("--anticipation-prob", anticipation, "probability that the anticipation is correct");
        app->add_option("--seed", seed, "seed for anticipation draws");
    }

    std::string read_config() const {
        if (!fs::exists(config)) throw ValidationError("no such file: " + config);
        return read_file(config);
    }

    ScenarioConfig resolve(ScenarioConfig base) const {
        ScenarioConfig c = config.empty() ? base : parse_scenario_config(read_config(), config, base);
        if (theta) c.theta = *theta;
        if (phi) c.phi = *phi;
        if (ufb) c.u_b = *ufb;
        if (anticipation) c.anticipation_success_prob = *anticipation;
        if (seed) c.seed = *seed;
        if (!mode.empty()) c.mode = parse_mode(mode);
        if (!engine.empty()) c.engine = parse_engine(engine);
        c.validate();
        return c;
    }
};

SweepAxis parse_axis(const std::string& s) {
    std::vector<std::string> parts;
    std::string cur;
    for (char ch : s) {
        if (ch == ':') {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    parts.push_back(cur);
    if (parts.size() != 4) throw ValidationError("--axis expects name:lo:hi:step, got '" + s + "'");
    SweepAxis a{parts[0], parse_double(parts[1], "--axis lo"), parse_double(parts[2], "--axis hi"),
                parse_double(parts[3], "--axis step")};
    a.validate();
    return a;
}

json axes_json(const std::vector<SweepAxis>& axes) {
    json j = json::array();
    for (const auto& a : axes) j.push_back({{"name", a.name}, {"lo", a.lo}, {"hi", a.hi}, {"step", a.step}});
    return j;
}

std::vector<double> gamma_grid(double hi, double step) {
    if (!(step > 0) || !(hi > 0)) throw ValidationError("gamma grid needs positive max and step");
    std::vector<double> g;
    long n = std::lround(std::floor(hi / step + 1e-9));
    for (long i = 0; i <= n; ++i) g.push_back(double(i) * step);
    return g;
}

ParamSet pick(const Population& pop, const std::string& id) {
    if (id.empty()) return pop.sets.front();
    for (std::size_t i = 0; i < pop.size(); ++i)
        if (pop.ids[i] == id) return pop.sets[i];
    throw ValidationError("no parameter set with id '" + id + "'");
}

std::vector<unsigned char> slurp(const fs::path& p) {
    auto s = read_file(p);
    return {s.begin(), s.end()};
}

int dispatch(const std::vector<std::string>& args) {
    CLI::App app{"Cut-in safety analysis for delayed and anticipatory ACC"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);
    unsigned threads = 0;
    app.add_option("--threads", threads, "worker threads (0: CUTIN_THREADS or all cores)");

    Run run;
    run.argv = args;
    std::function<void()> action;

    // simulate
    auto* sim = app.add_subcommand("simulate", "trajectory of one cut-in scenario");
    ScenarioFlags sim_sc;
    PopulationFlags sim_pop;
    std::string sim_id, sim_out = "trajectory.csv";
    sim_sc.add_to(sim);
    sim_pop.add_to(sim, false);
    sim->add_option("--id", sim_id, "parameter set id (default: first row)");
    sim->add_option("--out", sim_out, "trajectory CSV");
    sim->callback([&] {
        action = [&] {
            run.command = "simulate";
            ScenarioConfig c = sim_sc.resolve(ScenarioConfig{});
            Population pop = sim_pop.resolve(run.config);
            ParamSet p = pick(pop, sim_id);
            auto tr = simulate(c, p);
            auto mg = min_gap(tr);
            run.config["scenario"] = to_json(c);
            run.config["params"] = to_json(p);
            run.config["engine_used"] = to_string(tr.engine);
            run.config["notices"] = tr.notices;
            run.seed = c.seed;
            run.add(sim_out, trajectory_csv(tr));
            run.manifest = sim_out + ".manifest.json";
            for (const auto& n : tr.notices) std::cerr << "notice: " << n << "\n";
            const auto& last = tr.samples.back();
            std::printf("min_gap=%s m at t=%s s (report clock), collision=%s, final gap=%s m, engine=%s\n",
                        fmt(mg.value).c_str(), fmt(mg.time - c.t_l).c_str(), mg.collision ? "yes" : "no",
                        fmt(last.gap).c_str(), to_string(tr.engine));
        };
    });

    // stability
    auto* stab = app.add_subcommand("stability", "classify parameter sets at a sensing delay");
    PopulationFlags stab_pop;
    double stab_theta = 0.3, stab_margin = 0.0;
    std::string stab_out = "stability.csv";
    stab_pop.add_to(stab, false);
    stab->add_option("--theta", stab_theta, "sensing delay, s");
    stab->add_option("--margin", stab_margin, "required distance of the rightmost root from the axis");
    stab->add_option("--out", stab_out, "partition CSV");
    stab->callback([&] {
        action = [&] {
            run.command = "stability";
            Population pop = stab_pop.resolve(run.config);
            StabilityOptions so;
            so.margin = stab_margin;
            auto res = stability_scan(pop, stab_theta, so, threads);
            run.config["theta"] = stab_theta;
            run.config["margin"] = stab_margin;
            run.config["branches"] = so.branches;
            run.seed = stab_pop.seed;
            run.add(stab_out, scan_to_csv(res));
            run.manifest = stab_out + ".manifest.json";
            std::printf("theta=%s stable=%zu unstable=%zu failed=%zu method=%s\n", fmt(stab_theta).c_str(),
                        res.stable.size(), res.unstable.size(), res.failed.size(),
                        stab_theta == 0 ? "no_delay_eig" : "lambert_branches");
            for (const auto& r : res.rows)
                if (!r.verdict) std::cerr << "failed: " << r.id << ": " << r.error << "\n";
        };
    });

    // sweep
    auto* sw = app.add_subcommand("sweep", "collision statistics over a grid of scenarios");
    std::string sw_kind;
    ScenarioFlags sw_sc;
    PopulationFlags sw_pop;
    std::vector<std::string> sw_axes;
    std::size_t sw_trials = 1;
    bool sw_exclude = false;
    std::string sw_out = "heatmap.csv";
    sw->add_option("kind", sw_kind, "cutin, leader or delay-anticipation")
        ->required()
        ->check(CLI::IsMember({"cutin", "leader", "delay-anticipation"}));
    sw_sc.add_to(sw);
    sw_pop.add_to(sw, true);
    sw->add_option("--axis", sw_axes, "override or add an axis: name:lo:hi:step");
    sw->add_option("--trials", sw_trials, "anticipation draws per set");
    sw->add_flag("--exclude-failures", sw_exclude, "drop failed sets from the statistics instead of failing the cell");
    sw->add_option("--out", sw_out, "heatmap CSV");
    sw->callback([&] {
        action = [&] {
            run.command = "sweep " + sw_kind;
            ScenarioConfig base;
            base.mode = ScenarioMode::worst_case_braking;
            std::vector<SweepAxis> axes;
            if (sw_kind == "cutin") {
                base.deviations = InitialDeviations{0, 0, 5, 5};
                axes = {{"ds_c", -5, 0, 0.5}, {"dv_c", -5, 0, 0.5}};
            } else if (sw_kind == "leader") {
                base.deviations = InitialDeviations{-5, -5, 0, 0};
                axes = {{"ds_l", 0, 5, 0.5}, {"dv_l", 0, 5, 0.5}};
            } else {
                base.deviations = InitialDeviations{-5, -5, 5, 5};
                base.anticipation_success_prob = 0.997;
                axes = {{"theta", 0, 0.3, 0.1}, {"phi", 0, 2, 0.1}};
            }
            ScenarioConfig c = sw_sc.resolve(base);
            if (!c.deviations) c.deviations = base.deviations;
            for (const auto& s : sw_axes) {
                SweepAxis a = parse_axis(s);
                auto it = std::find_if(axes.begin(), axes.end(), [&](const SweepAxis& x) { return x.name == a.name; });
                if (it != axes.end()) *it = a;
                else axes.push_back(a);
            }
            PopulationFlags pf = sw_pop;
            if (pf.params.empty() && pf.synthetic == 0) pf.synthetic = 334;
            if (pf.filter_theta < 0 && pf.params.empty()) pf.filter_theta = 0.3;
            if (pf.take == 0 && pf.params.empty()) pf.take = sw_kind == "delay-anticipation" ? 200 : 50;
            Population pop = pf.resolve(run.config);
            SweepGrid grid{axes, c};
            SafetyOptions so;
            so.trials = sw_trials;
            so.exclude_failures = sw_exclude;
            so.threads = threads;
            auto res = sweep(grid, pop, so);
            run.config["scenario"] = to_json(c);
            run.config["axes"] = axes_json(axes);
            run.config["trials"] = sw_trials;
            run.config["exclude_failures"] = sw_exclude;
            run.seed = c.seed;
            run.add(sw_out, heatmap_csv(res));
            run.manifest = sw_out + ".manifest.json";
            std::size_t bad = 0;
            double pmax = 0.0;
            for (const auto& cell : res.cells) {
                if (!cell.result) ++bad;
                else pmax = std::max(pmax, cell.result->collision_probability);
            }
            std::printf("cells=%zu sets=%zu max_collision_probability=%s failed_cells=%zu\n", res.cells.size(),
                        pop.size(), fmt(pmax).c_str(), bad);
        };
    });

    // ttc-dist
    auto* td = app.add_subcommand("ttc-dist", "inverse TTC distribution of one scenario over a population");
    ScenarioFlags td_sc;
    PopulationFlags td_pop;
    double td_gmax = 1.0, td_gstep = 0.01, td_width = 0.05;
    std::size_t td_trials = 1;
    bool td_exclude = false;
    std::string td_prefix = "ttc";
    std::vector<double> td_dev;
    td_sc.add_to(td);
    td_pop.add_to(td, true);
    td->add_option("--deviations", td_dev, "ds_c dv_c ds_l dv_l at the analysis start")->expected(4);
    td->add_option("--gamma-max", td_gmax, "upper end of the CDF grid, 1/s");
    td->add_option("--gamma-step", td_gstep, "CDF grid step, 1/s");
    td->add_option("--bin-width", td_width, "histogram bin width, 1/s");
    td->add_option("--trials", td_trials, "anticipation draws per set");
    td->add_flag("--exclude-failures", td_exclude, "drop failed sets instead of failing");
    td->add_option("--out-prefix", td_prefix, "prefix for the _cdf, _hist and _sets CSVs");
    td->callback([&] {
        action = [&] {
            run.command = "ttc-dist";
            ScenarioConfig base;
            base.mode = ScenarioMode::worst_case_braking;
            ScenarioConfig c = td_sc.resolve(base);
            if (!td_dev.empty()) c.deviations = InitialDeviations{td_dev[0], td_dev[1], td_dev[2], td_dev[3]};
            c.validate();
            Population pop = td_pop.resolve(run.config);
            SafetyOptions so;
            so.gamma = gamma_grid(td_gmax, td_gstep);
            so.trials = td_trials;
            so.exclude_failures = td_exclude;
            so.threads = threads;
            auto agg = aggregate(pop, c, so);
            run.config["scenario"] = to_json(c);
            run.config["gamma"] = {{"max", td_gmax}, {"step", td_gstep}};
            run.config["bin_width"] = td_width;
            run.config["trials"] = td_trials;
            run.seed = c.seed;
            run.add(td_prefix + "_cdf.csv", cdf_csv(agg));
            run.add(td_prefix + "_hist.csv", histogram_csv(agg, td_width));
            run.add(td_prefix + "_sets.csv", ttc_csv(agg));
            run.manifest = td_prefix + ".manifest.json";
            std::printf("M=%zu collision_probability=%s expectation_inverse_ttc=%s excluded=%zu\n", agg.M,
                        fmt(agg.collision_probability).c_str(), fmt(agg.expectation_inverse_ttc).c_str(),
                        agg.failures);
        };
    });

    // lambert-plot
    auto* lp = app.add_subcommand("lambert-plot", "Lambert W branch values on a grid of arguments");
    std::vector<int> lp_branches{-2, -1, 0, 1, 2};
    std::string lp_grid = "-1:5:241", lp_out = "lambert.csv";
    double lp_imag = 0.0;
    lp->add_option("--branches", lp_branches, "branch indices")->delimiter(',');
    lp->add_option("--grid", lp_grid, "real part grid lo:hi:n (-1/e is always included when in range)");
    lp->add_option("--imag", lp_imag, "imaginary part of every argument");
    lp->add_option("--out", lp_out, "branch CSV");
    lp->callback([&] {
        action = [&] {
            run.command = "lambert-plot";
            auto parts = std::vector<std::string>{};
            std::string cur;
            for (char ch : lp_grid) {
                if (ch == ':') {
                    parts.push_back(cur);
                    cur.clear();
                } else {
                    cur += ch;
                }
            }
            parts.push_back(cur);
            if (parts.size() != 3) throw ValidationError("--grid expects lo:hi:n");
            double lo = parse_double(parts[0], "--grid lo"), hi = parse_double(parts[1], "--grid hi");
            double nd = parse_double(parts[2], "--grid n");
            if (!(hi > lo) || !(nd >= 2) || nd != std::floor(nd) || nd > 1e6)
                throw ValidationError("--grid needs lo < hi and an integer n >= 2");
            const long n = long(nd);
            std::vector<double> xs;
            for (long i = 0; i < n; ++i) xs.push_back(lo + (hi - lo) * double(i) / double(n - 1));
            const double bp = -std::exp(-1.0);
            if (lp_imag == 0.0 && bp >= lo && bp <= hi && std::find(xs.begin(), xs.end(), bp) == xs.end()) {
                xs.push_back(bp);
                std::sort(xs.begin(), xs.end());
            }
            std::string csv = "k,y_re,y_im,w_re,w_im,roundtrip\n";
            double worst = 0.0;
            std::size_t rows = 0;
            for (int k : lp_branches) {
                for (double x : xs) {
                    cd y(x, lp_imag);
                    if (y == cd(0, 0) && k != 0) continue;
                    cd w = lambert_w(k, y);
                    double err = std::abs(w * std::exp(w) - y) / std::max(1.0, std::abs(y));
                    worst = std::max(worst, err);
                    csv += std::to_string(k) + "," + fmt(x) + "," + fmt(lp_imag) + "," + fmt(w.real()) + "," +
                           fmt(w.imag()) + "," + fmt(err) + "\n";
                    ++rows;
                }
            }
            if (worst > 1e-10) throw NumericalError("lambert-plot: round-trip error " + fmt(worst), worst);
            run.config["branches"] = lp_branches;
            run.config["grid"] = {{"lo", lo}, {"hi", hi}, {"n", n}, {"imag", lp_imag}};
            run.add(lp_out, csv);
            run.manifest = lp_out + ".manifest.json";
            std::printf("rows=%zu max_relative_roundtrip=%s\n", rows, fmt(worst).c_str());
        };
    });

    // sample
    auto* sm = app.add_subcommand("sample", "draw a synthetic parameter population");
    std::size_t sm_count = 334;
    std::uint64_t sm_seed = 20240527;
    double sm_factor = 1.0;
    std::string sm_out = "population.csv";
    sm->add_option("--count", sm_count, "number of sets");
    sm->add_option("--seed", sm_seed, "sampler seed");
    sm->add_option("--spread-factor", sm_factor, "multiplier on the default spreads");
    sm->add_option("--out", sm_out, "population CSV (a .provenance.json sidecar is written next to it)");
    sm->callback([&] {
        action = [&] {
            run.command = "sample";
            auto spec = SamplerSpec::defaults(sm_count, sm_seed);
            if (sm_factor != 1.0) spec = spec.widened(sm_factor);
            auto pop = synth_sample(spec);
            run.config["sampler"] = spec.to_json();
            run.seed = sm_seed;
            run.add(sm_out, to_csv(pop));
            run.add(sm_out + ".provenance.json", pop.provenance_json().dump(2) + "\n");
            run.manifest = sm_out + ".manifest.json";
            std::printf("sets=%zu seed=%llu\n", pop.size(), static_cast<unsigned long long>(sm_seed));
        };
    });

    // replay
    auto* rp = app.add_subcommand("replay", "re-run the command recorded in a manifest");
    std::string rp_manifest;
    bool rp_verify = false;
    rp->add_option("manifest", rp_manifest, "manifest JSON")->required();
    rp->add_flag("--verify", rp_verify, "compare the regenerated outputs byte for byte with the recorded ones");
    int replay_status = 0;
    rp->callback([&] {
        action = [&] {
            if (!fs::exists(rp_manifest)) throw ValidationError("no such file: " + rp_manifest);
            json m;
            try {
                m = json::parse(read_file(rp_manifest));
            } catch (const json::exception& e) {
                throw ValidationError(rp_manifest + ": " + e.what());
            }
            if (!m.contains("argv") || !m["argv"].is_array()) throw ValidationError(rp_manifest + ": no argv");
            auto argv = m["argv"].get<std::vector<std::string>>();
            if (!argv.empty() && argv.front() == "replay") throw ValidationError("refusing to replay a replay");
            std::vector<std::pair<std::string, std::vector<unsigned char>>> before;
            if (rp_verify)
                for (const auto& f : m["outputs"]) {
                    std::string p = f.get<std::string>();
                    if (!fs::exists(p)) throw ValidationError("recorded output missing: " + p);
                    before.emplace_back(p, slurp(p));
                }
            replay_status = dispatch(argv);
            if (replay_status != 0 || !rp_verify) return;
            for (const auto& [p, bytes] : before) {
                bool same = slurp(p) == bytes;
                std::printf("%s %s\n", same ? "identical" : "DIFFERENT", p.c_str());
                if (!same) replay_status = 1;
            }
        };
    });

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    const auto t0 = std::chrono::steady_clock::now();
    try {
        action();
        if (run.command.empty()) return replay_status;
        run.commit(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        return 0;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DomainError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 1;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return dispatch(args);
}
