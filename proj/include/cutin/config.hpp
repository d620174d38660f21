#pragma once

#include <charconv>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "scenario.hpp"

namespace cutin {

inline constexpr const char* kVersion = "1.0.0";

inline ScenarioMode parse_mode(const std::string& s) {
    if (s == "full_feedback" || s == "feedback") return ScenarioMode::full_feedback;
    if (s == "worst_case_braking" || s == "braking") return ScenarioMode::worst_case_braking;
    throw ValidationError("unknown mode '" + s + "' (full_feedback or worst_case_braking)");
}

inline Engine parse_engine(const std::string& s) {
    if (s == "auto") return Engine::automatic;
    if (s == "analytic") return Engine::analytic;
    if (s == "stepped") return Engine::stepped;
    throw ValidationError("unknown engine '" + s + "' (auto, analytic or stepped)");
}

namespace detail {

inline bool parse_bool(const std::string& s, const std::string& where) {
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw ValidationError(where + ": expected a boolean, got '" + s + "'");
}

inline std::uint64_t parse_u64(const std::string& s, const std::string& where) {
    std::uint64_t v = 0;
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size())
        throw ValidationError(where + ": expected a non-negative integer, got '" + s + "'");
    return v;
}

}  // namespace detail

// Applies one `key = value` setting. Keys follow the default-settings names
// (a1, a2, t1, t2, vf0, lprime, tl_start, dt, theta, phi, ufb, mode, seed)
// plus the remaining kinematics and solver controls.
inline void apply_setting(ScenarioConfig& c, const std::string& key, const std::vector<std::string>& vals,
                          const std::string& where) {
    auto one = [&]() -> const std::string& {
        if (vals.size() != 1) throw ValidationError(where + ": '" + key + "' takes one value");
        return vals[0];
    };
    auto num = [&] { return parse_double(one(), where + ": " + key); };
    auto list = [&] {
        std::vector<double> v;
        for (const auto& s : vals) v.push_back(parse_double(s, where + ": " + key));
        return v;
    };
    auto dev = [&]() -> InitialDeviations& {
        if (!c.deviations) c.deviations = InitialDeviations{};
        return *c.deviations;
    };
    static const std::map<std::string, std::function<void(ScenarioConfig&, double)>> numeric{
        {"a1", [](ScenarioConfig& c, double v) { c.profile.a1 = v; }},
        {"a2", [](ScenarioConfig& c, double v) { c.profile.a2 = v; }},
        {"t1", [](ScenarioConfig& c, double v) { c.profile.t1 = v; }},
        {"t2", [](ScenarioConfig& c, double v) { c.profile.t2 = v; }},
        {"vf0", [](ScenarioConfig& c, double v) { c.v_f0 = v; }},
        {"lprime", [](ScenarioConfig& c, double v) { c.lprime = v; }},
        {"tl_start", [](ScenarioConfig& c, double v) { c.t_l = v; }},
        {"dt", [](ScenarioConfig& c, double v) { c.dt = v; }},
        {"theta", [](ScenarioConfig& c, double v) { c.theta = v; }},
        {"phi", [](ScenarioConfig& c, double v) { c.phi = v; }},
        {"ufb", [](ScenarioConfig& c, double v) { c.u_b = v; }},
        {"umax", [](ScenarioConfig& c, double v) { c.u_max = v; }},
        {"horizon", [](ScenarioConfig& c, double v) { c.horizon = v; }},
        {"stepped_dt", [](ScenarioConfig& c, double v) { c.stepped_dt = v; }},
        {"pl0", [](ScenarioConfig& c, double v) { c.p_l0 = v; }},
        {"vl0", [](ScenarioConfig& c, double v) { c.v_l0 = v; }},
        {"pf0", [](ScenarioConfig& c, double v) { c.p_f0 = v; }},
        {"af0", [](ScenarioConfig& c, double v) { c.a_f0 = v; }},
        {"pc0", [](ScenarioConfig& c, double v) { c.p_c0 = v; }},
        {"vc0", [](ScenarioConfig& c, double v) { c.v_c0 = v; }},
        {"anticipation_prob", [](ScenarioConfig& c, double v) { c.anticipation_success_prob = v; }},
        {"al_before", [](ScenarioConfig& c, double v) { c.a_l.before = v; }},
        {"al_after", [](ScenarioConfig& c, double v) { c.a_l.after = v; }},
    };
    if (auto it = numeric.find(key); it != numeric.end()) {
        it->second(c, num());
    } else if (key == "mode") {
        c.mode = parse_mode(one());
    } else if (key == "engine") {
        c.engine = parse_engine(one());
    } else if (key == "saturate") {
        c.saturate = detail::parse_bool(one(), where + ": saturate");
    } else if (key == "seed") {
        c.seed = detail::parse_u64(one(), where + ": seed");
    } else if (key == "N") {
        auto v = detail::parse_u64(one(), where + ": N");
        if (v > 200) throw ValidationError(where + ": N must be <= 200");
        c.N = int(v);
    } else if (key == "ds_c") {
        dev().ds_c = num();
    } else if (key == "dv_c") {
        dev().dv_c = num();
    } else if (key == "ds_l") {
        dev().ds_l = num();
    } else if (key == "dv_l") {
        dev().dv_l = num();
    } else if (key == "al_breaks") {
        c.a_l.breaks = list();
    } else if (key == "al_values") {
        c.a_l.values = list();
    } else {
        throw ValidationError(where + ": unknown key '" + key + "'");
    }
}

inline ScenarioConfig parse_scenario_config(const std::string& text, const std::string& source,
                                            ScenarioConfig c = {}) {
    std::istringstream is(text);
    std::vector<CLI::ConfigItem> items;
    try {
        items = CLI::ConfigINI().from_config(is);
    } catch (const CLI::Error& e) {
        throw ValidationError(source + ": " + e.what());
    }
    for (const auto& it : items) {
        if (it.name == "++" || it.name == "--") continue;
        if (!it.parents.empty()) throw ValidationError(source + ": sections are not supported ('" + it.fullname() + "')");
        apply_setting(c, it.name, it.inputs, source);
    }
    try {
        c.validate();
    } catch (const ValidationError& e) {
        throw ValidationError(source + ": " + e.what());
    }
    return c;
}

inline ScenarioConfig load_scenario_config(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw ValidationError("no such file: " + path.string());
    return parse_scenario_config(read_file(path), path.string());
}

inline nlohmann::json to_json(const PiecewiseConstant& a) {
    return {{"breaks", a.breaks}, {"values", a.values}, {"before", a.before}, {"after", a.after}};
}

// Every resolved field, defaults included.
inline nlohmann::json to_json(const ScenarioConfig& c) {
    nlohmann::json j;
    j["theta"] = c.theta;
    j["phi"] = c.phi;
    j["tl_start"] = c.t_l;
    j["t_switch"] = c.t_switch();
    j["ufb"] = c.u_b;
    j["umax"] = c.u_max;
    j["saturate"] = c.saturate;
    j["lprime"] = c.lprime;
    j["dt"] = c.dt;
    j["horizon"] = c.horizon;
    j["mode"] = to_string(c.mode);
    j["engine"] = to_string(c.engine);
    j["stepped_dt"] = c.stepped_dt;
    j["N"] = c.N;
    j["profile"] = {{"a1", c.profile.a1}, {"t1", c.profile.t1}, {"a2", c.profile.a2}, {"t2", c.profile.t2}};
    j["leader_accel"] = to_json(c.a_l);
    j["kinematics"] = {{"pl0", c.p_l0}, {"vl0", c.v_l0}, {"pf0", c.p_f0}, {"vf0", c.v_f0},
                       {"af0", c.a_f0}, {"pc0", c.p_c0}, {"vc0", c.v_c0}};
    if (c.deviations)
        j["deviations"] = {{"ds_c", c.deviations->ds_c},
                           {"dv_c", c.deviations->dv_c},
                           {"ds_l", c.deviations->ds_l},
                           {"dv_l", c.deviations->dv_l}};
    else
        j["deviations"] = nullptr;
    j["anticipation_prob"] = c.anticipation_success_prob;
    j["seed"] = c.seed;
    return j;
}

inline nlohmann::json to_json(const ParamSet& p) {
    return {{"ks", p.ks}, {"kv", p.kv}, {"ka", p.ka}, {"tau", p.tau}, {"l", p.l}, {"TL", p.TL}};
}

}  // namespace cutin
