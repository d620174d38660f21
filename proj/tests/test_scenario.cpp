#include <cmath>

#include <gtest/gtest.h>

#include <cutin/scenario.hpp>

using namespace cutin;

namespace {

ScenarioConfig equilibrium_config(double theta, double phi) {
    ScenarioConfig c;
    c.theta = theta;
    c.phi = phi;
    c.profile = CutInProfile::flat();
    c.deviations = InitialDeviations{};
    return c;
}

ScenarioConfig default_config(double theta, double phi) {
    ScenarioConfig c;
    c.theta = theta;
    c.phi = phi;
    return c;
}

double max_gap_deviation(const Trajectory& a, const Trajectory& b) {
    double e = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        e = std::max(e, std::abs(a.samples[i].x_c(0) - b.samples[i].x_c(0)));
        e = std::max(e, std::abs(a.samples[i].x_c(1) - b.samples[i].x_c(1)));
        e = std::max(e, std::abs(a.samples[i].a_f - b.samples[i].a_f));
    }
    return e;
}

}  // namespace

TEST(CutInProfile, PiecewiseValues) {
    CutInProfile p;
    EXPECT_EQ(cutin_accel(p, 1.0), -2.0);
    EXPECT_EQ(cutin_accel(p, 3.0), 2.0);
    EXPECT_EQ(cutin_accel(p, 0.0), 0.0);
    EXPECT_EQ(cutin_accel(p, 6.0), 0.0);
    EXPECT_EQ(cutin_accel(p, 2.0), -2.0);
    EXPECT_EQ(cutin_accel(p, 5.0), 0.0);
    EXPECT_EQ(cutin_accel(p, -0.5), 0.0);
}

TEST(CutInProfile, InvalidTimesRejected) {
    CutInProfile p{-2, 3, 2, 3};
    EXPECT_THROW(p.validate(), ValidationError);
}

TEST(Scenario, EquilibriumCutInStaysAtRest) {
    ParamSet p;
    for (auto [th, ph] : {std::pair{0.0, 0.0}, {0.3, 0.0}, {0.3, 1.0}, {0.2, 0.1}})
        for (auto mode : {ScenarioMode::full_feedback}) {
            auto c = equilibrium_config(th, ph);
            c.mode = mode;
            auto tr = simulate(c, p);
            for (const auto& k : tr.samples) {
                EXPECT_NEAR(k.x_c.norm(), 0.0, 1e-9);
                EXPECT_NEAR(k.x_l.norm(), 0.0, 1e-9);
            }
            EXPECT_NEAR(min_gap(tr).value, 20.0 * 1.18 + 7.64 - 3.0, 1e-9);
            EXPECT_FALSE(min_gap(tr).collision);
        }
}

TEST(Scenario, CoastingFollowerMatchesClosedFormKinematics) {
    ParamSet p{0.0, 0.0, 0.0, 1.18, 7.64, 0.37};
    ScenarioConfig c;
    c.mode = ScenarioMode::worst_case_braking;
    c.u_b = 0.0;
    c.profile = CutInProfile::flat();
    c.v_c0 = 17.0;
    auto tr = simulate(c, p);
    for (const auto& k : tr.samples) {
        double pf = c.p_f0 + c.v_f0 * (k.t - c.t_l);
        double pc = c.p_c0 + c.v_c0 * k.t;
        EXPECT_NEAR(k.gap, pc - pf - c.lprime, 1e-6) << k.t;
    }
}

TEST(Scenario, AnalyticMatchesSteppedIntegration) {
    ParamSet p;
    for (auto mode : {ScenarioMode::full_feedback, ScenarioMode::worst_case_braking})
        for (auto [th, ph] : {std::pair{0.0, 0.0}, {0.15, 0.0}, {0.3, 0.0}, {0.3, 0.3}, {0.3, 1.0}, {0.3, 1.5}}) {
            auto c = default_config(th, ph);
            c.mode = mode;
            c.saturate = false;
            c.engine = Engine::analytic;
            auto a = simulate(c, p);
            c.engine = Engine::stepped;
            c.stepped_dt = 0.01;
            auto s = simulate(c, p);
            EXPECT_LE(max_gap_deviation(a, s), 1e-3) << to_string(mode) << " " << th << " " << ph;
        }
}

TEST(Scenario, AnalyticMatchesSteppedWithLeaderInput) {
    ParamSet p{0.3, 0.9, -0.8, 1.0, 6.0, 0.5};
    ScenarioConfig c = default_config(0.25, 0.1);
    c.saturate = false;
    c.a_l = PiecewiseConstant{{-0.5, 1.5}, {-1.5}, 0.0, 0.0};
    c.engine = Engine::analytic;
    auto a = simulate(c, p);
    c.engine = Engine::stepped;
    c.stepped_dt = 0.01;
    EXPECT_LE(max_gap_deviation(a, simulate(c, p)), 1e-3);
}

TEST(Scenario, ContinuousAcrossTheSwitch) {
    ParamSet p;
    for (auto mode : {ScenarioMode::full_feedback, ScenarioMode::worst_case_braking})
        for (auto [th, ph] : {std::pair{0.3, 0.0}, {0.3, 1.0}, {0.2, 0.5}}) {
            auto c = default_config(th, ph);
            c.mode = mode;
            c.saturate = false;
            ScenarioSolver s(c, p);
            ASSERT_EQ(s.engine(), Engine::analytic);
            double ts = s.t_switch();
            Vec3 left = s.at(ts - 1e-12).x_c, right = s.at(ts).x_c;
            EXPECT_LE((left - right).norm(), 1e-9) << to_string(mode) << " " << th << " " << ph;
        }
}

TEST(Scenario, SaturationFallsBackToSteppedWithNotice) {
    auto c = default_config(0.3, 0.0);
    ScenarioSolver s(c, ParamSet{});
    EXPECT_EQ(s.engine(), Engine::stepped);
    ASSERT_FALSE(s.notices().empty());
    c.engine = Engine::analytic;
    EXPECT_THROW(ScenarioSolver(c, ParamSet{}), NumericalError);
}

TEST(Scenario, SaturatedDemandStaysWithinBounds) {
    auto c = default_config(0.3, 0.0);
    auto tr = simulate(c, ParamSet{});
    for (const auto& k : tr.samples) {
        EXPECT_LE(k.a_f, c.u_max + 1e-9);
        EXPECT_GE(k.a_f, c.u_b - 1e-9);
    }
}

TEST(Scenario, DelayShrinksAndAnticipationWidensTheMinimumGap) {
    ParamSet p;
    double g0 = min_gap(simulate(default_config(0.0, 0.0), p)).value;
    double g15 = min_gap(simulate(default_config(0.15, 0.0), p)).value;
    double g30 = min_gap(simulate(default_config(0.3, 0.0), p)).value;
    EXPECT_LT(g30, g15);
    EXPECT_LT(g15, g0);
    double prev = g30;
    for (double phi : {0.3, 0.6, 1.0}) {
        double g = min_gap(simulate(default_config(0.3, phi), p)).value;
        EXPECT_GE(g, prev) << phi;
        prev = g;
    }
}

TEST(Scenario, TerminalStateIndependentOfDelayAndAnticipation) {
    ParamSet p;
    auto ref = simulate(default_config(0.0, 0.0), p).samples.back();
    for (auto [th, ph] : {std::pair{0.3, 0.0}, {0.3, 1.0}}) {
        auto k = simulate(default_config(th, ph), p).samples.back();
        EXPECT_NEAR(k.x_c(0), ref.x_c(0), 1e-4);
        EXPECT_NEAR(k.x_c(1), ref.x_c(1), 1e-4);
    }
}

TEST(Scenario, TrajectoryInvariants) {
    ParamSet p;
    for (auto mode : {ScenarioMode::full_feedback, ScenarioMode::worst_case_braking}) {
        auto c = default_config(0.3, 0.6);
        c.mode = mode;
        auto tr = simulate(c, p);
        for (std::size_t i = 1; i < tr.size(); ++i) {
            const auto &a = tr.samples[i - 1], &b = tr.samples[i];
            double dt = b.t - a.t;
            EXPECT_NEAR(b.v_f - a.v_f, 0.5 * dt * (a.a_f + b.a_f), 2e-2) << b.t;
            EXPECT_NEAR(b.p_f - a.p_f, 0.5 * dt * (a.v_f + b.v_f), 2e-2) << b.t;
        }
        for (const auto& k : tr.samples) {
            double recon = (k.p_c - k.p_f) - p.equilibrium_spacing(k.v_f);
            EXPECT_NEAR(k.x_c(0), recon, 1e-9);
            EXPECT_NEAR(k.gap, k.p_c - k.p_f - c.lprime, 1e-9);
        }
    }
}

TEST(Scenario, TrajectoryCsvLayout) {
    auto tr = simulate(equilibrium_config(0.0, 0.0), ParamSet{});
    auto csv = trajectory_csv(tr);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "t,p_l,v_l,a_l,p_c,v_c,a_c,p_f,v_f,a_f,ds_c,dv_c,gap");
    // Report clock starts at zero at the analysis start.
    EXPECT_EQ(csv.substr(csv.find('\n') + 1, 2), "0,");
    EXPECT_EQ(tr.size(), 611u);
}

TEST(MinGap, ConstantGap) {
    Trajectory tr;
    for (int i = 0; i < 5; ++i) {
        Kinematics k{};
        k.t = i;
        k.gap = 4.5;
        tr.samples.push_back(k);
    }
    auto m = min_gap(tr);
    EXPECT_EQ(m.value, 4.5);
    EXPECT_FALSE(m.collision);
}

TEST(MinGap, ParabolicRefinementAndCollisionFlag) {
    Trajectory tr;
    for (int i = 0; i <= 10; ++i) {
        Kinematics k{};
        k.t = 0.1 * i;
        k.gap = (k.t - 0.43) * (k.t - 0.43) - 0.01;
        tr.samples.push_back(k);
    }
    auto m = min_gap(tr);
    EXPECT_NEAR(m.value, -0.01, 1e-12);
    EXPECT_NEAR(m.time, 0.43, 1e-12);
    EXPECT_TRUE(m.collision);
    EXPECT_THROW(min_gap(Trajectory{}), ValidationError);
}

TEST(Scenario, InvalidConfigsRejected) {
    auto bad = [](auto mutate) {
        ScenarioConfig c;
        mutate(c);
        return c;
    };
    ParamSet p;
    EXPECT_THROW(simulate(bad([](ScenarioConfig& c) { c.theta = -0.1; }), p), ValidationError);
    EXPECT_THROW(simulate(bad([](ScenarioConfig& c) { c.phi = -1; }), p), ValidationError);
    EXPECT_THROW(simulate(bad([](ScenarioConfig& c) { c.t_l = 0.0; }), p), ValidationError);
    EXPECT_THROW(simulate(bad([](ScenarioConfig& c) { c.dt = 0.0; }), p), ValidationError);
    EXPECT_THROW(simulate(bad([](ScenarioConfig& c) { c.u_b = 1.0; }), p), ValidationError);
    EXPECT_THROW(simulate(bad([](ScenarioConfig& c) { c.lprime = 0.0; }), p), ValidationError);
    EXPECT_THROW(simulate(bad([](ScenarioConfig& c) { c.p_c0 = 60.0; }), p), ValidationError);
}

TEST(Scenario, SharedBasisGivesIdenticalResult) {
    ParamSet p;
    auto c = default_config(0.3, 0.2);
    c.mode = ScenarioMode::worst_case_braking;
    auto basis = std::make_shared<const SpectralBasis>(build_system(p), 0.3, SpectralOptions{});
    EXPECT_EQ(trajectory_csv(simulate(c, p)), trajectory_csv(simulate(c, p, basis)));
}
