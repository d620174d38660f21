#include <cmath>

#include <gtest/gtest.h>

#include <cutin/linear_ode.hpp>
#include <cutin/oracle.hpp>

using namespace cutin;

TEST(Oracle, ScalarDelayEquationMatchesStepsByHand) {
    // x' = -x(t - 1), x = 1 on [-1, 0]:
    // x = 1 - t on [0, 1], x = 1 - t + (t - 1)^2 / 2 on [1, 2].
    using I = DelayIntegrator<1>;
    auto f = [](double, const I::State&, const I::State& yd) { return I::State(-yd); };
    auto h = [](double) { return I::State::Constant(1.0); };
    I integ(f, h, 0.0, 1.0, 0.01);
    integ.advance_to(2.0);
    for (double t : {0.25, 0.5, 1.0, 1.3, 1.77, 2.0}) {
        double expect = t <= 1.0 ? 1.0 - t : 1.0 - t + 0.5 * (t - 1.0) * (t - 1.0);
        EXPECT_NEAR(integ.at(t)(0), expect, 1e-10) << t;
    }
}

TEST(Oracle, NoDelayMatchesMatrixExponential) {
    auto sys = build_system(ParamSet{});
    Vec3 x0(1.0, -0.5, 0.2);
    auto tr = integrate_oracle(sys, 0.0, History::constant(x0), PiecewiseConstant::zero(), 5.0, 0.01);
    for (double t : {0.5, 2.0, 5.0}) {
        Vec3 expect = expm(Mat3((sys.A + sys.BK()) * t)) * x0;
        EXPECT_LT((tr.at(t) - expect).norm(), 1e-7);
    }
}

TEST(Oracle, StepHalvingConverges) {
    auto sys = build_system(ParamSet{});
    PiecewiseConstant a{{0.0, 2.0, 5.0}, {-2.0, 2.0}, 0.0, 0.0};
    History h{[](double t) { return Vec3(1.0 + t, 0.5, 0.0); }, {}};
    auto c = integrate_oracle(sys, 0.3, h, a, 10.0, 0.1);
    auto f = integrate_oracle(sys, 0.3, h, a, 10.0, 0.05);
    double e = 0.0;
    for (double t = 0.0; t <= 10.0; t += 0.1) e = std::max(e, (c.at(t) - f.at(t)).norm());
    EXPECT_LT(e, 1e-4);
}

TEST(Oracle, InvalidStepRejected) {
    auto sys = build_system(ParamSet{});
    EXPECT_THROW(integrate_oracle(sys, 0.3, History::zero(), PiecewiseConstant::zero(), 1.0, 0.0), ValidationError);
}

TEST(LinearOde, PiecewiseInputMatchesConstantAccelerationKinematics) {
    // x = [s, dv, a]: with M = 0 and h = [0, 1, 0] the speed difference
    // integrates the input and the spacing integrates the speed difference.
    Mat3 m = Mat3::Zero();
    m(0, 1) = 1.0;
    PiecewiseConstant a{{0.0, 2.0, 5.0}, {-2.0, 2.0}, 0.0, 0.0};
    LinearOde ode(m, Vec3::Zero(), Vec3(0.0, 1.0, 0.0), a, -1.0, Vec3(10.0, 0.0, 0.0));
    auto closed = [](double t) {
        double v = 0.0, s = 10.0;
        auto seg = [&](double len, double acc) {
            s += v * len + 0.5 * acc * len * len;
            v += acc * len;
        };
        if (t > 0) seg(std::min(t, 2.0), -2.0);
        if (t > 2) seg(std::min(t, 5.0) - 2.0, 2.0);
        if (t > 5) seg(t - 5.0, 0.0);
        return std::make_pair(s, v);
    };
    for (double t : {-0.5, 0.0, 1.0, 2.0, 3.3, 5.0, 8.0}) {
        auto [s, v] = closed(t);
        Vec3 x = ode.at(t);
        EXPECT_NEAR(x(0), s, 1e-10) << t;
        EXPECT_NEAR(x(1), v, 1e-10) << t;
    }
    EXPECT_THROW(ode.at(-2.0), ValidationError);
}
