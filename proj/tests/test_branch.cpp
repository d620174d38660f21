#include <cmath>

#include <gtest/gtest.h>

#include <cutin/branch.hpp>

using namespace cutin;

namespace {

cd char_det(const Mat3& a, const Mat3& bk, double theta, cd s) {
    CMat3 m = s * CMat3::Identity() - a.cast<cd>() - bk.cast<cd>() * std::exp(-s * theta);
    return m.determinant();
}

// Root of det(sI - A - BK e^{-s theta}) by complex Newton with a numerical derivative.
cd newton_root(const Mat3& a, const Mat3& bk, double theta, cd s) {
    for (int i = 0; i < 100; ++i) {
        const cd h(1e-7, 0.0);
        cd f = char_det(a, bk, theta, s);
        cd df = (char_det(a, bk, theta, s + h) - char_det(a, bk, theta, s - h)) / (2.0 * h);
        cd step = f / df;
        s -= step;
        if (std::abs(step) < 1e-14 * std::max(1.0, std::abs(s))) break;
    }
    return s;
}

double min_dist(const CVec3& v, cd z) {
    double d = HUGE_VAL;
    for (int i = 0; i < 3; ++i) d = std::min(d, std::abs(v(i) - z));
    return d;
}

}  // namespace

TEST(Branch, NominalCharacteristicResidual) {
    auto sys = build_system(ParamSet{});
    for (double theta : {0.1, 0.2, 0.3})
        for (int k = -3; k <= 3; ++k) {
            auto b = solve_branch(sys, theta, k);
            EXPECT_LE(b.residual, 1e-9) << theta << " " << k;
            EXPECT_LE(characteristic_residual(sys.A, sys.BK(), theta, b.S), 1e-8) << theta << " " << k;
        }
}

TEST(Branch, DecoupledSystemMatchesScalarFormula) {
    Mat3 a = Mat3::Zero(), bk = Mat3::Zero();
    a.diagonal() << -0.5, 0.2, -1.5;
    bk.diagonal() << -1.0, -0.8, 0.6;
    const double theta = 0.4;
    for (int k = -2; k <= 2; ++k) {
        auto b = solve_branch(a, bk, theta, k);
        for (int i = 0; i < 3; ++i) {
            cd expect = a(i, i) + lambert_w(k, cd(bk(i, i) * theta * std::exp(-a(i, i) * theta), 0.0)) / theta;
            EXPECT_LT(min_dist(b.eigenvalues, expect), 1e-8) << "k=" << k << " i=" << i;
        }
    }
}

TEST(Branch, DominantRootsAreCharacteristicRoots) {
    auto sys = build_system(ParamSet{});
    for (double theta : {0.1, 0.3}) {
        auto b = solve_branch(sys, theta, 0);
        for (int i = 0; i < 3; ++i) {
            cd s = b.eigenvalues(i);
            cd r = newton_root(sys.A, sys.BK(), theta, s);
            EXPECT_LT(std::abs(r - s), 1e-8 * std::max(1.0, std::abs(s)));
        }
    }
}

TEST(Branch, SmallDelayRecoversDelayFreeEigenvalues) {
    auto sys = build_system(ParamSet{});
    Eigen::ComplexEigenSolver<CMat3> es(CMat3((sys.A + sys.BK()).cast<cd>()));
    auto b = solve_branch(sys, 1e-4, 0);
    int matched = 0;
    for (int i = 0; i < 3; ++i)
        if (min_dist(b.eigenvalues, es.eigenvalues()(i)) < 1e-2) ++matched;
    EXPECT_GE(matched, 2);
    for (int i = 0; i < 3; ++i)
        EXPECT_LT(std::abs(char_det(sys.A, sys.BK(), 1e-4, b.eigenvalues(i))), 1e-8);
}

TEST(Branch, ConjugateBranchesGiveConjugateSpectra) {
    auto sys = build_system(ParamSet{});
    auto p = solve_branch(sys, 0.2, 2), m = solve_branch(sys, 0.2, -2);
    for (int i = 0; i < 3; ++i) EXPECT_LT(min_dist(m.eigenvalues, std::conj(p.eigenvalues(i))), 1e-8);
}

TEST(Branch, InvalidDelayRejected) {
    auto sys = build_system(ParamSet{});
    EXPECT_THROW(solve_branch(sys, 0.0, 0), ValidationError);
    EXPECT_THROW(solve_branch(sys, -0.1, 0), ValidationError);
}
