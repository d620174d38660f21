#pragma once

#include <algorithm>
#include <random>
#include <sstream>

#include "lambert_w.hpp"
#include "params.hpp"

namespace cutin {

struct BranchOptions {
    double tol_q = 1e-9;
    int max_iter = 60;
    LambertOptions lambert;
};

struct BranchSolution {
    int k = 0;
    double theta = 0.0;
    CMat3 Q;
    CMat3 S;
    CVec3 eigenvalues;   // of S, i.e. characteristic roots
    CMat3 eigenvectors;  // right eigenvectors of S, unit columns
    double residual = 0.0;       // ||W e^{W + A theta} - B K theta||_F
    double char_residual = 0.0;  // ||S - A - B K e^{-S theta}||_F
    int iterations = 0;
};

inline double characteristic_residual(const Mat3& a, const Mat3& bk, double theta, const CMat3& s) {
    CMat3 e = expm(CMat3(-s * theta));
    return (s - a.cast<cd>() - bk.cast<cd>() * e).norm();
}

namespace detail {

struct QResidual {
    Mat3 a;
    Mat3 bk;
    double theta;
    int k;
    LambertOptions lopt;

    CMat3 w_of(const CMat3& q) const {
        CMat3 m = bk.cast<cd>() * theta * q;
        return matrix_w<3>(k, m, lopt).value;
    }
    CMat3 operator()(const CMat3& q) const {
        CMat3 w = w_of(q);
        CMat3 e = expm(CMat3(w + a.cast<cd>() * theta));
        return w * e - bk.cast<cd>() * theta;
    }
    // Residual norm, or infinity when the evaluation itself fails.
    double safe_norm(const CMat3& q, CMat3* f = nullptr) const {
        try {
            CMat3 v = (*this)(q);
            double n = v.norm();
            if (!std::isfinite(n)) return std::numeric_limits<double>::infinity();
            if (f) *f = v;
            return n;
        } catch (const Error&) {
            return std::numeric_limits<double>::infinity();
        }
    }
};

using Vec9c = Eigen::Matrix<cd, 9, 1>;
using Mat9c = Eigen::Matrix<cd, 9, 9>;

inline Vec9c flat(const CMat3& m) { return Eigen::Map<const Vec9c>(m.data()); }
inline CMat3 unflat(const Vec9c& v) { return Eigen::Map<const CMat3>(v.data()); }

}  // namespace detail

namespace detail {

struct NewtonRun {
    CMat3 q;
    double r = std::numeric_limits<double>::infinity();
    int iterations = 0;
};

inline NewtonRun newton_q(const QResidual& F, CMat3 q, double target, int max_iter) {
    NewtonRun run;
    CMat3 f;
    double r = F.safe_norm(q, &f);
    if (!std::isfinite(r)) return run;

    int it = 0;
    int stalls = 0;
    int uphill = 0;
    for (; it < max_iter && r > target; ++it) {
        Mat9c J;
        bool ok = true;
        for (int j = 0; j < 9 && ok; ++j) {
            Vec9c dq = Vec9c::Zero();
            const double h = 1e-7 * std::max(1.0, std::abs(q.data()[j]));
            dq(j) = h;
            CMat3 fp, fm;
            double np = F.safe_norm(q + unflat(dq), &fp);
            double nm = F.safe_norm(q - unflat(dq), &fm);
            ok = std::isfinite(np) && std::isfinite(nm);
            J.col(j) = flat(fp - fm) / (2.0 * h);
        }
        if (!ok) break;
        const Vec9c fv = flat(f);

        Eigen::CompleteOrthogonalDecomposition<Mat9c> cod;
        cod.setThreshold(1e-10);
        cod.compute(J);
        Vec9c step = cod.solve(-fv);

        // Limit wild steps, the exponential makes far iterates overflow.
        const double qn = std::max(1.0, q.norm());
        if (step.norm() > 10.0 * qn) step *= 10.0 * qn / step.norm();

        bool moved = false;
        for (double alpha = 1.0; alpha > 1e-3; alpha *= 0.5) {
            CMat3 qn2 = q + unflat(alpha * step);
            CMat3 fn;
            double rn = F.safe_norm(qn2, &fn);
            // A few uphill full steps are allowed so iterates can leave a branch cut.
            bool accept = rn < r || (alpha == 1.0 && uphill < 3 && rn < 2.0 * r);
            if (accept) {
                uphill = rn < r ? 0 : uphill + 1;
                q = qn2;
                f = fn;
                r = rn;
                moved = true;
                break;
            }
        }
        if (!moved) {
            const Mat9c JhJ = J.adjoint() * J;
            const Vec9c g = J.adjoint() * fv;
            double mu = 1e-6 * std::max(1e-300, JhJ.diagonal().real().maxCoeff());
            for (int tries = 0; tries < 12 && !moved; ++tries, mu *= 10.0) {
                Vec9c lm = (JhJ + mu * Mat9c::Identity()).ldlt().solve(-g);
                CMat3 qn2 = q + unflat(lm);
                CMat3 fn;
                double rn = F.safe_norm(qn2, &fn);
                if (rn < r) {
                    q = qn2;
                    f = fn;
                    r = rn;
                    moved = true;
                }
            }
        }
        if (!moved) {
            if (++stalls >= 2) break;
        } else {
            stalls = 0;
        }
    }
    run.q = q;
    run.r = r;
    run.iterations = it;
    return run;
}

// Newton on S - A - B K e^{-S theta} = 0 starting from the Lambert W value.
// Large high-branch S amplify rounding in the exponential; a couple of steps
// on the characteristic equation itself recover the lost digits.
inline void polish_s(const Mat3& a, const Mat3& bk, double theta, CMat3& s, double& res) {
    auto G = [&](const CMat3& x) -> CMat3 {
        return x - a.cast<cd>() - bk.cast<cd>() * expm(CMat3(-x * theta));
    };
    for (int it = 0; it < 4; ++it) {
        Mat9c J;
        for (int j = 0; j < 9; ++j) {
            Vec9c dx = Vec9c::Zero();
            const double h = 1e-7 * std::max(1.0, std::abs(s.data()[j]));
            dx(j) = h;
            J.col(j) = flat(G(s + unflat(dx)) - G(s - unflat(dx))) / (2.0 * h);
        }
        Eigen::CompleteOrthogonalDecomposition<Mat9c> cod;
        cod.setThreshold(1e-12);
        cod.compute(J);
        CMat3 cand = s + unflat(cod.solve(-flat(G(s))));
        double rc = characteristic_residual(a, bk, theta, cand);
        if (!(rc < res)) break;
        s = cand;
        res = rc;
    }
}

}  // namespace detail

// Solves W_k(B K theta Q) e^{W_k(B K theta Q) + A theta} = B K theta for Q,
// then S = W_k(B K theta Q) / theta + A.
//
// Damped Gauss-Newton with a minimum-norm step (the Jacobian is rank
// deficient because B K has rank one), Levenberg-Marquardt on stagnation.
// A real starting point can sit exactly on a branch cut of W_k, and Q = I is
// degenerate when K B = 0, so rotated copies of I and e^{-A theta} are tried.
inline BranchSolution solve_branch(const Mat3& a, const Mat3& bk, double theta, int k,
                                   const BranchOptions& opt = {}) {
    using namespace detail;
    if (!(theta > 0) || !std::isfinite(theta)) throw ValidationError("solve_branch: theta must be > 0");
    QResidual F{a, bk, theta, k, opt.lambert};

    const double scale = std::max(1.0, (bk * theta).norm());
    const double target = 1e-14 * scale;
    NewtonRun best;
    // e^{-A theta} is the exact answer when A and B K commute.
    const CMat3 bases[2] = {CMat3::Identity(), expm(Mat3(-a * theta)).cast<cd>()};
    for (double rot : {0.0, 0.01, -0.01, 0.1, -0.1, 0.5, -0.5}) {
        for (const CMat3& base : bases) {
            NewtonRun run = newton_q(F, base * std::polar(1.0, rot), target, opt.max_iter);
            if (run.r < best.r) best = run;
            if (best.r <= opt.tol_q) break;
        }
        if (best.r <= opt.tol_q) break;
    }
    // Last resort near the branch point -1/e: fixed pseudo-random complex starts.
    std::mt19937_64 gen(0x5eed0fb7a2c4ULL);
    std::normal_distribution<double> nd(0.0, 0.3);
    for (int trial = 0; trial < 12 && !(best.r <= opt.tol_q); ++trial) {
        CMat3 q0 = CMat3::Identity();
        for (int i = 0; i < 9; ++i) q0.data()[i] += cd(nd(gen), nd(gen));
        NewtonRun run = newton_q(F, q0, target, opt.max_iter);
        if (run.r < best.r) best = run;
    }
    const CMat3 q = best.q;
    const double r = best.r;
    const int it = best.iterations;

    BranchSolution sol;
    sol.k = k;
    sol.theta = theta;
    sol.Q = q;
    sol.iterations = it;
    sol.residual = r;
    if (!(r <= opt.tol_q)) {
        std::ostringstream os;
        os << "solve_branch: branch " << k << " did not converge (residual " << r << ")";
        throw BranchSolveError(os.str(), k, r);
    }
    CMat3 w;
    try {
        w = F.w_of(q);
    } catch (const Error& e) {
        throw BranchSolveError(std::string("solve_branch: ") + e.what(), k, r);
    }
    sol.S = w / theta + a.cast<cd>();
    sol.char_residual = characteristic_residual(a, bk, theta, sol.S);
    if (!(sol.char_residual <= opt.tol_q * std::max(1.0, a.norm())))
        polish_s(a, bk, theta, sol.S, sol.char_residual);
    // Scaled by ||S|| as well: for high branches with K B near zero, S is large
    // and rounding in e^{-S theta} alone exceeds an absolute bound.
    if (!(sol.char_residual <= opt.tol_q * std::max({1.0, a.norm(), sol.S.norm()}))) {
        std::ostringstream os;
        os << "solve_branch: branch " << k << " characteristic residual " << sol.char_residual;
        throw BranchSolveError(os.str(), k, sol.char_residual);
    }
    Eigen::ComplexEigenSolver<CMat3> es(sol.S);
    sol.eigenvalues = es.eigenvalues();
    sol.eigenvectors = es.eigenvectors();
    for (int i = 0; i < 3; ++i) sol.eigenvectors.col(i).normalize();
    return sol;
}

inline BranchSolution solve_branch(const SystemMatrices& sys, double theta, int k,
                                   const BranchOptions& opt = {}) {
    return solve_branch(sys.A, sys.BK(), theta, k, opt);
}

}  // namespace cutin
