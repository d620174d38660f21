#pragma once

#include <functional>
#include <memory>
#include <sstream>
#include <vector>

#include "branch.hpp"
#include "forcing.hpp"
#include "quadrature.hpp"

namespace cutin {

// Initial function on [-theta, 0]. `breaks` lists interior points where it
// is not smooth, they become quadrature panel edges.
struct History {
    std::function<Vec3(double)> f;
    std::vector<double> breaks;

    static History constant(const Vec3& x) {
        return {[x](double) { return x; }, {}};
    }
    static History zero() { return constant(Vec3::Zero()); }

    Vec3 operator()(double t) const { return f(t); }
};

struct SpectralOptions {
    int N = 10;  // branches -N..N
    BranchOptions branch;
    double im_tol = 1e-4;
    // Exact matrix-exponential solution on the first delay interval, modal
    // sum afterwards. With hybrid = false every time uses the modal sum.
    bool hybrid = true;
    double dedupe_rel = 1e-6;
};

// One characteristic root s with right/left null vectors of
// Delta(s) = sI - A - B K e^{-s theta} and den = u^T Delta'(s) v.
struct Mode {
    cd s;
    CVec3 v;
    CVec3 u;
    cd den;
    std::size_t owner = 0;  // index into SpectralBasis::branches()
};

struct BranchEntry {
    BranchSolution sol;
    bool conjugate_partner = false;  // S is conj(S_k) added for real output
};

// Solved branches and the distinct characteristic roots they expose.
//
// Every S_k carries the dominant root pair, so the roots of different
// branches overlap heavily. Each distinct root is owned by the first branch
// (order 0, 1, -1, 2, -2, ...) that exposes it. Roots whose conjugate is not
// exposed by any branch get a conjugate partner entry so that real inputs
// produce real responses.
class SpectralBasis {
public:
    SpectralBasis(const SystemMatrices& sys, double theta, const SpectralOptions& opt = {})
        : A_(sys.A), BK_(sys.BK()), D_(sys.D), theta_(theta), opt_(opt) {
        if (!(theta > 0) || !std::isfinite(theta)) throw ValidationError("SpectralBasis: theta must be > 0");
        if (opt.N < 0) throw ValidationError("SpectralBasis: N must be >= 0");
        std::vector<int> order{0};
        for (int k = 1; k <= opt.N; ++k) {
            order.push_back(k);
            order.push_back(-k);
        }
        for (int k : order) branches_.push_back({solve_branch(A_, BK_, theta_, k, opt.branch), false});

        for (std::size_t b = 0; b < branches_.size(); ++b) {
            const auto& sol = branches_[b].sol;
            for (int i = 0; i < 3; ++i) add_mode(sol.eigenvalues(i), sol.eigenvectors.col(i), b);
        }
        const std::size_t nb = branches_.size();
        for (std::size_t b = 0; b < nb; ++b) {
            const auto& sol = branches_[b].sol;
            std::size_t partner = SIZE_MAX;
            for (int i = 0; i < 3; ++i) {
                cd sc = std::conj(sol.eigenvalues(i));
                if (find_mode(sc) >= 0) continue;
                if (partner == SIZE_MAX) {
                    BranchEntry e{sol, true};
                    e.sol.Q = sol.Q.conjugate();
                    e.sol.S = sol.S.conjugate();
                    e.sol.eigenvalues = sol.eigenvalues.conjugate();
                    e.sol.eigenvectors = sol.eigenvectors.conjugate();
                    branches_.push_back(e);
                    partner = branches_.size() - 1;
                }
                add_mode(sc, sol.eigenvectors.col(i).conjugate(), partner);
            }
        }
    }

    double theta() const { return theta_; }
    int N() const { return opt_.N; }
    const SpectralOptions& options() const { return opt_; }
    const Mat3& A() const { return A_; }
    const Mat3& BK() const { return BK_; }
    const Vec3& D() const { return D_; }
    const std::vector<BranchEntry>& branches() const { return branches_; }
    const std::vector<Mode>& modes() const { return modes_; }

    // Forced-response weight of one branch: sum over owned roots of v u^T / den.
    CMat3 C_N(std::size_t b) const {
        CMat3 c = CMat3::Zero();
        for (const auto& m : modes_)
            if (m.owner == b) c += m.v * m.u.transpose() / m.den;
        return c;
    }
    std::vector<CMat3> forced_coefficients() const {
        std::vector<CMat3> out;
        for (std::size_t b = 0; b < branches_.size(); ++b) out.push_back(C_N(b));
        return out;
    }

    // Modal approximation of the fundamental solution, tau > 0.
    Mat3 kernel_modal(double tau) const {
        CMat3 acc = CMat3::Zero();
        for (const auto& m : modes_) acc += std::exp(m.s * tau) * (m.v * m.u.transpose()) / m.den;
        return acc.real();
    }

    // Fundamental solution: exact e^{A tau} on the first delay interval in
    // hybrid mode, modal otherwise.
    Mat3 kernel(double tau) const {
        if (tau < 0) return Mat3::Zero();
        if (opt_.hybrid && tau < theta_) return expm(Mat3(A_ * tau));
        return kernel_modal(tau);
    }

    double max_abs_root() const {
        double m = 0.0;
        for (const auto& md : modes_) m = std::max(m, std::abs(md.s));
        return m;
    }

private:
    int find_mode(cd s) const {
        for (std::size_t i = 0; i < modes_.size(); ++i)
            if (std::abs(modes_[i].s - s) <= opt_.dedupe_rel * std::max(1.0, std::abs(s))) return int(i);
        return -1;
    }

    void add_mode(cd s, const CVec3& v, std::size_t owner) {
        if (find_mode(s) >= 0) return;
        const CMat3 e = std::exp(-s * theta_) * BK_.cast<cd>();
        const CMat3 delta = s * CMat3::Identity() - A_.cast<cd>() - e;
        Eigen::JacobiSVD<CMat3> svd(delta, Eigen::ComputeFullU);
        Mode m;
        m.s = s;
        m.v = v;
        m.u = svd.matrixU().col(2).conjugate();
        m.den = m.u.transpose() * (CMat3::Identity() + theta_ * e) * v;
        m.owner = owner;
        if (std::abs(m.den) < 1e-12) {
            std::ostringstream os;
            os << "SpectralBasis: root " << s << " is not simple";
            throw NumericalError(os.str(), std::abs(m.den));
        }
        modes_.push_back(m);
    }

    Mat3 A_, BK_;
    Vec3 D_;
    double theta_;
    SpectralOptions opt_;
    std::vector<BranchEntry> branches_;
    std::vector<Mode> modes_;
};

// Response of x' = A x + B K x(t - theta) + D a(t) for t >= 0 with a given
// history on [-theta, 0] and initial value x(0) (which may differ from the
// history's endpoint).
class SpectralSolution {
public:
    SpectralSolution(std::shared_ptr<const SpectralBasis> basis, History history, const Vec3& x0)
        : basis_(std::move(basis)), history_(std::move(history)), x0_(x0) {
        const double th = basis_->theta();
        // Shared quadrature grid on [-theta, 0], sized for the fastest root.
        int panels = std::max(4, int(std::ceil(th * basis_->max_abs_root() / 1.5)));
        QuadRule q = composite_gauss(-th, 0.0, history_.breaks, panels);
        std::vector<Vec3> hv(q.x.size());
        for (std::size_t i = 0; i < q.x.size(); ++i) hv[i] = history_(q.x[i]);
        const Mat3& bk = basis_->BK();

        const auto& modes = basis_->modes();
        alpha_.resize(modes.size());
        for (std::size_t j = 0; j < modes.size(); ++j) {
            const auto& m = modes[j];
            CVec3 integral = CVec3::Zero();
            for (std::size_t i = 0; i < q.x.size(); ++i)
                integral += q.w[i] * std::exp(-m.s * (q.x[i] + th)) * hv[i].cast<cd>();
            CVec3 rhs = x0_.cast<cd>() + bk.cast<cd>() * integral;
            alpha_[j] = (m.u.transpose() * rhs)(0) / m.den;
        }
    }

    const SpectralBasis& basis() const { return *basis_; }
    std::shared_ptr<const SpectralBasis> basis_ptr() const { return basis_; }
    const Vec3& x0() const { return x0_; }
    const History& history() const { return history_; }
    const std::vector<cd>& mode_amplitudes() const { return alpha_; }

    // Free-response weight of one branch: sum over owned roots of v alpha.
    std::vector<CVec3> C_I() const {
        const auto& modes = basis_->modes();
        std::vector<CVec3> out(basis_->branches().size(), CVec3::Zero());
        for (std::size_t j = 0; j < modes.size(); ++j) out[modes[j].owner] += modes[j].v * alpha_[j];
        return out;
    }

    Vec3 free_response(double t) const {
        if (t < 0) throw ValidationError("SpectralSolution: t must be >= 0");
        const double th = basis_->theta();
        // Roundoff past theta still counts as the first interval, so callers
        // that land on the boundary get the exact value.
        if (basis_->options().hybrid && t <= th + 1e-12 * std::max(1.0, th)) {
            // x(t) = e^{At} x0 + int_0^t e^{A(t-e)} B K phi(e - theta) de
            Vec3 x = expm(Mat3(basis_->A() * t)) * x0_;
            if (t > 0) {
                std::vector<double> cuts;
                for (double b : history_.breaks) cuts.push_back(b + th);
                QuadRule q = composite_gauss(0.0, t, cuts, 2);
                for (std::size_t i = 0; i < q.x.size(); ++i)
                    x += q.w[i] * (expm(Mat3(basis_->A() * (t - q.x[i]))) * (basis_->BK() * history_(std::min(0.0, q.x[i] - th))));
            }
            return x;
        }
        CVec3 acc = CVec3::Zero();
        const auto& modes = basis_->modes();
        for (std::size_t j = 0; j < modes.size(); ++j) acc += modes[j].v * (alpha_[j] * std::exp(modes[j].s * t));
        return checked_real(acc, t);
    }

    // int_0^t Phi(t - e) D a(e) de for a piecewise-constant input a.
    Vec3 forced_response(double t, const PiecewiseConstant& a) const {
        if (t < 0) throw ValidationError("SpectralSolution: t must be >= 0");
        const double th = basis_->theta();
        const bool hybrid = basis_->options().hybrid;
        const Vec3& d = basis_->D();
        Vec3 x = Vec3::Zero();
        CVec3 acc = CVec3::Zero();
        const auto& modes = basis_->modes();
        for (const auto& p : a.pieces(0.0, t)) {
            if (p.value == 0.0) continue;
            double lo = p.lo, hi = p.hi;
            if (hybrid) {
                // Part with t - e < theta uses the exact kernel e^{A tau}.
                double split = std::max(lo, t - th);
                if (hi > split) {
                    Mat3 i1 = expm_and_integral(basis_->A(), t - split).second;
                    Mat3 i0 = expm_and_integral(basis_->A(), t - hi).second;
                    x += (i1 - i0) * d * p.value;
                }
                hi = std::min(hi, t - th);
                if (!(hi > lo)) continue;
            }
            for (const auto& m : modes) {
                cd wgt = (m.u.transpose() * d.cast<cd>())(0) / m.den * p.value;
                acc += m.v * (wgt * (std::exp(m.s * (t - lo)) - std::exp(m.s * (t - hi))) / m.s);
            }
        }
        return x + checked_real(acc, t);
    }

    Vec3 eval(double t, const PiecewiseConstant& a) const { return free_response(t) + forced_response(t, a); }

private:
    Vec3 checked_real(const CVec3& v, double t) const {
        double im = v.imag().cwiseAbs().maxCoeff();
        if (im > basis_->options().im_tol) {
            std::ostringstream os;
            os << "SpectralSolution: imaginary residue " << im << " at t = " << t;
            throw NumericalError(os.str(), im);
        }
        return v.real();
    }

    std::shared_ptr<const SpectralBasis> basis_;
    History history_;
    Vec3 x0_;
    std::vector<cd> alpha_;
};

inline SpectralSolution free_coefficients(std::shared_ptr<const SpectralBasis> basis, History history,
                                          const Vec3& x_at_0) {
    return SpectralSolution(std::move(basis), std::move(history), x_at_0);
}

inline std::vector<CMat3> forced_coefficients(const SpectralBasis& basis) { return basis.forced_coefficients(); }

inline Vec3 eval_response(const SpectralSolution& sol, const PiecewiseConstant& forcing, double t) {
    return sol.eval(t, forcing);
}

// Direct reading of the node-collocation system: x(t_j) = sum_k e^{S_k t_j} C_k
// at t_j = -j theta / (2N), j = 0..2N, solved for the 2N+1 vectors C_k.
// Every S_k shares the dominant roots, so this matrix is rank deficient in
// practice; kept for diagnostics, the solution classes use root projection.
struct CollocationReport {
    std::vector<CVec3> C;
    double condition = 0.0;
    int rank = 0;
    int size = 0;
    double node_residual = 0.0;
};

inline CollocationReport collocation_coefficients(const SpectralBasis& basis, const History& history,
                                                  const Vec3& x_at_0) {
    const int N = basis.N();
    const int nb = 2 * N + 1;
    const double th = basis.theta();
    Eigen::MatrixXcd M(3 * nb, 3 * nb);
    Eigen::VectorXcd rhs(3 * nb);
    for (int j = 0; j < nb; ++j) {
        double tj = N == 0 ? 0.0 : -j * th / (2.0 * N);
        Vec3 xj = j == 0 ? x_at_0 : history(tj);
        rhs.segment<3>(3 * j) = xj.cast<cd>();
        for (int b = 0; b < nb; ++b)
            M.block<3, 3>(3 * j, 3 * b) = expm(CMat3(basis.branches()[b].sol.S * tj));
    }
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXcd> cod(M);
    CollocationReport rep;
    rep.size = 3 * nb;
    rep.rank = int(cod.rank());
    rep.condition = cond2(M);
    Eigen::VectorXcd c = rep.condition > 1e10 ? Eigen::VectorXcd(cod.solve(rhs)) : Eigen::VectorXcd(M.partialPivLu().solve(rhs));
    for (int b = 0; b < nb; ++b) rep.C.push_back(c.segment<3>(3 * b));
    rep.node_residual = (M * c - rhs).cwiseAbs().maxCoeff();
    return rep;
}

}  // namespace cutin
