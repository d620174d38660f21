#pragma once

#include <cmath>
#include <complex>
#include <limits>
#include <sstream>
#include <vector>

#include "errors.hpp"
#include "linalg.hpp"

namespace cutin {

struct LambertOptions {
    double tol = 1e-12;
    int max_iter = 100;
    // Eigenvector conditioning above this is treated as defective.
    double cond_max = 1e8;
    // Eigenvalues below zero_rel * ||M||_F are mapped to W = 0.
    double zero_rel = 1e-12;
};

namespace detail {

inline cd lambert_seed(int k, cd y) {
    const double e = std::exp(1.0);
    const cd tpik(0.0, 2.0 * pi * k);
    const double near_bp = std::abs(y + 1.0 / e);
    // Branch point -1/e joins w_0 with w_{-1} above the cut and w_0 with w_1 below it.
    const bool pair_up = (k == -1 && y.imag() >= 0.0) || (k == 1 && y.imag() < 0.0);
    if (near_bp < 0.3 && (k == 0 || pair_up)) {
        cd p = std::sqrt(2.0 * (e * y + 1.0));
        if (k != 0) p = -p;
        return -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p;
    }
    if (k == 0 && std::abs(y) < 3.0 && y.real() > -0.5) return std::log(1.0 + y);
    cd l1 = std::log(y) + tpik;
    cd l2 = std::log(l1);
    return l1 - l2 + l2 / l1;
}

}  // namespace detail

// Branch k of the complex Lambert W function, w e^w = y.
// Im(y) == -0 is treated as +0, so the cut is approached counter-clockwise.
inline cd lambert_w(int k, cd y, const LambertOptions& opt = {}) {
    if (!std::isfinite(y.real()) || !std::isfinite(y.imag()))
        throw ValidationError("lambert_w: argument is not finite");
    if (y.imag() == 0.0) y = cd(y.real(), 0.0);

    if (y == cd(0.0, 0.0)) {
        if (k == 0) return {0.0, 0.0};
        std::ostringstream os;
        os << "lambert_w: branch " << k << " is unbounded at y = 0";
        throw DomainError(os.str());
    }
    if (y == cd(-std::exp(-1.0), 0.0) && (k == 0 || k == -1)) return {-1.0, 0.0};

    cd w = detail::lambert_seed(k, y);
    double res = std::numeric_limits<double>::infinity();
    for (int it = 0; it < opt.max_iter; ++it) {
        cd ew = std::exp(w);
        cd f = w * ew - y;
        res = std::abs(f);
        cd wp1 = w + 1.0;
        if (wp1 == cd(0.0, 0.0)) break;
        cd step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
        w -= step;
        if (std::abs(step) <= opt.tol * (1.0 + std::abs(w))) {
            res = std::abs(w * std::exp(w) - y);
            return w;
        }
    }
    res = std::abs(w * std::exp(w) - y);
    if (res <= opt.tol * std::max(1.0, std::abs(y))) return w;
    std::ostringstream os;
    os << "lambert_w: no convergence on branch " << k << " at y = " << y
       << " (residual " << res << ")";
    throw NumericalError(os.str(), res);
}

template <int N>
struct MatrixWResult {
    using CMat = Eigen::Matrix<cd, N, N>;
    using CVec = Eigen::Matrix<cd, N, 1>;
    CMat value;
    CVec eigenvalues;    // of the input matrix
    CVec w;              // branch values, eigenvalues of `value`
    CMat eigenvectors;
    double condition_estimate = 1.0;
};

// W_k(M) = V diag(w_k(lambda_i)) V^{-1}. Repeated eigenvalues are grouped and
// their eigenspace is taken from an SVD null space, which keeps the rank-one
// inputs produced by B K theta Q well conditioned.
template <int N>
MatrixWResult<N> matrix_w(int k, const Eigen::Matrix<cd, N, N>& m,
                          const LambertOptions& opt = {}) {
    using CMat = Eigen::Matrix<cd, N, N>;
    MatrixWResult<N> out;
    const double mn = m.norm();
    if (!std::isfinite(mn)) throw ValidationError("matrix_w: matrix is not finite");
    if (mn == 0.0) {
        out.value = CMat::Zero();
        out.eigenvalues.setZero();
        out.w.setZero();
        out.eigenvectors = CMat::Identity();
        return out;
    }

    Eigen::ComplexEigenSolver<CMat> es(m);
    if (es.info() != Eigen::Success) throw NumericalError("matrix_w: eigensolver failed", mn);
    out.eigenvalues = es.eigenvalues();
    CMat v = es.eigenvectors();

    const double ctol = 1e-8 * mn;
    std::vector<int> cluster(N, -1);
    for (int i = 0; i < N; ++i) {
        if (cluster[i] >= 0) continue;
        cluster[i] = i;
        std::vector<int> members{i};
        for (int j = i + 1; j < N; ++j) {
            if (cluster[j] < 0 && std::abs(out.eigenvalues(j) - out.eigenvalues(i)) <= ctol) {
                cluster[j] = i;
                members.push_back(j);
            }
        }
        if (members.size() < 2) continue;
        cd mu = 0.0;
        for (int j : members) mu += out.eigenvalues(j);
        mu /= double(members.size());
        CMat shifted = m - mu * CMat::Identity();
        Eigen::JacobiSVD<CMat> svd(shifted, Eigen::ComputeFullV);
        const int msz = int(members.size());
        double smax_null = svd.singularValues()(N - msz);
        if (smax_null > 1e-6 * mn) {
            std::ostringstream os;
            os << "matrix_w: repeated eigenvalue " << mu << " lacks a full eigenbasis";
            throw DefectiveMatrixError(os.str(), std::numeric_limits<double>::infinity());
        }
        for (int c = 0; c < msz; ++c) {
            v.col(members[c]) = svd.matrixV().col(N - msz + c);
            out.eigenvalues(members[c]) = mu;
        }
    }
    for (int i = 0; i < N; ++i) v.col(i).normalize();

    out.condition_estimate = cond2(v);
    if (!(out.condition_estimate <= opt.cond_max)) {
        std::ostringstream os;
        os << "matrix_w: eigenvector matrix condition " << out.condition_estimate
           << " exceeds " << opt.cond_max;
        throw DefectiveMatrixError(os.str(), out.condition_estimate);
    }

    for (int i = 0; i < N; ++i) {
        cd lam = out.eigenvalues(i);
        // Roundoff imaginary parts on the negative real axis would pick a side
        // of the cut at random; take the upper side like the scalar function.
        if (lam.real() < 0 && std::abs(lam.imag()) <= 1e-12 * std::abs(lam)) lam = cd(lam.real(), 0.0);
        out.w(i) = std::abs(lam) <= opt.zero_rel * mn ? cd(0.0, 0.0) : lambert_w(k, lam, opt);
    }
    out.eigenvectors = v;
    out.value = v * out.w.asDiagonal() * v.inverse();
    return out;
}

}  // namespace cutin
