#pragma once

#include <complex>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

namespace cutin {

using cd = std::complex<double>;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using CVec3 = Eigen::Vector3cd;
using CMat3 = Eigen::Matrix3cd;

inline constexpr double pi = 3.14159265358979323846;

// Padé scaling-and-squaring from Eigen's MatrixFunctions module.
template <typename Derived>
auto expm(const Eigen::MatrixBase<Derived>& m) {
    using Plain = typename Derived::PlainObject;
    Plain a = m;
    Plain out = a.exp();
    return out;
}

// Returns (e^{A t}, \int_0^t e^{A u} du) from one augmented exponential.
inline std::pair<Mat3, Mat3> expm_and_integral(const Mat3& a, double t) {
    Eigen::Matrix<double, 6, 6> aug = Eigen::Matrix<double, 6, 6>::Zero();
    aug.topLeftCorner<3, 3>() = a * t;
    aug.topRightCorner<3, 3>() = Mat3::Identity() * t;
    Eigen::Matrix<double, 6, 6> e = aug.exp();
    return {e.topLeftCorner<3, 3>(), e.topRightCorner<3, 3>()};
}

inline double fro(const CMat3& m) { return m.norm(); }

// 2-norm condition number of a square matrix; infinity when singular.
template <typename M>
double cond2(const M& m) {
    Eigen::JacobiSVD<typename M::PlainObject> svd(m);
    const auto& s = svd.singularValues();
    double lo = s(s.size() - 1);
    if (lo == 0.0) return std::numeric_limits<double>::infinity();
    return s(0) / lo;
}

}  // namespace cutin
