#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <stdexcept>

namespace nfsec {

using cplx = std::complex<double>;
using MatC = Eigen::MatrixXcd;
using MatR = Eigen::MatrixXd;
using VecC = Eigen::VectorXcd;
using VecR = Eigen::VectorXd;

inline constexpr double kSpeedOfLight = 299792458.0;  // m/s
inline constexpr double kPi = 3.14159265358979323846;

inline double deg2rad(double deg) { return deg * kPi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / kPi; }

inline double dbm_to_watt(double dbm) { return 1e-3 * std::pow(10.0, dbm / 10.0); }
inline double watt_to_dbm(double watt) { return 10.0 * std::log10(watt / 1e-3); }

/// Wraps an angle to (-pi, pi].
inline double wrap_angle(double a) {
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a <= 0.0) a += 2.0 * kPi;
  return a - kPi;
}

inline bool is_hermitian(const MatC& a, double tol = 1e-12) {
  if (a.rows() != a.cols()) return false;
  return (a - a.adjoint()).cwiseAbs().maxCoeff() <= tol * std::max(1.0, a.cwiseAbs().maxCoeff());
}

inline MatC hermitian_part(const MatC& a) { return 0.5 * (a + a.adjoint()); }

inline MatR symmetric_part(const MatR& a) { return 0.5 * (a + a.transpose()); }

inline double min_eigenvalue(const MatR& s) {
  Eigen::SelfAdjointEigenSolver<MatR> es(s, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

inline double min_eigenvalue(const MatC& h) {
  Eigen::SelfAdjointEigenSolver<MatC> es(h, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

/// a^H M b for Hermitian M; returns the real part (exact for a == b).
inline double quad_form(const VecC& a, const MatC& m, const VecC& b) {
  return std::real(a.dot(m * b));
}

inline double trace_inner(const MatC& a, const MatC& b) {
  // Tr(A B) for Hermitian A, B; real by symmetry.
  return std::real((a * b).trace());
}

}  // namespace nfsec
