#pragma once

#include <utility>
#include <vector>

#include "nfsec/channel.hpp"
#include "nfsec/linalg.hpp"

namespace nfsec::uncertainty {

/// Axis-aligned three-sigma box around the predicted eavesdropper position.
struct UncertaintyBox {
  double theta_center = 0.0;  // radians
  double dist_center = 0.0;   // meters
  double sigma_theta = 0.0;   // radians
  double sigma_dist = 0.0;    // meters

  void validate() const {
    if (sigma_theta < 0.0 || sigma_dist < 0.0) throw std::invalid_argument("UncertaintyBox: sigmas must be >= 0");
    channel::PolarPosition{theta_center, dist_center}.validate();
  }

  double theta_halfwidth() const { return 3.0 * sigma_theta; }
  double dist_halfwidth() const { return 3.0 * sigma_dist; }
};

struct RobustRadii {
  double beta_a = 0.0;     // bound on ||delta a||^2, in [0, 4N]
  double beta_dist = 0.0;  // 9 sigma_d^2, m^2
};

/// Exact response-vector deviation a(center + delta) - a(center).
inline VecC delta_a_exact(const channel::ArrayGeometry& g, double theta_bar, double d_bar, double dtheta,
                          double ddist) {
  return channel::array_response(g, {theta_bar + dtheta, d_bar + ddist}) -
         channel::array_response(g, {theta_bar, d_bar});
}

/// Sum-of-cosines form of Re{a(center)^H a(center + delta)}; equals N at zero
/// perturbation and satisfies ||delta a||^2 = 2N - 2 phi.
inline double phi_exact(const channel::ArrayGeometry& g, double theta_bar, double d_bar, double dtheta,
                        double ddist) {
  const double k = 2.0 * kPi / g.wavelength;
  const double theta = theta_bar + dtheta;
  const double dist = d_bar + ddist;
  const double cb = std::cos(theta_bar), ct = std::cos(theta);
  const double sb = std::sin(theta_bar), st = std::sin(theta);
  double phi = 0.0;
  for (int i = 0; i < g.num_antennas; ++i) {
    const double nd = g.index_set[i] * g.spacing;
    const double arg = k * (nd * (cb - ct) + 0.5 * nd * nd * (st * st / dist - sb * sb / d_bar));
    phi += std::cos(arg);
  }
  return phi;
}

/// First-order phase deviation coefficients: element n sees the linearized
/// phase error A_n * dtheta + B_n * ddist.
inline std::vector<std::pair<double, double>> vartheta_coeffs(const channel::ArrayGeometry& g, double theta_bar,
                                                              double d_bar) {
  const double k = 2.0 * kPi / g.wavelength;
  const double sb = std::sin(theta_bar);
  const double s2b = std::sin(2.0 * theta_bar);
  std::vector<std::pair<double, double>> out;
  out.reserve(g.num_antennas);
  for (int i = 0; i < g.num_antennas; ++i) {
    const double nd = g.index_set[i] * g.spacing;
    const double a = k * (nd * sb + 0.5 * nd * nd * s2b / d_bar);
    const double b = -k * 0.5 * nd * nd * sb * sb / (d_bar * d_bar);
    out.emplace_back(a, b);
  }
  return out;
}

/// Robust radius beta_a: the maximum of the quadratic surrogate
/// sum_n (A_n dtheta + B_n ddist)^2 over the three-sigma box. The quadratic
/// is convex, so the maximum over the box sits at a vertex; the result is
/// clamped to [0, 4N] (the diameter bound for unit-modulus vectors).
inline double beta_a(const channel::ArrayGeometry& g, const UncertaintyBox& box, double safety = 1.0) {
  box.validate();
  const auto coeffs = vartheta_coeffs(g, box.theta_center, box.dist_center);
  double saa = 0.0, sab = 0.0, sbb = 0.0;
  for (const auto& [a, b] : coeffs) {
    saa += a * a;
    sab += a * b;
    sbb += b * b;
  }
  const double ht = box.theta_halfwidth(), hd = box.dist_halfwidth();
  double best = 0.0;
  for (double st : {-1.0, 1.0}) {
    for (double sd : {-1.0, 1.0}) {
      const double dt = st * ht, dd = sd * hd;
      best = std::max(best, saa * dt * dt + 2.0 * sab * dt * dd + sbb * dd * dd);
    }
  }
  best *= safety;
  return std::min(std::max(best, 0.0), 4.0 * static_cast<double>(g.num_antennas));
}

inline RobustRadii robust_radii(const channel::ArrayGeometry& g, const UncertaintyBox& box, double safety = 1.0) {
  RobustRadii r;
  r.beta_a = beta_a(g, box, safety);
  r.beta_dist = 9.0 * box.sigma_dist * box.sigma_dist;
  return r;
}

}  // namespace nfsec::uncertainty
