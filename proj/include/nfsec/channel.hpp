#pragma once

#include <stdexcept>
#include <vector>

#include "nfsec/linalg.hpp"

namespace nfsec::channel {

/// Uniform linear array centered at the origin. The element index set is
/// symmetric around zero: integers for odd N, half-integers for even N, so
/// the aperture spacing*(N-1) is exact for both parities.
struct ArrayGeometry {
  int num_antennas = 0;
  double spacing = 0.0;     // meters
  double wavelength = 0.0;  // meters
  VecR index_set;

  static ArrayGeometry from_spacing(int n, double spacing, double wavelength) {
    if (n < 1) throw std::invalid_argument("ArrayGeometry: num_antennas must be >= 1");
    if (spacing <= 0.0) throw std::invalid_argument("ArrayGeometry: spacing must be > 0");
    if (wavelength <= 0.0) throw std::invalid_argument("ArrayGeometry: wavelength must be > 0");
    ArrayGeometry g;
    g.num_antennas = n;
    g.spacing = spacing;
    g.wavelength = wavelength;
    g.index_set.resize(n);
    for (int i = 0; i < n; ++i) g.index_set[i] = -0.5 * (n - 1) + i;
    return g;
  }

  static ArrayGeometry from_aperture(int n, double aperture, double wavelength) {
    if (n < 2) throw std::invalid_argument("ArrayGeometry: aperture form needs n >= 2");
    return from_spacing(n, aperture / (n - 1), wavelength);
  }

  double aperture() const { return spacing * (num_antennas - 1); }

  /// Free-space gain factor alpha = (lambda / 4 pi)^2.
  double alpha() const {
    const double r = wavelength / (4.0 * kPi);
    return r * r;
  }
};

struct PolarPosition {
  double angle = 0.0;     // radians, in (0, pi)
  double distance = 0.0;  // meters, > 0

  void validate() const {
    if (!(distance > 0.0)) throw std::invalid_argument("PolarPosition: distance must be > 0");
    if (!(angle > 0.0 && angle < kPi)) throw std::invalid_argument("PolarPosition: angle must be in (0, pi)");
  }
};

/// Channel h = sqrt(alpha)/d * a(theta, d) together with the gain model.
struct ChannelVector {
  VecC entries;
  double alpha = 0.0;
  double distance = 0.0;
};

/// Near-field array response: element n carries the phase
/// -2 pi / lambda * (-n d cos(theta) + n^2 d^2 sin^2(theta) / (2 dist)).
inline VecC array_response(const ArrayGeometry& g, const PolarPosition& p) {
  p.validate();
  const double k = 2.0 * kPi / g.wavelength;
  const double ct = std::cos(p.angle);
  const double st = std::sin(p.angle);
  VecC a(g.num_antennas);
  for (int i = 0; i < g.num_antennas; ++i) {
    const double nd = g.index_set[i] * g.spacing;
    const double phase = -k * (-nd * ct + nd * nd * st * st / (2.0 * p.distance));
    a[i] = std::polar(1.0, phase);
  }
  return a;
}

/// Far-field steering restriction of the response: the distance-dependent
/// quadratic phase term is dropped.
inline VecC steering_response(const ArrayGeometry& g, const PolarPosition& p) {
  p.validate();
  const double k = 2.0 * kPi / g.wavelength;
  const double ct = std::cos(p.angle);
  VecC a(g.num_antennas);
  for (int i = 0; i < g.num_antennas; ++i) a[i] = std::polar(1.0, k * g.index_set[i] * g.spacing * ct);
  return a;
}

inline ChannelVector channel_vector(const ArrayGeometry& g, const PolarPosition& p, bool far_field = false) {
  ChannelVector h;
  h.alpha = g.alpha();
  h.distance = p.distance;
  h.entries = (std::sqrt(h.alpha) / p.distance) * (far_field ? steering_response(g, p) : array_response(g, p));
  return h;
}

inline double rayleigh_distance(double aperture, double wavelength) {
  if (wavelength <= 0.0) throw std::invalid_argument("rayleigh_distance: wavelength must be > 0");
  if (aperture < 0.0) throw std::invalid_argument("rayleigh_distance: aperture must be >= 0");
  return 2.0 * aperture * aperture / wavelength;
}

/// Joint transmit decision. Beamformers may be present as vectors (w),
/// covariances (W), or both; rate evaluation prefers vectors when available.
struct DesignPoint {
  std::vector<VecC> w;
  std::vector<MatC> W;
  MatC Z;
  std::vector<int> schedule;

  bool has_vectors() const { return !w.empty(); }

  double signal_power(int user, const VecC& h) const {
    if (has_vectors()) {
      const cplx v = h.dot(w[user]);
      return std::norm(v);
    }
    return quad_form(h, W[user], h);
  }

  double total_power() const {
    double p = 0.0;
    for (std::size_t k = 0; k < schedule.size(); ++k) {
      if (!schedule[k]) continue;
      if (has_vectors()) p += w[k].squaredNorm();
      else p += std::real(W[k].trace());
    }
    if (Z.size() > 0) p += std::real(Z.trace());
    return p;
  }
};

/// Achievable rate of user k per the SINR with multiuser interference from
/// scheduled users only and the sensing signal as additional interference.
inline double achievable_rate(int k, const DesignPoint& d, const std::vector<VecC>& h, double noise_power) {
  if (noise_power < 0.0) throw std::invalid_argument("achievable_rate: negative noise power");
  if (!d.schedule[k]) return 0.0;
  const double sig = d.signal_power(k, h[k]);
  double denom = noise_power;
  for (std::size_t j = 0; j < d.schedule.size(); ++j) {
    if (static_cast<int>(j) == k || !d.schedule[j]) continue;
    denom += d.signal_power(static_cast<int>(j), h[k]);
  }
  if (d.Z.size() > 0) denom += quad_form(h[k], d.Z, h[k]);
  return std::log2(1.0 + sig / denom);
}

/// Worst-case leakage rate of user k's stream at the eavesdropper: multiuser
/// interference is assumed cancelled, only the sensing signal jams.
inline double leakage_rate(int k, const DesignPoint& d, const VecC& h_eve, double noise_power) {
  if (noise_power < 0.0) throw std::invalid_argument("leakage_rate: negative noise power");
  if (!d.schedule[k]) return 0.0;
  const double sig = d.signal_power(k, h_eve);
  double denom = noise_power;
  if (d.Z.size() > 0) denom += quad_form(h_eve, d.Z, h_eve);
  return std::log2(1.0 + sig / denom);
}

/// Normalized power pattern |a(theta, d)^H w|^2 (or a^H W a) over a polar
/// grid; rows follow distances, columns follow angles, peak normalized to 1.
inline MatR beampattern(const MatC& cov, const ArrayGeometry& g, const VecR& angles, const VecR& dists) {
  if (angles.size() == 0 || dists.size() == 0) throw std::invalid_argument("beampattern: empty grid");
  MatR out(dists.size(), angles.size());
  for (Eigen::Index i = 0; i < dists.size(); ++i) {
    for (Eigen::Index j = 0; j < angles.size(); ++j) {
      const VecC a = array_response(g, {angles[j], dists[i]});
      out(i, j) = quad_form(a, cov, a);
    }
  }
  const double peak = out.maxCoeff();
  if (!(peak > 0.0)) throw std::invalid_argument("beampattern: degenerate (all-zero) weights");
  return out / peak;
}

inline MatR beampattern(const VecC& w, const ArrayGeometry& g, const VecR& angles, const VecR& dists) {
  return beampattern(MatC(w * w.adjoint()), g, angles, dists);
}

}  // namespace nfsec::channel
