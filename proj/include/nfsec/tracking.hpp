#pragma once

#include <stdexcept>

#include "nfsec/channel.hpp"
#include "nfsec/linalg.hpp"
#include "nfsec/rng.hpp"

namespace nfsec::tracking {

/// Eavesdropper kinematic state s = [theta, d, vx, vy].
struct EveState {
  double angle = 0.0;     // radians
  double distance = 0.0;  // meters
  double vx = 0.0;        // m/s
  double vy = 0.0;        // m/s

  channel::PolarPosition position() const { return {angle, distance}; }

  VecR to_vector() const {
    VecR s(4);
    s << angle, distance, vx, vy;
    return s;
  }

  static EveState from_vector(const VecR& s) { return {s[0], s[1], s[2], s[3]}; }
};

struct TrackBelief {
  EveState state;
  MatR cov = MatR::Zero(4, 4);
};

/// Radar constants: measurement-variance coefficients, symbol count, BS noise
/// power, nominal RCS, process noise stds, and slot duration.
struct MeasurementConstants {
  double a_tau = 0.0;
  double a_nu = 0.0;
  double a_theta = 0.0;
  double symbols = 0.0;        // G
  double noise_bs = 0.0;       // sigma_s^2, watts
  double rcs = 1.0;            // nominal beta
  double sigma_theta = 0.0;    // process stds
  double sigma_dist = 0.0;
  double sigma_vx = 0.0;
  double sigma_vy = 0.0;
  double slot_duration = 0.0;  // seconds

  void validate() const {
    for (double v : {a_tau, a_nu, a_theta, symbols, noise_bs, rcs, sigma_theta, sigma_dist, sigma_vx, sigma_vy, slot_duration}) {
      if (!(v > 0.0)) throw std::invalid_argument("MeasurementConstants: all entries must be strictly positive");
    }
  }

  MatR process_cov() const {
    VecR d(4);
    d << sigma_theta * sigma_theta, sigma_dist * sigma_dist, sigma_vx * sigma_vx, sigma_vy * sigma_vy;
    return d.asDiagonal();
  }
};

struct Measurement {
  double delay = 0.0;    // tau, seconds
  double doppler = 0.0;  // nu, Hz
  double angle = 0.0;    // radians
};

/// Noiseless constant-velocity motion in polar coordinates: the angle moves
/// with the tangential velocity over distance, the distance with the radial
/// velocity, velocities stay constant.
inline EveState state_transition(const EveState& s, double dt) {
  const double ct = std::cos(s.angle), st = std::sin(s.angle);
  EveState out = s;
  out.angle = s.angle + (s.vy * ct - s.vx * st) * dt / s.distance;
  out.distance = s.distance + (s.vx * ct + s.vy * st) * dt;
  return out;
}

inline MatR jacobian_motion(const EveState& s, double dt) {
  const double ct = std::cos(s.angle), st = std::sin(s.angle);
  MatR f = MatR::Identity(4, 4);
  f(0, 0) = 1.0 + (-s.vy * st - s.vx * ct) * dt / s.distance;
  f(0, 1) = -(s.vy * ct - s.vx * st) * dt / (s.distance * s.distance);
  f(0, 2) = -st * dt / s.distance;
  f(0, 3) = ct * dt / s.distance;
  f(1, 0) = (-s.vx * st + s.vy * ct) * dt;
  f(1, 2) = ct * dt;
  f(1, 3) = st * dt;
  return f;
}

/// Round-trip delay, Doppler shift, and angle seen by the monostatic radar.
inline Measurement measurement_fn(const EveState& s, double wavelength) {
  Measurement m;
  m.delay = 2.0 * s.distance / kSpeedOfLight;
  m.doppler = -(2.0 / wavelength) * (s.vx * std::cos(s.angle) + s.vy * std::sin(s.angle));
  m.angle = s.angle;
  return m;
}

inline MatR jacobian_measurement(const EveState& s, double wavelength) {
  const double ct = std::cos(s.angle), st = std::sin(s.angle);
  MatR g = MatR::Zero(3, 4);
  g(0, 1) = 2.0 / kSpeedOfLight;
  g(1, 0) = -(2.0 / wavelength) * (-s.vx * st + s.vy * ct);
  g(1, 2) = -(2.0 / wavelength) * ct;
  g(1, 3) = -(2.0 / wavelength) * st;
  g(2, 0) = 1.0;
  return g;
}

inline TrackBelief predict(const TrackBelief& b, double dt, const MatR& process_cov) {
  TrackBelief out;
  out.state = state_transition(b.state, dt);
  const MatR f = jacobian_motion(b.state, dt);
  out.cov = symmetric_part(f * b.cov * f.transpose() + process_cov);
  return out;
}

/// Echo SNR gamma = alpha^2 beta^2 G N a^H Z a / (d^4 sigma_s^2).
inline double sensing_snr(const MatC& z, const channel::PolarPosition& pos, const MeasurementConstants& c,
                          const channel::ArrayGeometry& g) {
  const VecC a = channel::array_response(g, pos);
  double q = quad_form(a, z, a);
  const double scale = std::max(1.0, std::abs(z.trace().real()));
  if (q < -1e-9 * scale * g.num_antennas) throw std::invalid_argument("sensing_snr: Z is not PSD");
  q = std::max(q, 0.0);
  const double alpha = g.alpha();
  const double d2 = pos.distance * pos.distance;
  return alpha * alpha * c.rcs * c.rcs * c.symbols * g.num_antennas * q / (d2 * d2 * c.noise_bs);
}

/// Measurement covariance diag(a_tau^2, a_nu^2, a_theta^2) / gamma.
inline MatR measurement_noise_cov(double snr, const MeasurementConstants& c) {
  if (!(snr > 0.0)) throw std::domain_error("measurement_noise_cov: non-positive SNR, target unobservable");
  VecR d(3);
  d << c.a_tau * c.a_tau, c.a_nu * c.a_nu, c.a_theta * c.a_theta;
  return (d / snr).asDiagonal();
}

/// EKF measurement update. The mean uses the Kalman gain; the covariance is
/// formed in information form, which is the numerically safer of the two
/// algebraically equivalent expressions.
inline TrackBelief update(const TrackBelief& pred, const Measurement& u, const MatR& meas_cov, double wavelength) {
  const MatR g = jacobian_measurement(pred.state, wavelength);
  const MatR innov_cov = g * pred.cov * g.transpose() + meas_cov;
  Eigen::LLT<MatR> innov_llt(innov_cov);
  if (innov_llt.info() != Eigen::Success) throw std::runtime_error("ekf update: singular innovation covariance");
  const MatR gain = pred.cov * g.transpose() * innov_llt.solve(MatR::Identity(3, 3));

  const Measurement pred_meas = measurement_fn(pred.state, wavelength);
  VecR innov(3);
  innov << u.delay - pred_meas.delay, u.doppler - pred_meas.doppler, wrap_angle(u.angle - pred_meas.angle);

  TrackBelief out;
  out.state = EveState::from_vector(pred.state.to_vector() + gain * innov);

  Eigen::LLT<MatR> pred_llt(pred.cov);
  if (pred_llt.info() != Eigen::Success) throw std::runtime_error("ekf update: singular prior covariance");
  const MatR info = pred_llt.solve(MatR::Identity(4, 4)) +
                    g.transpose() * meas_cov.llt().solve(MatR::Identity(3, 3)) * g;
  out.cov = symmetric_part(Eigen::LLT<MatR>(symmetric_part(info)).solve(MatR::Identity(4, 4)));
  return out;
}

struct SynthesizedMeasurement {
  Measurement value;
  double snr = 0.0;
};

/// Draws a noisy measurement of the true state with variances from the SNR
/// realized by the given sensing covariance at the true position.
inline SynthesizedMeasurement synthesize_measurement(const EveState& truth, const MatC& z,
                                                     const MeasurementConstants& c,
                                                     const channel::ArrayGeometry& g, Rng& rng) {
  SynthesizedMeasurement out;
  out.value = measurement_fn(truth, g.wavelength);
  out.snr = sensing_snr(z, truth.position(), c, g);
  if (out.snr > 0.0) {
    const double root = std::sqrt(out.snr);
    out.value.delay += c.a_tau / root * rng.normal();
    out.value.doppler += c.a_nu / root * rng.normal();
    out.value.angle += c.a_theta / root * rng.normal();
  }
  return out;
}

}  // namespace nfsec::tracking
