#include <catch2/catch.hpp>

#include "nfsec/tracking.hpp"
#include "oracles.hpp"

using namespace nfsec;
using namespace nfsec::tracking;

namespace {
MeasurementConstants desk_constants() {
  MeasurementConstants c;
  c.a_tau = 1e-6;
  c.a_nu = 600.0;
  c.a_theta = 0.1;
  c.symbols = 1e4;
  c.noise_bs = 1e-11;
  c.rcs = 1.0;
  c.sigma_theta = deg2rad(0.02);
  c.sigma_dist = 0.2;
  c.sigma_vx = 0.15;
  c.sigma_vy = 0.15;
  c.slot_duration = 0.2;
  return c;
}
}  // namespace

TEST_CASE("state transition basics") {
  EveState s{1.1, 10.0, 0.0, 0.0};
  const EveState out = state_transition(s, 0.5);
  CHECK(out.angle == s.angle);
  CHECK(out.distance == s.distance);

  // broadside, purely radial motion
  EveState r{kPi / 2.0, 10.0, 0.0, 1.0};
  const EveState ro = state_transition(r, 0.2);
  CHECK(ro.distance == Approx(10.2).margin(1e-12));
  CHECK(ro.angle == Approx(kPi / 2.0).margin(1e-12));
}

TEST_CASE("state transition matches the Cartesian advance to first order") {
  Rng rng(17);
  for (int t = 0; t < 30; ++t) {
    EveState s{rng.uniform(0.3, 2.8), rng.uniform(3.0, 30.0), rng.uniform(-5.0, 5.0), rng.uniform(-5.0, 5.0)};
    const double dt = 0.2;
    const EveState mine = state_transition(s, dt);
    const EveState exact = oracles::cartesian_advance(s, dt);
    const double speed = std::hypot(s.vx, s.vy);
    const double second_order = (dt * speed / s.distance) * (dt * speed);
    CHECK(std::abs(mine.distance - exact.distance) <= 2.0 * second_order + 1e-12);
    CHECK(std::abs(mine.angle - exact.angle) <= 2.0 * second_order / s.distance + 1e-12);
  }
}

TEST_CASE("motion jacobian") {
  EveState still{0.9, 12.0, 0.0, 0.0};
  const MatR f0 = jacobian_motion(still, 0.2);
  CHECK(f0(0, 0) == 1.0);
  CHECK(f0(1, 1) == 1.0);
  CHECK(f0(0, 1) == 0.0);  // no velocity, no angle-distance coupling
  CHECK(f0(0, 3) == Approx(std::cos(0.9) * 0.2 / 12.0));

  EveState any{1.2, 8.0, 2.0, -1.0};
  CHECK((jacobian_motion(any, 0.0) - MatR::Identity(4, 4)).cwiseAbs().maxCoeff() == 0.0);

  Rng rng(23);
  for (int t = 0; t < 20; ++t) {
    EveState s{rng.uniform(0.3, 2.8), rng.uniform(3.0, 30.0), rng.uniform(-6.0, 6.0), rng.uniform(-6.0, 6.0)};
    auto fn = [&](const VecR& v) { return state_transition(EveState::from_vector(v), 0.2).to_vector(); };
    const MatR fd = oracles::fd_jacobian(fn, s.to_vector(), 4, 1e-6);
    const MatR an = jacobian_motion(s, 0.2);
    CHECK((fd - an).norm() / an.norm() < 1e-5);
  }
}

TEST_CASE("measurement function") {
  EveState s{1.0, 150.0, 0.0, 0.0};
  const auto m = measurement_fn(s, 0.0107);
  CHECK(m.delay == Approx(1e-6).epsilon(1e-3));
  CHECK(m.doppler == 0.0);
  CHECK(m.angle == 1.0);

  EveState sv{deg2rad(60.0), 9.0, 1.0, 1.0};
  const auto mv = measurement_fn(sv, 0.0107);
  // independent scalar evaluation
  const double nu = -(2.0 / 0.0107) * (1.0 * std::cos(deg2rad(60.0)) + 1.0 * std::sin(deg2rad(60.0)));
  CHECK(mv.doppler == Approx(nu).epsilon(1e-14));
}

TEST_CASE("measurement jacobian") {
  EveState still{1.3, 20.0, 0.0, 0.0};
  const MatR g0 = jacobian_measurement(still, 0.0107);
  CHECK(g0(1, 0) == 0.0);  // doppler insensitive to angle at zero velocity
  CHECK(g0(0, 1) == Approx(2.0 / kSpeedOfLight));

  Rng rng(31);
  for (int t = 0; t < 20; ++t) {
    EveState s{rng.uniform(0.3, 2.8), rng.uniform(3.0, 30.0), rng.uniform(-6.0, 6.0), rng.uniform(-6.0, 6.0)};
    auto fn = [&](const VecR& v) {
      const auto m = measurement_fn(EveState::from_vector(v), 0.0107);
      VecR out(3);
      out << m.delay, m.doppler, m.angle;
      return out;
    };
    const MatR fd = oracles::fd_jacobian(fn, s.to_vector(), 3, 1e-6);
    const MatR an = jacobian_measurement(s, 0.0107);
    CHECK((fd - an).norm() / an.norm() < 1e-5);
  }
}

TEST_CASE("predict") {
  TrackBelief b;
  b.state = {1.0, 10.0, 1.0, -1.0};
  b.cov = MatR::Zero(4, 4);
  const MatR q = 0.01 * MatR::Identity(4, 4);
  CHECK(predict(b, 0.2, MatR::Zero(4, 4)).cov.cwiseAbs().maxCoeff() == 0.0);
  CHECK((predict(b, 0.2, q).cov - q).cwiseAbs().maxCoeff() < 1e-15);

  Rng rng(7);
  for (int t = 0; t < 10; ++t) {
    const MatR a = oracles::random_symmetric(4, rng);
    b.cov = a * a.transpose() + 1e-6 * MatR::Identity(4, 4);
    const TrackBelief out = predict(b, 0.2, q);
    CHECK(min_eigenvalue(out.cov) > -1e-10);
    CHECK((out.cov - out.cov.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("sensing snr") {
  const auto g = channel::ArrayGeometry::from_aperture(8, 1.0, kSpeedOfLight / 28e9);
  const auto c = desk_constants();
  const channel::PolarPosition pos{1.1, 6.0};
  CHECK(sensing_snr(MatC::Zero(8, 8), pos, c, g) == 0.0);

  const double alpha = g.alpha();
  const double expect =
      alpha * alpha * c.rcs * c.rcs * c.symbols * 8.0 * 8.0 / (std::pow(6.0, 4) * c.noise_bs);
  CHECK(sensing_snr(MatC::Identity(8, 8), pos, c, g) == Approx(expect).epsilon(1e-12));
  CHECK(sensing_snr(MatC(2.0 * MatC::Identity(8, 8)), pos, c, g) == Approx(2.0 * expect).epsilon(1e-12));

  CHECK_THROWS_AS(sensing_snr(MatC(-MatC::Identity(8, 8)), pos, c, g), std::invalid_argument);
}

TEST_CASE("measurement noise covariance") {
  const auto c = desk_constants();
  const MatR q1 = measurement_noise_cov(1.0, c);
  CHECK(q1(0, 0) == Approx(1e-12));
  CHECK(q1(1, 1) == Approx(360000.0));
  CHECK(q1(2, 2) == Approx(0.01));
  const MatR q2 = measurement_noise_cov(2.0, c);
  CHECK(q2(0, 0) == Approx(0.5e-12));
  CHECK_THROWS_AS(measurement_noise_cov(0.0, c), std::domain_error);
}

TEST_CASE("ekf update limits") {
  TrackBelief pred;
  pred.state = {1.0, 10.0, 1.0, 0.5};
  pred.cov = MatR::Identity(4, 4) * 0.1;
  const double wl = 0.0107;

  Measurement u = measurement_fn(pred.state, wl);
  u.delay += 2.0e-8;
  u.angle += 0.01;

  // nearly uninformative measurement: posterior ~ prior
  const TrackBelief loose = update(pred, u, MatR(VecR::Constant(3, 1e12).asDiagonal()), wl);
  CHECK((loose.cov - pred.cov).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((loose.state.to_vector() - pred.state.to_vector()).cwiseAbs().maxCoeff() < 1e-6);

  // nearly exact measurement of (tau, theta): those components pin
  VecR dq(3);
  dq << 1e-22, 1e-4, 1e-14;
  const TrackBelief tight = update(pred, u, MatR(dq.asDiagonal()), wl);
  CHECK(tight.state.distance == Approx(u.delay * kSpeedOfLight / 2.0).margin(1e-6));
  CHECK(tight.state.angle == Approx(u.angle).margin(1e-6));
}

TEST_CASE("both covariance update forms agree") {
  Rng rng(41);
  const double wl = 0.0107;
  for (int t = 0; t < 25; ++t) {
    TrackBelief pred;
    pred.state = {rng.uniform(0.4, 2.7), rng.uniform(4.0, 25.0), rng.uniform(-4.0, 4.0), rng.uniform(-4.0, 4.0)};
    const MatR a = oracles::random_symmetric(4, rng);
    pred.cov = a * a.transpose() + 0.05 * MatR::Identity(4, 4);
    VecR dq(3);
    dq << std::pow(10.0, rng.uniform(-14.0, -12.0)), rng.uniform(0.5, 100.0), rng.uniform(1e-4, 1e-2);
    const MatR qm = dq.asDiagonal();

    const MatR g = jacobian_measurement(pred.state, wl);
    const MatR gain = pred.cov * g.transpose() * (g * pred.cov * g.transpose() + qm).inverse();
    const MatR joseph = (MatR::Identity(4, 4) - gain * g) * pred.cov;

    Measurement u = measurement_fn(pred.state, wl);
    const TrackBelief post = update(pred, u, qm, wl);
    CHECK((post.cov - joseph).cwiseAbs().maxCoeff() < 1e-8 * std::max(1.0, joseph.cwiseAbs().maxCoeff()));

    // posterior trace never exceeds prior trace
    CHECK(post.cov.trace() <= pred.cov.trace() + 1e-10);
  }
}

TEST_CASE("measurement synthesis") {
  const auto g = channel::ArrayGeometry::from_aperture(8, 1.0, kSpeedOfLight / 28e9);
  auto c = desk_constants();
  const EveState truth{1.2, 5.0, 2.0, -1.0};
  const MatC z = 0.5 * MatC::Identity(8, 8);

  // determinism under a fixed substream
  Rng r1 = Rng::substream(99, "measurement", 4);
  Rng r2 = Rng::substream(99, "measurement", 4);
  const auto m1 = synthesize_measurement(truth, z, c, g, r1);
  const auto m2 = synthesize_measurement(truth, z, c, g, r2);
  CHECK(m1.value.delay == m2.value.delay);
  CHECK(m1.value.doppler == m2.value.doppler);
  CHECK(m1.value.angle == m2.value.angle);

  // zero-noise limit
  auto c0 = c;
  c0.a_tau = c0.a_nu = c0.a_theta = 1e-30;
  Rng r3(5);
  const auto m0 = synthesize_measurement(truth, z, c0, g, r3);
  const auto exact = measurement_fn(truth, g.wavelength);
  CHECK(m0.value.delay == Approx(exact.delay).margin(1e-20));
  CHECK(m0.value.angle == Approx(exact.angle).margin(1e-20));

  // empirical variance of the delay noise across 1e4 draws
  Rng r4(12);
  const double snr = sensing_snr(z, truth.position(), c, g);
  double acc = 0.0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const auto m = synthesize_measurement(truth, z, c, g, r4);
    const double d = m.value.delay - exact.delay;
    acc += d * d;
  }
  const double want = c.a_tau * c.a_tau / snr;
  CHECK(acc / n == Approx(want).epsilon(0.05));
}
