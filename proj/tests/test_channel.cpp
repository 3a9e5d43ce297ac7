#include <catch2/catch.hpp>

#include "nfsec/channel.hpp"
#include "nfsec/rng.hpp"
#include "oracles.hpp"

using namespace nfsec;
using namespace nfsec::channel;

namespace {
ArrayGeometry paper_array(int n = 64) {
  return ArrayGeometry::from_aperture(n, 1.0, kSpeedOfLight / 28e9);
}
}  // namespace

TEST_CASE("array response center element and far-field broadside") {
  const auto g = ArrayGeometry::from_spacing(5, 0.0158, 0.0107);
  const VecC a = array_response(g, {deg2rad(37.0), 2.2});
  CHECK(std::abs(a[2] - cplx(1.0, 0.0)) < 1e-15);  // n = 0

  const auto g3 = ArrayGeometry::from_spacing(3, 0.0107 / 2.0, 0.0107);
  const VecC b = array_response(g3, {kPi / 2.0, 1e9});
  for (int i = 0; i < 3; ++i) CHECK(std::abs(b[i] - cplx(1.0, 0.0)) < 1e-6);
}

TEST_CASE("array response matches independent elementwise evaluation") {
  const auto g = ArrayGeometry::from_spacing(5, 0.0158, 0.0107);
  const VecC a = array_response(g, {deg2rad(60.0), 5.5});
  const auto ref = oracles::response_scalar(5, 0.0158, 0.0107, deg2rad(60.0), 5.5);
  for (int i = 0; i < 5; ++i) CHECK(std::abs(a[i] - ref[i]) < 1e-13);
}

TEST_CASE("array response norm identity") {
  Rng rng(11);
  const auto g = paper_array(17);
  for (int t = 0; t < 50; ++t) {
    const double theta = rng.uniform(0.02, kPi - 0.02);
    const double d = rng.uniform(0.5, 200.0);
    CHECK(array_response(g, {theta, d}).squaredNorm() == Approx(17.0).margin(1e-12));
  }
}

TEST_CASE("far-field consistency of the near-field response") {
  const auto g = paper_array(16);
  const double rd = rayleigh_distance(g.aperture(), g.wavelength);
  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    const double theta = rng.uniform(0.1, kPi - 0.1);
    // max elementwise deviation at distance f*RD is 2 sin(pi/(16 f))
    for (double f : {100.0, 500.0}) {
      const double d = f * rd;
      const VecC a = array_response(g, {theta, d});
      const VecC s = steering_response(g, {theta, d});
      const double bound = (f >= 500.0) ? 1e-3 : 2.0 * std::sin(kPi / (16.0 * f)) + 1e-12;
      CHECK((a - s).cwiseAbs().maxCoeff() < bound);
    }
  }
}

TEST_CASE("channel vector scaling") {
  const auto g = ArrayGeometry::from_spacing(7, 0.01, 0.012);
  const ChannelVector h1 = channel_vector(g, {1.0, 3.0});
  const ChannelVector h2 = channel_vector(g, {1.0, 6.0});
  // 1/d gain: doubling distance halves each magnitude (phases differ)
  CHECK(h2.entries.cwiseAbs().maxCoeff() == Approx(0.5 * h1.entries.cwiseAbs().maxCoeff()).epsilon(1e-12));

  const auto g2 = ArrayGeometry::from_spacing(4, 1.0, 4.0 * kPi);
  const ChannelVector h3 = channel_vector(g2, {0.7, 2.0});
  CHECK(g2.alpha() == Approx(1.0));
  const VecC a = array_response(g2, {0.7, 2.0});
  CHECK((h3.entries - a / 2.0).cwiseAbs().maxCoeff() < 1e-15);

  CHECK(paper_array().alpha() == Approx(7.2594e-7).epsilon(1e-3));
}

TEST_CASE("achievable rate basics") {
  const auto g = ArrayGeometry::from_spacing(4, 0.02, 0.01);
  std::vector<VecC> h = {channel_vector(g, {1.1, 4.0}).entries};

  DesignPoint d;
  d.schedule = {0};
  d.w = {VecC::Ones(4)};
  d.Z = MatC::Zero(4, 4);
  CHECK(achievable_rate(0, d, h, 1e-10) == 0.0);

  d.schedule = {1};
  // scale w so that |h^H w|^2 / sigma^2 = 63
  const double sig = 1e-9;
  const cplx hw = h[0].dot(d.w[0]);
  d.w[0] *= std::sqrt(63.0 * sig) / std::abs(hw);
  CHECK(achievable_rate(0, d, h, sig) == Approx(6.0).epsilon(1e-12));

  CHECK_THROWS_AS(achievable_rate(0, d, h, -1.0), std::invalid_argument);
}

TEST_CASE("rates match an independent oracle on random designs") {
  Rng rng(29);
  const auto g = ArrayGeometry::from_spacing(6, 0.015, 0.011);
  std::vector<VecC> h;
  for (int k = 0; k < 2; ++k) h.push_back(channel_vector(g, {rng.uniform(0.5, 2.5), rng.uniform(2.0, 8.0)}).entries);
  const VecC he = channel_vector(g, {rng.uniform(0.5, 2.5), rng.uniform(2.0, 8.0)}).entries;

  for (int t = 0; t < 20; ++t) {
    DesignPoint d;
    d.schedule = {1, t % 2};
    d.w = {1e-4 * oracles::random_cvector(6, rng), 1e-4 * oracles::random_cvector(6, rng)};
    const VecC zv = 1e-4 * oracles::random_cvector(6, rng);
    d.Z = zv * zv.adjoint();
    const double noise = 1e-10;
    for (int k = 0; k < 2; ++k) {
      CHECK(achievable_rate(k, d, h, noise) ==
            Approx(oracles::rate_scalar(k, d.w, d.Z, d.schedule, h, noise)).margin(1e-12));
      CHECK(leakage_rate(k, d, he, noise) ==
            Approx(oracles::leakage_scalar(k, d.w, d.Z, d.schedule, he, noise)).margin(1e-12));
    }
  }
}

TEST_CASE("rate monotonicity properties") {
  Rng rng(5);
  const auto g = ArrayGeometry::from_spacing(5, 0.014, 0.011);
  std::vector<VecC> h = {channel_vector(g, {1.0, 5.0}).entries, channel_vector(g, {2.0, 4.0}).entries};
  const VecC he = channel_vector(g, {1.4, 3.0}).entries;
  DesignPoint d;
  d.schedule = {1, 1};
  d.w = {1e-4 * oracles::random_cvector(5, rng), 1e-4 * oracles::random_cvector(5, rng)};
  const VecC zv = 1e-4 * oracles::random_cvector(5, rng);
  d.Z = zv * zv.adjoint();

  double prev_rate = 1e9, prev_leak = 1e9;
  for (double noise : {1e-12, 1e-11, 1e-10, 1e-9}) {
    const double r = achievable_rate(0, d, h, noise);
    const double l = leakage_rate(0, d, he, noise);
    CHECK(r <= prev_rate + 1e-12);
    CHECK(l <= prev_leak + 1e-12);
    prev_rate = r;
    prev_leak = l;
  }

  // leakage non-increasing when Z is scaled up with W fixed
  double prev = 1e9;
  for (double t : {1.0, 2.0, 5.0, 20.0}) {
    DesignPoint ds = d;
    ds.Z = t * d.Z;
    const double l = leakage_rate(0, ds, he, 1e-10);
    CHECK(l <= prev + 1e-12);
    prev = l;
  }

  // jamming-dominated limit
  DesignPoint dz = d;
  dz.Z = 1e12 * (he * he.adjoint());
  CHECK(leakage_rate(0, dz, he, 1e-10) < 1e-6);
}

TEST_CASE("beampattern focuses at the matched point") {
  const auto g = paper_array(32);
  const double th0 = deg2rad(63.0), d0 = 3.0;
  const VecC w = array_response(g, {th0, d0}) / std::sqrt(32.0);

  VecR angles(41), dists(31);
  for (int i = 0; i < 41; ++i) angles[i] = deg2rad(43.0 + i);
  for (int i = 0; i < 31; ++i) dists[i] = 1.0 + 0.2 * i;
  const MatR bp = beampattern(w, g, angles, dists);

  Eigen::Index bi, bj;
  bp.maxCoeff(&bi, &bj);
  CHECK(angles[bj] == Approx(th0).margin(1e-12));
  CHECK(dists[bi] == Approx(d0).margin(1e-12));
  CHECK(bp.maxCoeff() == Approx(1.0));
  CHECK(bp.minCoeff() >= 0.0);

  CHECK_THROWS_AS(beampattern(VecC::Zero(32).eval(), g, angles, dists), std::invalid_argument);
  CHECK_THROWS_AS(beampattern(w, g, VecR(), dists), std::invalid_argument);
}

TEST_CASE("rayleigh distance") {
  CHECK(rayleigh_distance(1.0, kSpeedOfLight / 28e9) == Approx(186.8).margin(1.0));
  CHECK(rayleigh_distance(1.0, kSpeedOfLight / 28e9) >= 186.0);
  CHECK(rayleigh_distance(0.0, 0.5) == 0.0);
  CHECK(rayleigh_distance(2.0, 1.0) == Approx(8.0));
}

TEST_CASE("geometry validation and index sets") {
  CHECK_THROWS_AS(ArrayGeometry::from_spacing(0, 0.1, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(ArrayGeometry::from_spacing(4, -0.1, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(ArrayGeometry::from_spacing(4, 0.1, 0.0), std::invalid_argument);

  const auto odd = ArrayGeometry::from_spacing(5, 0.1, 0.1);
  CHECK(odd.index_set[0] == -2.0);
  CHECK(odd.index_set[4] == 2.0);
  const auto even = ArrayGeometry::from_spacing(4, 0.1, 0.1);
  CHECK(even.index_set[0] == Approx(-1.5));
  CHECK(even.index_set[3] == Approx(1.5));
  CHECK(even.aperture() == Approx(0.3));

  CHECK_THROWS_AS(array_response(odd, {0.5, -1.0}), std::invalid_argument);
  CHECK_THROWS_AS(array_response(odd, {-0.5, 1.0}), std::invalid_argument);
}
