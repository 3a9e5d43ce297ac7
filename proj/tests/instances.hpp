#pragma once

// Shared construction of randomized desk-scale design instances: physical
// near-field geometry (1 m aperture, 28 GHz) at small antenna counts, with
// radar constants strong enough that the tracking budget actually binds and
// noise floors that keep every scale within a few decades of the powers.

#include "nfsec/channel.hpp"
#include "nfsec/gbd.hpp"
#include "nfsec/rng.hpp"
#include "nfsec/sim.hpp"
#include "nfsec/tracking.hpp"
#include "nfsec/uncertainty.hpp"

namespace instances {

using namespace nfsec;

struct DeskSetup {
  channel::ArrayGeometry geometry;
  tracking::EveState eve_predicted;
  MatR prior_cov;
  sim::Scenario scenario;
  gbd::SoopInstance instance;
  double trace_prior = 0.0;  // planned posterior trace with no sensing
  double trace_floor = 0.0;  // with maximum sensing
};

inline tracking::MeasurementConstants desk_radar() {
  tracking::MeasurementConstants c;
  c.a_tau = 1e-6;
  c.a_nu = 600.0;
  c.a_theta = 0.1;
  c.symbols = 1e5;
  c.noise_bs = 1e-12;
  c.rcs = 1.0;
  c.sigma_theta = deg2rad(0.02);
  c.sigma_dist = 0.2;
  c.sigma_vx = 0.15;
  c.sigma_vy = 0.15;
  c.slot_duration = 0.2;
  return c;
}

inline sim::Scenario desk_scenario(const channel::ArrayGeometry& g,
                                   const std::vector<channel::PolarPosition>& users,
                                   const tracking::EveState& eve, const MatR& prior_cov, double rate_info_bps,
                                   double rate_leak_bps) {
  sim::Scenario sc;
  sc.geometry = g;
  sc.users = users;
  sc.eve_start = eve;
  sc.belief0 = {eve, prior_cov};
  sc.consts = desk_radar();
  const int kk = static_cast<int>(users.size());
  sc.noise_user = VecR::Constant(kk, 3e-9);
  sc.noise_eve = 3e-8;
  sc.p_max = 5.0;
  sc.rate_info = VecR::Constant(kk, rate_info_bps);
  sc.rate_leak = VecR::Constant(kk, rate_leak_bps);
  sc.slots = 10;
  sc.seed = 1;
  return sc;
}

/// Random instance at desk scale. gamma2_frac in (0, 1] interpolates between
/// the tightest attainable tracking budget (~0) and the no-sensing trace (~1);
/// values above 1 leave the budget slack.
inline DeskSetup desk_instance(int n_ant, int k_users, std::uint64_t seed, int gamma1, double gamma2_frac,
                               double rate_leak_bps = 0.1) {
  Rng rng = Rng::substream(seed, "desk-instance");
  DeskSetup out;
  out.geometry = channel::ArrayGeometry::from_aperture(n_ant, 1.0, kSpeedOfLight / 28e9);

  std::vector<channel::PolarPosition> users;
  for (int k = 0; k < k_users; ++k) {
    users.push_back({deg2rad(rng.uniform(40.0, 140.0)), rng.uniform(3.5, 8.0)});
  }
  out.eve_predicted = {deg2rad(rng.uniform(55.0, 125.0)), rng.uniform(3.5, 6.0), 1.0, 1.0};

  // converged-tracking prediction spread: small enough that the response
  // uncertainty ball stays well inside the sphere of unit-modulus vectors
  // (a saturated ball makes every schedule unservable)
  VecR pd(4);
  const double st = deg2rad(0.03), sd = 0.02, sv = 0.15;
  pd << st * st, sd * sd, sv * sv, sv * sv;
  out.prior_cov = pd.asDiagonal();

  out.scenario = desk_scenario(out.geometry, users, out.eve_predicted, out.prior_cov,
                               rng.uniform(3.0, 5.0), rate_leak_bps);
  out.instance =
      sim::make_instance(out.scenario, out.eve_predicted, out.prior_cov, gamma1, /*gamma2=*/1.0);

  out.trace_prior = out.prior_cov.trace();
  out.trace_floor = gbd::detail::min_sensing_trace(out.instance, {1e-8, 200});
  out.instance.gamma2 = out.trace_floor + gamma2_frac * (out.trace_prior - out.trace_floor);
  out.scenario.slots = 10;
  return out;
}

}  // namespace instances
