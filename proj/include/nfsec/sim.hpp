#pragma once

// Closed-loop episodes: per slot the tracker predicts the eavesdropper, the
// robust design problem is assembled from the predicted state and solved by
// the chosen policy, the ground truth advances, the radar echo is
// synthesized at the realized SNR, and the filter updates. Also: the Pareto
// sweep over (service floor, tracking budget), the correlation-based
// scheduling baseline, the stale-state conventional policy, and summary
// metrics.

#include <chrono>
#include <string>
#include <vector>

#include "nfsec/channel.hpp"
#include "nfsec/gbd.hpp"
#include "nfsec/rng.hpp"
#include "nfsec/tracking.hpp"
#include "nfsec/uncertainty.hpp"
#include "nfsec/zfsca.hpp"

namespace nfsec::sim {

enum class Policy { gbd, zfsca, correlation, conventional };

inline const char* to_string(Policy p) {
  switch (p) {
    case Policy::gbd: return "gbd";
    case Policy::zfsca: return "zfsca";
    case Policy::correlation: return "correlation";
    case Policy::conventional: return "conventional";
  }
  return "?";
}

struct Scenario {
  channel::ArrayGeometry geometry;
  std::vector<channel::PolarPosition> users;
  tracking::EveState eve_start;
  tracking::TrackBelief belief0;
  tracking::MeasurementConstants consts;
  VecR noise_user;         // watts, per user
  double noise_eve = 0.0;  // watts
  double p_max = 0.0;      // watts
  VecR rate_info;          // bits/s/Hz thresholds per user
  VecR rate_leak;
  int slots = 0;
  std::uint64_t seed = 0;
  bool rcs_fluctuation = true;
  double safety_factor = 1.0;

  void validate() const {
    if (users.empty()) throw std::invalid_argument("Scenario: needs at least one user");
    if (slots < 1) throw std::invalid_argument("Scenario: needs at least one slot");
    consts.validate();
    eve_start.position().validate();
    for (const auto& u : users) u.validate();
    if (static_cast<int>(noise_user.size()) != static_cast<int>(users.size()) ||
        rate_info.size() != noise_user.size() || rate_leak.size() != noise_user.size()) {
      throw std::invalid_argument("Scenario: per-user vectors must match the user count");
    }
  }

  /// Users beyond the Rayleigh distance void the near-field modeling premise.
  bool users_in_near_field() const {
    const double rd = channel::rayleigh_distance(geometry.aperture(), geometry.wavelength);
    for (const auto& u : users) {
      if (u.distance > rd) return false;
    }
    return true;
  }
};

/// Assembles the slot design problem from a presumed eavesdropper state and
/// its covariance (prediction for the proposed policies, stale posterior for
/// the conventional one).
inline gbd::SoopInstance make_instance(const Scenario& sc, const tracking::EveState& presumed,
                                       const MatR& presumed_cov, int gamma1, double gamma2,
                                       bool far_field = false) {
  gbd::SoopInstance inst;
  const int kk = static_cast<int>(sc.users.size());
  inst.user_angles = VecR(kk);
  for (int k = 0; k < kk; ++k) {
    inst.channels.push_back(channel::channel_vector(sc.geometry, sc.users[k], far_field).entries);
    inst.user_angles[k] = sc.users[k].angle;
  }
  inst.theta_bar = presumed.angle;
  inst.d_bar = presumed.distance;
  inst.eve_response = far_field ? channel::steering_response(sc.geometry, presumed.position())
                                : channel::array_response(sc.geometry, presumed.position());
  const uncertainty::UncertaintyBox box{presumed.angle, presumed.distance, std::sqrt(presumed_cov(0, 0)),
                                        std::sqrt(presumed_cov(1, 1))};
  if (far_field) {
    // steering-only restriction: the response ignores distance, so only the
    // angular spread of the box deflects it
    const double k_wave = 2.0 * kPi / sc.geometry.wavelength;
    double acc = 0.0;
    for (int i = 0; i < sc.geometry.num_antennas; ++i) {
      const double a = k_wave * sc.geometry.index_set[i] * sc.geometry.spacing * std::sin(presumed.angle);
      acc += a * a;
    }
    const double ht = box.theta_halfwidth();
    inst.beta_a = std::min(sc.safety_factor * acc * ht * ht, 4.0 * sc.geometry.num_antennas);
  } else {
    inst.beta_a = uncertainty::beta_a(sc.geometry, box, sc.safety_factor);
  }
  inst.beta_dist = 9.0 * presumed_cov(1, 1);
  inst.rate_lin_info = sc.rate_info.unaryExpr([](double r) { return std::exp2(r) - 1.0; });
  inst.rate_lin_leak = sc.rate_leak.unaryExpr([](double r) { return std::exp2(r) - 1.0; });
  inst.noise_user = sc.noise_user;
  inst.noise_eve = sc.noise_eve;
  inst.alpha = sc.geometry.alpha();
  inst.p_max = sc.p_max;
  inst.gamma1 = gamma1;
  inst.gamma2 = gamma2;
  inst.prior_info = symmetric_part(presumed_cov.llt().solve(MatR::Identity(4, 4)));
  const MatR gj = tracking::jacobian_measurement(presumed, sc.geometry.wavelength);
  VecR w(3);
  w << 1.0 / (sc.consts.a_tau * sc.consts.a_tau), 1.0 / (sc.consts.a_nu * sc.consts.a_nu),
      1.0 / (sc.consts.a_theta * sc.consts.a_theta);
  const double d2 = presumed.distance * presumed.distance;
  const double cg = inst.alpha * inst.alpha * sc.consts.rcs * sc.consts.rcs * sc.consts.symbols *
                    sc.geometry.num_antennas / (d2 * d2 * sc.consts.noise_bs);
  inst.sensing_gain = symmetric_part(cg * gj.transpose() * w.asDiagonal() * gj);
  return inst;
}

/// Channel-correlation user selection: the gamma1 users least correlated
/// with the predicted eavesdropper channel, ties broken by index.
inline std::vector<int> correlation_schedule(const std::vector<VecC>& channels, const VecC& eve_channel,
                                             int gamma1) {
  const int kk = static_cast<int>(channels.size());
  if (gamma1 < 0 || gamma1 > kk) throw std::invalid_argument("correlation_schedule: gamma1 out of range");
  std::vector<std::pair<double, int>> corr;
  for (int k = 0; k < kk; ++k) {
    const double c = std::abs(channels[k].dot(eve_channel)) / (channels[k].norm() * eve_channel.norm());
    corr.emplace_back(c, k);
  }
  std::stable_sort(corr.begin(), corr.end());
  std::vector<int> e(kk, 0);
  for (int i = 0; i < gamma1; ++i) e[corr[i].second] = 1;
  return e;
}

struct SlotRecord {
  int slot = 0;
  bool feasible = false;
  std::vector<int> schedule;
  double power = 0.0;  // watts actually transmitted
  tracking::EveState presumed;   // state the design was built against
  tracking::EveState truth;      // ground truth during the slot
  tracking::EveState estimate;   // posterior estimate
  double sigma_theta = 0.0, sigma_dist = 0.0;  // design-time box sigmas
  double trace_pred = 0.0, trace_post = 0.0;
  double realized_snr = 0.0;
  VecR rates, leaks;  // empirical per-user values at the true channels
  gbd::Design design;
  gbd::DesignStatus status = gbd::DesignStatus::infeasible;
  double solve_ms = 0.0;  // informational only; never serialized
};

struct EpisodeOptions {
  double gbd_eps = 1e-4;
  gbd::GbdOptions gbd;
  zfsca::ZfScaOptions sca;
};

inline std::vector<SlotRecord> run_episode(const Scenario& sc, Policy policy, int gamma1, double gamma2,
                                           const EpisodeOptions& opts = {}) {
  sc.validate();
  const int kk = static_cast<int>(sc.users.size());
  const MatR process_cov = sc.consts.process_cov();
  const double dt = sc.consts.slot_duration;

  std::vector<VecC> user_channels;
  for (const auto& u : sc.users) user_channels.push_back(channel::channel_vector(sc.geometry, u).entries);

  tracking::TrackBelief belief = sc.belief0;
  tracking::EveState truth = sc.eve_start;
  MatC z_prev = (sc.p_max / sc.geometry.num_antennas) * MatC::Identity(sc.geometry.num_antennas,
                                                                       sc.geometry.num_antennas);

  std::vector<SlotRecord> records;
  for (int l = 0; l < sc.slots; ++l) {
    SlotRecord rec;
    rec.slot = l;

    const tracking::TrackBelief pred = tracking::predict(belief, dt, process_cov);
    const bool stale = policy == Policy::conventional;
    const tracking::EveState presumed = stale ? belief.state : pred.state;
    const MatR presumed_cov = stale ? belief.cov : pred.cov;
    rec.presumed = presumed;
    rec.trace_pred = pred.cov.trace();
    rec.sigma_theta = std::sqrt(presumed_cov(0, 0));
    rec.sigma_dist = std::sqrt(presumed_cov(1, 1));

    const gbd::SoopInstance inst = make_instance(sc, presumed, presumed_cov, gamma1, gamma2);

    const auto t0 = std::chrono::steady_clock::now();
    gbd::Design design;
    switch (policy) {
      case Policy::gbd:
        design = gbd::gbd_solve(inst, opts.gbd_eps, opts.gbd).design;
        break;
      case Policy::zfsca:
      case Policy::conventional:
        design = zfsca::zfsca_solve(inst, opts.sca).design;
        break;
      case Policy::correlation: {
        const std::vector<int> e = correlation_schedule(inst.channels, inst.eve_response, gamma1);
        const auto feas = gbd::solve_feasibility(inst, e, opts.gbd.solver);
        if (feas.ok && feas.objective <= opts.gbd.feas_tol) {
          const auto primal = gbd::solve_primal(inst, e, opts.gbd.solver);
          if (primal.ok) {
            design.schedule = e;
            design.objective = primal.objective;
            design.status = gbd::DesignStatus::converged;
            gbd::detail::finalize_design(inst, primal, design);
          }
        }
        if (design.status != gbd::DesignStatus::converged) design.status = gbd::DesignStatus::infeasible;
        break;
      }
    }
    rec.solve_ms =
        std::chrono::duration_cast<std::chrono::duration<double, std::milli>>(std::chrono::steady_clock::now() - t0)
            .count();

    rec.status = design.status;
    rec.feasible = design.status == gbd::DesignStatus::converged;
    if (!rec.feasible) {
      // keep the track alive: previous sensing covariance rescaled to the
      // power budget, nobody served
      design = gbd::Design{};
      design.schedule.assign(kk, 0);
      design.w.assign(kk, VecC::Zero(sc.geometry.num_antennas));
      design.Z = z_prev * (sc.p_max / std::max(z_prev.trace().real(), 1e-300));
      design.objective = design.Z.trace().real();
      design.status = gbd::DesignStatus::infeasible;
    }
    rec.design = design;
    rec.schedule = design.schedule;
    rec.power = design.point().total_power();
    if (design.Z.size() > 0 && design.Z.trace().real() > 0.0) z_prev = design.Z;

    // ground truth advances with process noise
    Rng truth_rng = Rng::substream(sc.seed, "truth", static_cast<std::uint64_t>(l));
    tracking::EveState advanced = tracking::state_transition(truth, dt);
    advanced.angle += sc.consts.sigma_theta * truth_rng.normal();
    advanced.distance += sc.consts.sigma_dist * truth_rng.normal();
    advanced.vx += sc.consts.sigma_vx * truth_rng.normal();
    advanced.vy += sc.consts.sigma_vy * truth_rng.normal();
    truth = advanced;
    rec.truth = truth;

    // slot radar cross-section (Swerling-I: power exponential about nominal)
    tracking::MeasurementConstants realized = sc.consts;
    if (sc.rcs_fluctuation) {
      Rng rcs_rng = Rng::substream(sc.seed, "rcs", static_cast<std::uint64_t>(l));
      realized.rcs = sc.consts.rcs * std::sqrt(rcs_rng.exponential(1.0));
    }

    Rng meas_rng = Rng::substream(sc.seed, "measurement", static_cast<std::uint64_t>(l));
    const auto synth = tracking::synthesize_measurement(truth, design.Z, realized, sc.geometry, meas_rng);
    rec.realized_snr = synth.snr;
    if (synth.snr > 0.0) {
      // the receiver estimates the echo SNR, so the filter weighs the
      // measurement by its realized accuracy
      const MatR qm = tracking::measurement_noise_cov(synth.snr, realized);
      belief = tracking::update(pred, synth.value, qm, sc.geometry.wavelength);
    } else {
      belief = pred;  // no sensing energy on target: prediction only
    }
    rec.estimate = belief.state;
    rec.trace_post = belief.cov.trace();

    rec.rates = VecR::Zero(kk);
    rec.leaks = VecR::Zero(kk);
    const auto dp = design.point();
    const VecC h_eve_true = channel::channel_vector(sc.geometry, truth.position()).entries;
    for (int k = 0; k < kk; ++k) {
      if (!design.schedule[k]) continue;
      rec.rates[k] = channel::achievable_rate(k, dp, user_channels, sc.noise_user[k]);
      rec.leaks[k] = channel::leakage_rate(k, dp, h_eve_true, sc.noise_eve);
    }
    records.push_back(std::move(rec));
  }
  return records;
}

struct ParetoPoint {
  int gamma1 = 0;
  double gamma2 = 0.0;
  double power = std::numeric_limits<double>::infinity();
  bool feasible = false;
};

/// Globally optimal designs on the frozen first-slot prediction, over a grid
/// of service floors and tracking budgets.
inline std::vector<ParetoPoint> pareto_sweep(const Scenario& sc, const std::vector<int>& gamma1_values,
                                             const VecR& gamma2_values, const EpisodeOptions& opts = {}) {
  sc.validate();
  const tracking::TrackBelief pred = tracking::predict(sc.belief0, sc.consts.slot_duration, sc.consts.process_cov());
  std::vector<ParetoPoint> points;
  for (int g1 : gamma1_values) {
    for (Eigen::Index i = 0; i < gamma2_values.size(); ++i) {
      const gbd::SoopInstance inst = make_instance(sc, pred.state, pred.cov, g1, gamma2_values[i]);
      const auto res = gbd::gbd_solve(inst, opts.gbd_eps, opts.gbd);
      ParetoPoint pt;
      pt.gamma1 = g1;
      pt.gamma2 = gamma2_values[i];
      pt.feasible = res.design.status == gbd::DesignStatus::converged;
      if (pt.feasible) pt.power = res.design.objective;
      points.push_back(pt);
    }
  }
  return points;
}

struct MetricsSummary {
  int slots = 0;
  int infeasible_slots = 0;
  double avg_power = 0.0;
  double avg_served = 0.0;
  double rmse_angle = 0.0;     // posterior estimate vs truth, radians
  double rmse_dist = 0.0;      // meters
  double avg_trace_pred = 0.0;
  double avg_trace_post = 0.0;
  double leak_violation_rate = 0.0;  // fraction of sampled box points over budget
  double worst_sampled_leak = 0.0;
  VecR trace_post_trajectory;
};

/// Summary statistics over an episode. The leakage check samples the
/// three-sigma box around each slot's presumed eavesdropper position and
/// evaluates the true leakage of every served user there.
inline MetricsSummary metrics(const std::vector<SlotRecord>& records, const Scenario& sc,
                              int leak_samples = 2000, double leak_margin = 0.01) {
  if (records.empty()) throw std::invalid_argument("metrics: no records");
  MetricsSummary m;
  m.slots = static_cast<int>(records.size());
  m.trace_post_trajectory = VecR(m.slots);
  double se_angle = 0.0, se_dist = 0.0;
  std::int64_t violations = 0, samples = 0;
  Rng rng = Rng::substream(sc.seed, "leak-box");
  for (const auto& rec : records) {
    m.infeasible_slots += rec.feasible ? 0 : 1;
    m.avg_power += rec.power;
    int served = 0;
    for (int v : rec.schedule) served += v;
    m.avg_served += served;
    se_angle += std::pow(wrap_angle(rec.estimate.angle - rec.truth.angle), 2);
    se_dist += std::pow(rec.estimate.distance - rec.truth.distance, 2);
    m.avg_trace_pred += rec.trace_pred;
    m.avg_trace_post += rec.trace_post;
    m.trace_post_trajectory[rec.slot % m.slots] = rec.trace_post;

    if (served > 0 && leak_samples > 0) {
      const auto dp = rec.design.point();
      for (int s = 0; s < leak_samples; ++s) {
        const double dth = rng.uniform(-3.0, 3.0) * rec.sigma_theta;
        const double dd = rng.uniform(-3.0, 3.0) * rec.sigma_dist;
        channel::PolarPosition pos{rec.presumed.angle + dth, std::max(rec.presumed.distance + dd, 1e-3)};
        const VecC he = channel::channel_vector(sc.geometry, pos).entries;
        for (int k = 0; k < static_cast<int>(rec.schedule.size()); ++k) {
          if (!rec.schedule[k]) continue;
          const double leak = channel::leakage_rate(k, dp, he, sc.noise_eve);
          m.worst_sampled_leak = std::max(m.worst_sampled_leak, leak);
          ++samples;
          if (leak > sc.rate_leak[k] + leak_margin) ++violations;
        }
      }
    }
  }
  m.avg_power /= m.slots;
  m.avg_served /= m.slots;
  m.rmse_angle = std::sqrt(se_angle / m.slots);
  m.rmse_dist = std::sqrt(se_dist / m.slots);
  m.avg_trace_pred /= m.slots;
  m.avg_trace_post /= m.slots;
  m.leak_violation_rate = samples ? static_cast<double>(violations) / samples : 0.0;
  return m;
}

}  // namespace nfsec::sim
