#pragma once

// Joint user-scheduling / beamforming design: assembly of the transformed
// single-objective problem over SDR matrices with big-M scheduling couplings,
// and its globally optimal solution by generalized Benders decomposition
// (convex primal + feasibility subproblems producing affine cuts, exact
// enumeration master over the binary schedules).

#include <algorithm>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "nfsec/channel.hpp"
#include "nfsec/conic.hpp"
#include "nfsec/linalg.hpp"

namespace nfsec::gbd {

/// One slot's design problem, fully numeric: channels, predicted eavesdropper
/// geometry, robust radii, thresholds, and the affine map from the sensing
/// covariance to the posterior information matrix.
struct SoopInstance {
  std::vector<VecC> channels;  // user channels h_k
  VecR user_angles;            // radians; used for the warm-start schedule
  VecC eve_response;           // a(theta_bar, d_bar), unit-modulus entries
  double theta_bar = 0.0;
  double d_bar = 0.0;
  double beta_a = 0.0;     // bound on ||delta a||^2
  double beta_dist = 0.0;  // 9 sigma_d^2
  VecR rate_lin_info;      // 2^Rbar_info - 1 per user
  VecR rate_lin_leak;      // 2^Rbar_leak - 1 per user
  VecR noise_user;         // sigma_k^2, watts
  double noise_eve = 0.0;  // sigma_E^2, watts
  double alpha = 0.0;      // (lambda_c / 4 pi)^2
  double p_max = 0.0;      // watts
  int gamma1 = 0;
  double gamma2 = 0.0;     // trace bound
  MatR prior_info;         // C^{-1}[l|l-1]
  MatR sensing_gain;       // M with C^{-1}[l] = prior_info + (a^H Z a) M

  int num_users() const { return static_cast<int>(channels.size()); }
  int num_antennas() const { return static_cast<int>(eve_response.size()); }

  void validate() const {
    const int k = num_users();
    if (k < 1) throw std::invalid_argument("SoopInstance: needs at least one user");
    if (gamma1 < 0 || gamma1 > k) throw std::invalid_argument("SoopInstance: gamma1 outside [0, K]");
    if (!(gamma2 > 0.0)) throw std::invalid_argument("SoopInstance: gamma2 must be > 0");
    if (!(p_max > 0.0)) throw std::invalid_argument("SoopInstance: p_max must be > 0");
    for (int i = 0; i < k; ++i) {
      if (!(rate_lin_info[i] > 0.0) || !(rate_lin_leak[i] > 0.0)) {
        throw std::invalid_argument("SoopInstance: linearized rate thresholds must be > 0");
      }
    }
    if (beta_a < 0.0 || beta_dist < 0.0) throw std::invalid_argument("SoopInstance: negative robust radius");
    if (min_eigenvalue(sensing_gain) < -1e-9 * std::max(1.0, sensing_gain.cwiseAbs().maxCoeff())) {
      throw std::invalid_argument("SoopInstance: sensing gain matrix must be PSD");
    }
  }
};

/// Affine-in-schedule cut produced from subproblem duals.
struct Cut {
  enum class Kind { optimality, feasibility };
  Kind kind = Kind::optimality;
  VecR coeff;            // per-user coefficient
  double constant = 0.0;
  std::vector<int> generator;  // schedule that produced the cut
  double generator_value = 0.0;

  double value(const std::vector<int>& e) const {
    double v = constant;
    for (std::size_t i = 0; i < e.size(); ++i) v += coeff[static_cast<int>(i)] * e[i];
    return v;
  }
};

struct GbdIterate {
  double ubd = 0.0;
  double lbd = 0.0;
  Cut::Kind cut_kind = Cut::Kind::optimality;
  std::vector<int> schedule;  // schedule tried in this iteration
  double subproblem_value = 0.0;
};

using GbdTrace = std::vector<GbdIterate>;

enum class DesignStatus { converged, infeasible, iteration_limit, numerical_failure };

inline const char* to_string(DesignStatus s) {
  switch (s) {
    case DesignStatus::converged: return "converged";
    case DesignStatus::infeasible: return "infeasible";
    case DesignStatus::iteration_limit: return "iteration_limit";
    case DesignStatus::numerical_failure: return "numerical_failure";
  }
  return "?";
}

/// Final transmit decision: extracted rank-one beamformers, SDR matrices,
/// sensing covariance, schedule, objective value, diagnostics.
struct Design {
  std::vector<VecC> w;
  std::vector<MatC> W;
  MatC Z;
  std::vector<int> schedule;
  double objective = std::numeric_limits<double>::infinity();
  DesignStatus status = DesignStatus::numerical_failure;
  bool rank_one_fallback = false;
  double ubd = std::numeric_limits<double>::infinity();
  double lbd = 0.0;
  int iterations = 0;

  channel::DesignPoint point() const {
    channel::DesignPoint d;
    d.w = w;
    d.W = W;
    d.Z = Z;
    d.schedule = schedule;
    return d;
  }
};

// ---------------------------------------------------------------------------
// problem assembly

struct SoopHandles {
  std::vector<int> W, Wb, Zb;
  int Z = -1;
  std::vector<std::vector<int>> Wkk;  // -1 on the diagonal
  std::vector<int> kap1, kap2, eta;
  std::vector<int> zeta;
  int chi = -1;

  std::vector<int> c1;                      // inequality ids
  std::vector<int> lmi_c2a, lmi_c2b;        // -1 when degenerate scalar form used
  std::vector<int> lmi_c7a, lmi_c7b, lmi_c7c, lmi_c7d;
  std::vector<int> lmi_c8a, lmi_c8b, lmi_c8c, lmi_c8d;
  std::vector<std::vector<int>> lmi_c9a, lmi_c9b, lmi_c9c, lmi_c9d, lmi_c9e;
  std::vector<int> lmi_c5a;
  int c5b = -1;
  int psd_z = -1;
  std::vector<int> psd_w;

  double gain_ref = 1.0;       // channel scale divisor
  VecR noise_scaled;           // sigma_k^2 / gain_ref^2
  VecR eta_scale;              // eta_k = eta_scale[k] * (program variable)
  std::vector<MatC> h_outer;   // scaled H_k = h~_k h~_k^H
};

namespace detail {

inline double channel_gain_ref(const SoopInstance& inst) {
  double acc = 0.0;
  const double root_n = std::sqrt(static_cast<double>(inst.num_antennas()));
  for (const auto& h : inst.channels) acc += std::log(std::max(h.norm() / root_n, 1e-300));
  return std::exp(acc / inst.num_users());
}

/// Adds the tracking-performance block: four Schur-complement LMIs bounding
/// the diagonal of the planned posterior covariance plus the trace budget.
/// zq is the affine expression for a^H Z a. The 4x4 state block is pre/post-
/// scaled by the prior standard deviations and each bound variable is held
/// in units of the prior variance of its slot, so every LMI entry sits near
/// unity despite the mixed rad^2 / m^2 / (m/s)^2 units inside the trace.
inline void add_tracking_block(conic::ConicProgram& p, const conic::LinExpr& zq, const std::vector<int>& zeta,
                               std::vector<int>& lmi_ids, int& budget_row, const SoopInstance& inst) {
  const MatR prior_cov = inst.prior_info.llt().solve(MatR::Identity(4, 4));
  VecR d(4);
  for (int m = 0; m < 4; ++m) d[m] = std::sqrt(std::max(prior_cov(m, m), 1e-300));
  const MatR ds = d.asDiagonal();
  const MatR info_scaled = ds * inst.prior_info * ds;
  const MatR gain_scaled = ds * inst.sensing_gain * ds;

  conic::LinExpr sum_zeta;
  for (int m = 0; m < 4; ++m) {
    conic::AffineMatrix am(5);
    MatC f0 = MatC::Zero(5, 5);
    f0.topLeftCorner(4, 4) = info_scaled.cast<cplx>();
    f0(m, 4) = 1.0;
    f0(4, m) = 1.0;
    am.add_constant(f0);
    MatC gz = MatC::Zero(5, 5);
    gz.topLeftCorner(4, 4) = gain_scaled.cast<cplx>();
    am.add_expr(zq, gz);
    MatC ez = MatC::Zero(5, 5);
    ez(4, 4) = 1.0;
    am.add_expr(p.scalar(zeta[m]), ez);
    lmi_ids.push_back(p.add_lmi(std::move(am)));
    sum_zeta += p.scalar(zeta[m], d[m] * d[m]);  // zeta_m = d_m^2 * (program variable)
  }
  budget_row = p.add_le(sum_zeta, inst.gamma2);
}

}  // namespace detail

/// Builds the transformed problem for a fixed binary schedule. In feasibility
/// mode the rate constraints are relaxed by a shared slack chi >= 0 that
/// becomes the objective; everything else stays hard.
inline conic::ConicProgram build_soop(const SoopInstance& inst, const std::vector<int>& e, SoopHandles& h,
                                      bool feasibility_mode = false) {
  inst.validate();
  const int kk = inst.num_users();
  if (static_cast<int>(e.size()) != kk) throw std::invalid_argument("build_soop: schedule size mismatch");
  const int n = inst.num_antennas();
  const double pmax = inst.p_max;

  conic::ConicProgram p;
  h = SoopHandles{};
  h.gain_ref = detail::channel_gain_ref(inst);
  h.noise_scaled = inst.noise_user / (h.gain_ref * h.gain_ref);
  for (int k = 0; k < kk; ++k) {
    const VecC ht = inst.channels[k] / h.gain_ref;
    h.h_outer.push_back(ht * ht.adjoint());
  }

  for (int k = 0; k < kk; ++k) h.W.push_back(p.add_hermitian("W" + std::to_string(k), n));
  h.Z = p.add_hermitian("Z", n);
  for (int k = 0; k < kk; ++k) h.Wb.push_back(p.add_hermitian("Wb" + std::to_string(k), n));
  for (int k = 0; k < kk; ++k) h.Zb.push_back(p.add_hermitian("Zb" + std::to_string(k), n));
  h.Wkk.assign(kk, std::vector<int>(kk, -1));
  for (int k = 0; k < kk; ++k) {
    for (int k2 = 0; k2 < kk; ++k2) {
      if (k2 != k) h.Wkk[k][k2] = p.add_hermitian("Wkk" + std::to_string(k) + "_" + std::to_string(k2), n);
    }
  }
  for (int k = 0; k < kk; ++k) {
    h.kap1.push_back(p.add_scalar("kap1_" + std::to_string(k), true));
    h.kap2.push_back(p.add_scalar("kap2_" + std::to_string(k), true));
    h.eta.push_back(p.add_scalar("eta_" + std::to_string(k), true));
  }
  for (int m = 0; m < 4; ++m) h.zeta.push_back(p.add_scalar("zeta_" + std::to_string(m), true));
  if (feasibility_mode) h.chi = p.add_scalar("chi", true);

  // objective
  if (feasibility_mode) {
    p.set_objective(p.scalar(h.chi));
  } else {
    conic::LinExpr obj = p.trace(h.Z);
    for (int k = 0; k < kk; ++k) obj += p.trace(h.Wb[k]);
    p.set_objective(obj);
  }

  // rate constraints (relaxed by chi in feasibility mode)
  for (int k = 0; k < kk; ++k) {
    const double ri = inst.rate_lin_info[k];
    conic::LinExpr expr = p.inner(h.Wb[k], h.h_outer[k]);
    for (int k2 = 0; k2 < kk; ++k2) {
      if (k2 != k) expr += p.inner(h.Wkk[k][k2], h.h_outer[k], -ri);
    }
    expr += p.inner(h.Zb[k], h.h_outer[k], -ri);
    if (feasibility_mode) expr += p.scalar(h.chi);
    h.c1.push_back(p.add_ge(expr, ri * h.noise_scaled[k] * e[k]));
  }

  // robust leakage: S-procedure LMIs, or the nominal-point rows when the
  // uncertainty box is degenerate. The slack eta_k is held in units of its
  // natural cap d_bar^2 R~_leak sigma_E^2 / alpha so both LMIs see O(1)
  // coefficients.
  const VecC& abar = inst.eve_response;
  h.eta_scale = VecR(kk);
  for (int k = 0; k < kk; ++k) {
    const double rl = inst.rate_lin_leak[k];
    const double eta_gain = inst.alpha / (rl * inst.noise_eve);
    const double s_eta = inst.d_bar * inst.d_bar / eta_gain;
    h.eta_scale[k] = s_eta;
    if (inst.beta_a > 1e-15) {
      conic::AffineMatrix am(n + 1);
      MatC u(n, n + 1);
      u << MatC::Identity(n, n), abar;
      MatC kap_coef = MatC::Identity(n + 1, n + 1);
      kap_coef(n, n) = -inst.beta_a;
      am.add_expr(p.scalar(h.kap1[k]), kap_coef);
      MatC eta_coef = MatC::Zero(n + 1, n + 1);
      eta_coef(n, n) = s_eta;
      am.add_expr(p.scalar(h.eta[k]), eta_coef);
      p.affine_add_congruence(am, h.Wb[k], u, -1.0);
      p.affine_add_congruence(am, h.Z, u, rl);
      h.lmi_c2a.push_back(p.add_lmi(std::move(am)));
    } else {
      conic::LinExpr expr = p.scalar(h.eta[k], s_eta) - p.quad(h.Wb[k], abar) + p.quad(h.Z, abar, rl);
      h.lmi_c2a.push_back(-1);
      p.add_ge(expr, 0.0);
    }
    if (inst.beta_dist > 1e-15) {
      conic::AffineMatrix am(2);
      MatC f0(2, 2);
      f0 << 1.0, inst.d_bar, inst.d_bar, inst.d_bar * inst.d_bar;
      am.add_constant(f0);
      MatC kap_coef = MatC::Zero(2, 2);
      kap_coef(0, 0) = 1.0;
      kap_coef(1, 1) = -inst.beta_dist;
      am.add_expr(p.scalar(h.kap2[k]), kap_coef);
      MatC eta_coef = MatC::Zero(2, 2);
      eta_coef(1, 1) = -inst.d_bar * inst.d_bar;
      am.add_expr(p.scalar(h.eta[k]), eta_coef);
      h.lmi_c2b.push_back(p.add_lmi(std::move(am)));
    } else {
      h.lmi_c2b.push_back(-1);
      p.add_le(p.scalar(h.eta[k]), 1.0);
    }
  }

  detail::add_tracking_block(p, p.quad(h.Z, inst.eve_response), h.zeta, h.lmi_c5a, h.c5b, inst);

  // big-M scheduling couplings
  const MatC eye = MatC::Identity(n, n);
  for (int k = 0; k < kk; ++k) {
    const double ek = static_cast<double>(e[k]);
    {
      conic::AffineMatrix am(n);
      am.add_constant(ek * pmax * eye);
      p.affine_add_matrix(am, h.Wb[k], -1.0);
      h.lmi_c7a.push_back(p.add_lmi(std::move(am)));
    }
    {
      conic::AffineMatrix am(n);
      am.add_constant((1.0 - ek) * pmax * eye);
      p.affine_add_matrix(am, h.Wb[k], 1.0);
      p.affine_add_matrix(am, h.W[k], -1.0);
      h.lmi_c7b.push_back(p.add_lmi(std::move(am)));
    }
    {
      conic::AffineMatrix am(n);
      p.affine_add_matrix(am, h.W[k], 1.0);
      p.affine_add_matrix(am, h.Wb[k], -1.0);
      h.lmi_c7c.push_back(p.add_lmi(std::move(am)));
    }
    h.lmi_c7d.push_back(p.add_psd(h.Wb[k]));
    {
      conic::AffineMatrix am(n);
      am.add_constant(ek * pmax * eye);
      p.affine_add_matrix(am, h.Zb[k], -1.0);
      h.lmi_c8a.push_back(p.add_lmi(std::move(am)));
    }
    {
      conic::AffineMatrix am(n);
      am.add_constant((1.0 - ek) * pmax * eye);
      p.affine_add_matrix(am, h.Zb[k], 1.0);
      p.affine_add_matrix(am, h.Z, -1.0);
      h.lmi_c8b.push_back(p.add_lmi(std::move(am)));
    }
    {
      conic::AffineMatrix am(n);
      p.affine_add_matrix(am, h.Z, 1.0);
      p.affine_add_matrix(am, h.Zb[k], -1.0);
      h.lmi_c8c.push_back(p.add_lmi(std::move(am)));
    }
    h.lmi_c8d.push_back(p.add_psd(h.Zb[k]));
  }
  h.lmi_c9a.assign(kk, std::vector<int>(kk, -1));
  h.lmi_c9b = h.lmi_c9a;
  h.lmi_c9c = h.lmi_c9a;
  h.lmi_c9d = h.lmi_c9a;
  h.lmi_c9e = h.lmi_c9a;
  for (int k = 0; k < kk; ++k) {
    for (int k2 = 0; k2 < kk; ++k2) {
      if (k2 == k) continue;
      const double ek = static_cast<double>(e[k]);
      const double ek2 = static_cast<double>(e[k2]);
      {
        conic::AffineMatrix am(n);
        am.add_constant(ek * pmax * eye);
        p.affine_add_matrix(am, h.Wkk[k][k2], -1.0);
        h.lmi_c9a[k][k2] = p.add_lmi(std::move(am));
      }
      {
        conic::AffineMatrix am(n);
        am.add_constant(ek2 * pmax * eye);
        p.affine_add_matrix(am, h.Wkk[k][k2], -1.0);
        h.lmi_c9b[k][k2] = p.add_lmi(std::move(am));
      }
      {
        conic::AffineMatrix am(n);
        am.add_constant((2.0 - ek - ek2) * pmax * eye);
        p.affine_add_matrix(am, h.Wkk[k][k2], 1.0);
        p.affine_add_matrix(am, h.W[k2], -1.0);
        h.lmi_c9c[k][k2] = p.add_lmi(std::move(am));
      }
      {
        conic::AffineMatrix am(n);
        p.affine_add_matrix(am, h.W[k2], 1.0);
        p.affine_add_matrix(am, h.Wkk[k][k2], -1.0);
        h.lmi_c9d[k][k2] = p.add_lmi(std::move(am));
      }
      h.lmi_c9e[k][k2] = p.add_psd(h.Wkk[k][k2]);
    }
  }

  // PSD and power caps on the underlying beamformers
  for (int k = 0; k < kk; ++k) {
    h.psd_w.push_back(p.add_psd(h.W[k]));
    p.add_le(p.trace(h.W[k]), pmax);
  }
  h.psd_z = p.add_psd(h.Z);
  p.add_le(p.trace(h.Z), pmax);

  return p;
}

// ---------------------------------------------------------------------------
// subproblems and cuts

struct SubproblemResult {
  conic::SolveStatus status = conic::SolveStatus::not_converged;
  bool ok = false;         // optimal, or best iterate accurate enough to use
  double objective = 0.0;  // primal value, or chi* in feasibility mode
  std::vector<int> schedule;
  // dual data for cuts
  VecR lambda;                      // per-user rate-row multipliers
  VecR tr_l1, tr_l2, tr_l3, tr_l4;  // traces of the C7/C8 multipliers
  MatR tr_l5, tr_l6, tr_l7;         // traces of the C9 multipliers, (k, k')
  double h1 = 0.0;
  // primal values for the design
  std::vector<MatC> W, Wb;
  MatC Z;
  VecR kap1, kap2, eta;
  double dual_sum_lambda = 0.0;
};

namespace detail {

/// A solve is usable for decomposition bookkeeping when it is optimal to
/// tolerance, or when the best iterate is accurate enough that cut and bound
/// errors stay well under the decomposition gap target.
inline bool usable(const conic::ConicSolution& sol, double metric_cap = 1e-5) {
  if (sol.status == conic::SolveStatus::optimal) return true;
  return sol.status == conic::SolveStatus::not_converged &&
         std::max({sol.primal_residual, sol.dual_residual, sol.rel_gap}) <= metric_cap;
}

/// For a fixed schedule the big-M couplings pin the auxiliary matrices
/// exactly (Wb_k = e_k W_k, Zb_k = e_k Z, Wkk' = e_k e_k' W_k'), so the
/// subproblems are solved in presolved form: only the served users' matrices
/// and Z remain. The pinned constraints' multipliers are reconstructed in
/// closed form afterwards; the reconstruction satisfies the full problem's
/// KKT conditions exactly, which keeps the Benders cuts valid and makes the
/// strong-duality identity at the generating schedule hold to solver
/// accuracy instead of being limited by the thin-set conditioning of the
/// unreduced formulation.
inline SubproblemResult solve_subproblem(const SoopInstance& inst, const std::vector<int>& e, bool feasibility,
                                         const conic::SolverOptions& opts) {
  // the phase-one problem has a flat objective in most variables, so its
  // iterates drift toward the analytic center and the measured gap floors a
  // little higher; its duals remain accurate well past that floor
  const double metric_cap = feasibility ? 5e-5 : 1e-5;
  const int kk = inst.num_users();
  const int n = inst.num_antennas();
  const double pmax = inst.p_max;
  const double gref = channel_gain_ref(inst);

  SubproblemResult r;
  r.schedule = e;

  conic::ConicProgram p;
  std::vector<MatC> h_outer(kk);
  for (int k = 0; k < kk; ++k) {
    const VecC ht = inst.channels[k] / gref;
    h_outer[k] = ht * ht.adjoint();
  }

  std::vector<int> vw(kk, -1);
  for (int k = 0; k < kk; ++k) {
    if (e[k]) vw[k] = p.add_hermitian("W" + std::to_string(k), n);
  }
  const int vz = p.add_hermitian("Z", n);
  std::vector<int> vkap1(kk), vkap2(kk), veta(kk);
  for (int k = 0; k < kk; ++k) {
    vkap1[k] = p.add_scalar("kap1_" + std::to_string(k), true);
    vkap2[k] = p.add_scalar("kap2_" + std::to_string(k), true);
    veta[k] = p.add_scalar("eta_" + std::to_string(k), true);
  }
  std::vector<int> vzeta;
  for (int m = 0; m < 4; ++m) vzeta.push_back(p.add_scalar("zeta_" + std::to_string(m), true));
  int vchi = -1;
  if (feasibility) vchi = p.add_scalar("chi", true);

  if (feasibility) {
    p.set_objective(p.scalar(vchi));
  } else {
    conic::LinExpr obj = p.trace(vz);
    for (int k = 0; k < kk; ++k) {
      if (e[k]) obj += p.trace(vw[k]);
    }
    p.set_objective(obj);
  }

  const VecR noise_scaled = inst.noise_user / (gref * gref);
  std::vector<int> c1_row(kk, -1);
  for (int k = 0; k < kk; ++k) {
    if (!e[k]) continue;
    const double ri = inst.rate_lin_info[k];
    conic::LinExpr expr = p.inner(vw[k], h_outer[k]);
    for (int k2 = 0; k2 < kk; ++k2) {
      if (k2 != k && e[k2]) expr += p.inner(vw[k2], h_outer[k], -ri);
    }
    expr += p.inner(vz, h_outer[k], -ri);
    if (feasibility) expr += p.scalar(vchi);
    c1_row[k] = p.add_ge(expr, ri * noise_scaled[k]);
  }

  const VecC& abar = inst.eve_response;
  VecR eta_scale(kk);
  std::vector<int> c2a_lmi(kk, -1), c2a_row(kk, -1);
  for (int k = 0; k < kk; ++k) {
    const double rl = inst.rate_lin_leak[k];
    const double s_eta = inst.d_bar * inst.d_bar * rl * inst.noise_eve / inst.alpha;
    eta_scale[k] = s_eta;
    if (inst.beta_a > 1e-15) {
      conic::AffineMatrix am(n + 1);
      MatC u(n, n + 1);
      u << MatC::Identity(n, n), abar;
      MatC kap_coef = MatC::Identity(n + 1, n + 1);
      kap_coef(n, n) = -inst.beta_a;
      am.add_expr(p.scalar(vkap1[k]), kap_coef);
      MatC eta_coef = MatC::Zero(n + 1, n + 1);
      eta_coef(n, n) = s_eta;
      am.add_expr(p.scalar(veta[k]), eta_coef);
      if (e[k]) p.affine_add_congruence(am, vw[k], u, -1.0);
      p.affine_add_congruence(am, vz, u, rl);
      c2a_lmi[k] = p.add_lmi(std::move(am));
    } else {
      conic::LinExpr expr = p.scalar(veta[k], s_eta) + p.quad(vz, abar, rl);
      if (e[k]) expr += p.quad(vw[k], abar, -1.0);
      c2a_row[k] = p.add_ge(expr, 0.0);
    }
    if (inst.beta_dist > 1e-15) {
      conic::AffineMatrix am(2);
      MatC f0(2, 2);
      f0 << 1.0, inst.d_bar, inst.d_bar, inst.d_bar * inst.d_bar;
      am.add_constant(f0);
      MatC kap_coef = MatC::Zero(2, 2);
      kap_coef(0, 0) = 1.0;
      kap_coef(1, 1) = -inst.beta_dist;
      am.add_expr(p.scalar(vkap2[k]), kap_coef);
      MatC eta_coef = MatC::Zero(2, 2);
      eta_coef(1, 1) = -inst.d_bar * inst.d_bar;
      am.add_expr(p.scalar(veta[k]), eta_coef);
      p.add_lmi(std::move(am));
    } else {
      p.add_le(p.scalar(veta[k]), 1.0);
    }
  }

  {  // tracking block, shared with the full builder
    std::vector<int> c5a_ids;
    int c5b_row = -1;
    add_tracking_block(p, p.quad(vz, inst.eve_response), vzeta, c5a_ids, c5b_row, inst);
  }

  for (int k = 0; k < kk; ++k) {
    if (!e[k]) continue;
    p.add_psd(vw[k]);
    p.add_le(p.trace(vw[k]), pmax);
  }
  p.add_psd(vz);
  p.add_le(p.trace(vz), pmax);

  const conic::ConicSolution sol = conic::solve(p, opts);
  r.status = sol.status;
  r.ok = usable(sol, metric_cap);
  if (!r.ok) return r;

  r.objective = sol.objective;
  r.lambda = VecR::Zero(kk);
  r.tr_l1 = VecR::Zero(kk);
  r.tr_l2 = VecR::Zero(kk);
  r.tr_l3 = VecR::Zero(kk);
  r.tr_l4 = VecR::Zero(kk);
  r.tr_l5 = MatR::Zero(kk, kk);
  r.tr_l6 = MatR::Zero(kk, kk);
  r.tr_l7 = MatR::Zero(kk, kk);
  r.kap1 = VecR(kk);
  r.kap2 = VecR(kk);
  r.eta = VecR(kk);

  r.Z = sol.matrix_value(p, vz);
  r.W.assign(kk, MatC::Zero(n, n));
  r.Wb.assign(kk, MatC::Zero(n, n));
  for (int k = 0; k < kk; ++k) {
    if (e[k]) {
      r.W[k] = sol.matrix_value(p, vw[k]);
      r.Wb[k] = r.W[k];
    }
    r.kap1[k] = sol.scalar_value(p, vkap1[k]);
    r.kap2[k] = sol.scalar_value(p, vkap2[k]);
    r.eta[k] = eta_scale[k] * sol.scalar_value(p, veta[k]);
    if (c1_row[k] >= 0) r.lambda[k] = sol.ge_dual[c1_row[k]];
  }

  // multiplier reconstruction for the pinned big-M families:
  //   C7b carries the positive part of Phi_k = I - lambda_k H_k + U Uk U^H
  //   (objective gradient of Wb for a served user), C8b and C9c carry the
  //   rate-row couplings lambda_k R~_k H_k; everything else vanishes. For the
  //   feasibility problem the objective term I is absent from Phi.
  double h1 = 0.0;
  for (int k = 0; k < kk; ++k) {
    if (!e[k]) continue;
    const double ri = inst.rate_lin_info[k];
    MatC phi = feasibility ? MatC(MatC::Zero(n, n)) : MatC(MatC::Identity(n, n));
    phi -= r.lambda[k] * h_outer[k];
    if (c2a_lmi[k] >= 0) {
      MatC u(n, n + 1);
      u << MatC::Identity(n, n), abar;
      phi += u * sol.lmi_dual[c2a_lmi[k]] * u.adjoint();
    } else if (c2a_row[k] >= 0) {
      phi += sol.ge_dual[c2a_row[k]] * (abar * abar.adjoint());
    }
    Eigen::SelfAdjointEigenSolver<MatC> es(hermitian_part(phi));
    double tr_pos = 0.0;
    for (int i = 0; i < n; ++i) tr_pos += std::max(es.eigenvalues()[i], 0.0);
    r.tr_l2[k] = tr_pos;
    const double hn = h_outer[k].trace().real();
    r.tr_l4[k] = r.lambda[k] * ri * hn;
    for (int k2 = 0; k2 < kk; ++k2) {
      if (k2 != k && e[k2]) r.tr_l7(k, k2) = r.lambda[k] * ri * hn;
    }
    // e-independent Lagrangian part: only the rate rows contribute, all
    // pinned-pair products vanish by construction
    double acc = ri * trace_inner(h_outer[k], r.Z) - trace_inner(h_outer[k], r.W[k]);
    for (int k2 = 0; k2 < kk; ++k2) {
      if (k2 != k && e[k2]) acc += ri * trace_inner(h_outer[k], r.W[k2]);
    }
    h1 += r.lambda[k] * acc;
  }
  r.h1 = h1;
  r.dual_sum_lambda = r.lambda.sum();
  return r;
}

/// Shared affine-in-e part h2 of both cut families.
inline void h2_terms(const SoopInstance& inst, const SubproblemResult& s, VecR& coeff, double& constant) {
  const int kk = inst.num_users();
  const double pmax = inst.p_max;
  const double g2 = detail::channel_gain_ref(inst) * detail::channel_gain_ref(inst);
  coeff = VecR::Zero(kk);
  constant = 0.0;
  for (int k = 0; k < kk; ++k) {
    coeff[k] += s.lambda[k] * inst.rate_lin_info[k] * (inst.noise_user[k] / g2);
    coeff[k] += pmax * (-s.tr_l1[k] + s.tr_l2[k] - s.tr_l3[k] + s.tr_l4[k]);
    constant -= pmax * (s.tr_l2[k] + s.tr_l4[k]);
  }
  for (int k = 0; k < kk; ++k) {
    for (int k2 = 0; k2 < kk; ++k2) {
      if (k2 == k) continue;
      coeff[k] -= pmax * s.tr_l5(k, k2);
      coeff[k2] -= pmax * s.tr_l6(k, k2);
      coeff[k] += pmax * s.tr_l7(k, k2);
      coeff[k2] += pmax * s.tr_l7(k, k2);
      constant -= 2.0 * pmax * s.tr_l7(k, k2);
    }
  }
}

}  // namespace detail

inline SubproblemResult solve_primal(const SoopInstance& inst, const std::vector<int>& e,
                                     const conic::SolverOptions& opts = {1e-8, 200}) {
  return detail::solve_subproblem(inst, e, false, opts);
}

inline SubproblemResult solve_feasibility(const SoopInstance& inst, const std::vector<int>& e,
                                          const conic::SolverOptions& opts = {1e-8, 200}) {
  return detail::solve_subproblem(inst, e, true, opts);
}

inline Cut make_optimality_cut(const SoopInstance& inst, const SubproblemResult& s) {
  Cut cut;
  cut.kind = Cut::Kind::optimality;
  detail::h2_terms(inst, s, cut.coeff, cut.constant);
  cut.constant += s.objective + s.h1;
  cut.generator = s.schedule;
  cut.generator_value = cut.value(s.schedule);
  return cut;
}

inline Cut make_feasibility_cut(const SoopInstance& inst, const SubproblemResult& s) {
  Cut cut;
  cut.kind = Cut::Kind::feasibility;
  detail::h2_terms(inst, s, cut.coeff, cut.constant);
  cut.constant += s.h1;
  cut.generator = s.schedule;
  cut.generator_value = cut.value(s.schedule);
  const double scale = std::max({1.0, cut.coeff.cwiseAbs().maxCoeff(), std::abs(cut.constant)});
  if (cut.coeff.cwiseAbs().maxCoeff() < 1e-12 * scale && std::abs(cut.constant) < 1e-12) {
    throw std::runtime_error("make_feasibility_cut: vanishing multipliers, cannot cut");
  }
  return cut;
}

struct MasterResult {
  bool feasible = false;
  std::vector<int> schedule;
  double mu = 0.0;
};

/// Exact relaxed master: enumerate all schedules meeting the service floor,
/// drop those violating a feasibility cut, minimize the optimality-cut
/// envelope (floored at zero since the objective is a power). Ties break to
/// the lexicographically smallest schedule.
inline MasterResult solve_relaxed_master(const std::vector<Cut>& cuts, int gamma1, int num_users,
                                         double mu_floor = 0.0, double cut_tol = 1e-6) {
  if (num_users > 25) throw std::invalid_argument("solve_relaxed_master: too many users to enumerate");
  MasterResult best;
  std::vector<int> e(num_users);
  const std::uint32_t limit = 1u << num_users;
  for (std::uint32_t mask = 0; mask < limit; ++mask) {
    int count = 0;
    for (int k = 0; k < num_users; ++k) {
      e[k] = (mask >> k) & 1u;
      count += e[k];
    }
    if (count < gamma1) continue;
    bool cut_ok = true;
    double mu = mu_floor;
    for (const auto& c : cuts) {
      const double v = c.value(e);
      const double scale = 1.0 + std::abs(c.constant) + c.coeff.cwiseAbs().sum();
      if (c.kind == Cut::Kind::feasibility) {
        if (v > cut_tol * scale) {
          cut_ok = false;
          break;
        }
      } else {
        mu = std::max(mu, v);
      }
    }
    if (!cut_ok) continue;
    if (!best.feasible || mu < best.mu - 1e-12 * (1.0 + std::abs(best.mu)) ||
        (std::abs(mu - best.mu) <= 1e-12 * (1.0 + std::abs(best.mu)) &&
         std::lexicographical_compare(e.begin(), e.end(), best.schedule.begin(), best.schedule.end()))) {
      best.feasible = true;
      best.schedule = e;
      best.mu = mu;
    }
  }
  return best;
}

struct GbdOptions {
  double eps = 1e-4;
  int max_iters = 60;
  double feas_tol = 1e-7;
  conic::SolverOptions solver{1e-8, 200};
  double safety_check_tol = 1e-6;
};

namespace detail {

inline std::vector<int> initial_schedule(const SoopInstance& inst) {
  const int kk = inst.num_users();
  std::vector<int> e(kk, 0);
  if (inst.gamma1 >= kk) {
    std::fill(e.begin(), e.end(), 1);
    return e;
  }
  std::vector<int> order(kk);
  for (int k = 0; k < kk; ++k) order[k] = k;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return std::abs(inst.user_angles[a] - inst.theta_bar) > std::abs(inst.user_angles[b] - inst.theta_bar);
  });
  for (int i = 0; i < inst.gamma1; ++i) e[order[i]] = 1;
  return e;
}

/// Smallest achievable planned posterior trace, ignoring the communication
/// constraints; decides whether a gamma2 budget is attainable at all.
inline double min_sensing_trace(const SoopInstance& inst, const conic::SolverOptions& opts) {
  conic::ConicProgram p;
  SoopHandles h;
  h.Z = p.add_hermitian("Z", inst.num_antennas());
  for (int m = 0; m < 4; ++m) h.zeta.push_back(p.add_scalar("zeta" + std::to_string(m), true));
  conic::LinExpr obj;
  const MatR prior_cov = inst.prior_info.llt().solve(MatR::Identity(4, 4));
  VecR d(4);
  for (int m = 0; m < 4; ++m) d[m] = std::sqrt(std::max(prior_cov(m, m), 1e-300));
  const MatR ds = d.asDiagonal();
  const MatR info_scaled = ds * inst.prior_info * ds;
  const MatR gain_scaled = ds * inst.sensing_gain * ds;
  const conic::LinExpr zq = p.quad(h.Z, inst.eve_response);
  for (int m = 0; m < 4; ++m) {
    conic::AffineMatrix am(5);
    MatC f0 = MatC::Zero(5, 5);
    f0.topLeftCorner(4, 4) = info_scaled.cast<cplx>();
    f0(m, 4) = 1.0;
    f0(4, m) = 1.0;
    am.add_constant(f0);
    MatC gz = MatC::Zero(5, 5);
    gz.topLeftCorner(4, 4) = gain_scaled.cast<cplx>();
    am.add_expr(zq, gz);
    MatC ez = MatC::Zero(5, 5);
    ez(4, 4) = 1.0;
    am.add_expr(p.scalar(h.zeta[m]), ez);
    p.add_lmi(std::move(am));
    obj += p.scalar(h.zeta[m], d[m] * d[m]);
  }
  p.add_psd(h.Z);
  p.add_le(p.trace(h.Z), inst.p_max);
  p.set_objective(obj);
  const auto sol = conic::solve(p, opts);
  if (!usable(sol)) return std::numeric_limits<double>::infinity();
  return sol.objective;
}

/// Rank-one extraction for every scheduled user plus re-verification of the
/// leakage LMIs and rates at the extracted point.
inline void finalize_design(const SoopInstance& inst, const SubproblemResult& s, Design& d) {
  const int kk = inst.num_users();
  const int n = inst.num_antennas();
  d.W = s.Wb;
  d.Z = s.Z;
  d.w.assign(kk, VecC::Zero(n));
  const double gref = channel_gain_ref(inst);
  for (int k = 0; k < kk; ++k) {
    if (!d.schedule[k]) continue;
    // the extraction is invariant to the channel scale; the normalized
    // channel keeps the degeneracy guard meaningful
    d.w[k] = conic::extract_rank_one(s.Wb[k], VecC(inst.channels[k] / gref));
  }

  // verify against the source constraints; fall back to the dominant
  // eigenvector if the construction degraded anything
  const VecC& a = inst.eve_response;
  bool ok = true;
  for (int k = 0; k < kk && ok; ++k) {
    if (!d.schedule[k]) continue;
    const VecC hs = inst.channels[k] / gref;
    const double own = std::norm(hs.dot(d.w[k]));
    const double want = quad_form(hs, s.Wb[k], hs);
    if (std::abs(own - want) > 1e-6 * (1.0 + want)) ok = false;
    const double leak_cap = inst.rate_lin_leak[k] * quad_form(a, s.Z, a) + s.eta[k];
    if (std::norm(a.dot(d.w[k])) > quad_form(a, s.Wb[k], a) + 1e-6 * (1.0 + leak_cap)) ok = false;
  }
  if (!ok) {
    d.rank_one_fallback = true;
    for (int k = 0; k < kk; ++k) {
      if (!d.schedule[k]) continue;
      Eigen::SelfAdjointEigenSolver<MatC> es(s.Wb[k]);
      d.w[k] = std::sqrt(std::max(s.Wb[k].trace().real(), 0.0)) * es.eigenvectors().col(n - 1);
    }
  }
}

}  // namespace detail

struct GbdResult {
  Design design;
  GbdTrace trace;
};

/// Generalized Benders decomposition over the binary schedules,
/// feasibility-first: each iterate is screened by the relaxed rate problem
/// before the primal is solved, so no reliance on solver-level infeasibility
/// certificates.
inline GbdResult gbd_solve(const SoopInstance& inst, double eps = 1e-4, const GbdOptions& opts_in = {}) {
  GbdOptions opts = opts_in;
  opts.eps = eps;
  inst.validate();
  const int kk = inst.num_users();

  GbdResult out;
  Design& d = out.design;
  d.schedule.assign(kk, 0);

  if (!(detail::min_sensing_trace(inst, opts.solver) <= inst.gamma2 * (1.0 + 1e-6) + 1e-12)) {
    d.status = DesignStatus::infeasible;
    return out;
  }

  std::vector<Cut> cuts;
  std::vector<int> e = detail::initial_schedule(inst);
  std::vector<std::vector<int>> tried;
  double ubd = std::numeric_limits<double>::infinity();
  double lbd = 0.0;
  SubproblemResult incumbent;
  bool have_incumbent = false;

  for (int iter = 1; iter <= opts.max_iters; ++iter) {
    const SubproblemResult feas = solve_feasibility(inst, e, opts.solver);
    if (!feas.ok) {
      d.status = DesignStatus::numerical_failure;
      break;
    }
    Cut::Kind kind;
    double sub_value;
    // schedules with slack inside the solver's accuracy band are settled by
    // attempting the primal outright
    bool primal_route = feas.objective <= opts.feas_tol;
    SubproblemResult primal;
    if (primal_route || feas.objective <= 1e-4) {
      primal = solve_primal(inst, e, opts.solver);
      primal_route = primal.ok;
    }
    if (primal_route) {
      if (!primal.ok) {
        d.status = DesignStatus::numerical_failure;
        break;
      }
      cuts.push_back(make_optimality_cut(inst, primal));
      kind = Cut::Kind::optimality;
      sub_value = primal.objective;
      if (primal.objective < ubd) {
        ubd = primal.objective;
        incumbent = primal;
        have_incumbent = true;
        d.schedule = e;
      }
    } else {
      cuts.push_back(make_feasibility_cut(inst, feas));
      kind = Cut::Kind::feasibility;
      sub_value = feas.objective;
    }
    tried.push_back(e);

    const MasterResult master = solve_relaxed_master(cuts, inst.gamma1, kk);
    if (!master.feasible) {
      d.status = have_incumbent ? DesignStatus::converged : DesignStatus::infeasible;
      if (have_incumbent) lbd = ubd;
      out.trace.push_back({ubd, lbd, kind, e, sub_value});
      break;
    }
    lbd = std::max(lbd, master.mu);
    out.trace.push_back({ubd, lbd, kind, e, sub_value});

    if (have_incumbent && ubd - lbd <= opts.eps) {
      d.status = DesignStatus::converged;
      break;
    }
    if (std::find(tried.begin(), tried.end(), master.schedule) != tried.end()) {
      // the exact master re-proposed a visited schedule: bounds have met to
      // within solver accuracy
      d.status = have_incumbent ? DesignStatus::converged : DesignStatus::numerical_failure;
      break;
    }
    e = master.schedule;
    if (iter == opts.max_iters) d.status = DesignStatus::iteration_limit;
  }

  d.ubd = ubd;
  d.lbd = lbd;
  d.iterations = static_cast<int>(out.trace.size());
  if (have_incumbent) {
    d.objective = ubd;
    detail::finalize_design(inst, incumbent, d);
    if (d.status == DesignStatus::numerical_failure) d.status = DesignStatus::iteration_limit;
  } else if (d.status != DesignStatus::infeasible && d.status != DesignStatus::numerical_failure) {
    d.status = DesignStatus::infeasible;
  }
  return out;
}

struct EnumerationResult {
  Design design;
  std::vector<std::vector<int>> feasible_schedules;
  std::vector<double> objectives;  // aligned with feasible_schedules
};

/// Exhaustive oracle: solves the primal for every schedule meeting the
/// service floor. Exponential in K; guarded.
inline EnumerationResult enumerate_optimal(const SoopInstance& inst, const GbdOptions& opts = {}) {
  inst.validate();
  const int kk = inst.num_users();
  if (kk > 12) throw std::invalid_argument("enumerate_optimal: K too large for enumeration");

  EnumerationResult out;
  Design& d = out.design;
  d.schedule.assign(kk, 0);
  d.status = DesignStatus::infeasible;
  if (!(detail::min_sensing_trace(inst, opts.solver) <= inst.gamma2 * (1.0 + 1e-6) + 1e-12)) return out;

  SubproblemResult best;
  bool have = false;
  std::vector<int> e(kk);
  for (std::uint32_t mask = 0; mask < (1u << kk); ++mask) {
    int count = 0;
    for (int k = 0; k < kk; ++k) {
      e[k] = (mask >> k) & 1u;
      count += e[k];
    }
    if (count < inst.gamma1) continue;
    const SubproblemResult feas = solve_feasibility(inst, e, opts.solver);
    if (!feas.ok || feas.objective > 1e-4) continue;
    const SubproblemResult primal = solve_primal(inst, e, opts.solver);
    if (!primal.ok) continue;
    out.feasible_schedules.push_back(e);
    out.objectives.push_back(primal.objective);
    const bool better =
        !have || primal.objective < best.objective - 1e-9 * (1.0 + std::abs(best.objective)) ||
        (std::abs(primal.objective - best.objective) <= 1e-9 * (1.0 + std::abs(best.objective)) &&
         std::lexicographical_compare(e.begin(), e.end(), best.schedule.begin(), best.schedule.end()));
    if (better) {
      best = primal;
      have = true;
    }
  }
  if (have) {
    d.status = DesignStatus::converged;
    d.schedule = best.schedule;
    d.objective = best.objective;
    d.ubd = best.objective;
    d.lbd = best.objective;
    detail::finalize_design(inst, best, d);
  }
  return out;
}

}  // namespace nfsec::gbd
