#pragma once

// Low-complexity design: zero-forcing beamformers for the users plus the
// predicted eavesdropper, then a penalty/SCA loop over power allocations and
// relaxed scheduling variables, finishing with rounding and one fixed-
// schedule repair solve.

#include <algorithm>
#include <string>
#include <vector>

#include "nfsec/conic.hpp"
#include "nfsec/gbd.hpp"
#include "nfsec/linalg.hpp"

namespace nfsec::zfsca {

/// Unnormalized pseudo-inverse columns of the stacked channel matrix
/// [h_1 ... h_K h_E]: h_j^H w_k = delta_jk.
struct ZfBasis {
  std::vector<VecC> w;  // per user
  VecC w_eve;
  double condition = 0.0;  // condition number of the stacked channel matrix
};

struct ScaIterate {
  double rho = 0.0;
  double objective = 0.0;     // true penalized objective at the iterate
  double power = 0.0;         // unpenalized transmit power, watts
  double binariness = 0.0;    // sum e (1 - e)
};

struct ScaState {
  VecR e_frac;
  VecR alloc;       // q_k (power allocations against the scaled basis)
  VecR alloc_bar;   // q_bar_k
  double alloc_eve = 0.0;
  double rho = 0.0;
  int iterations = 0;
  int rho_doublings = 0;
  std::vector<ScaIterate> history;
};

inline ZfBasis zf_beamformers(const std::vector<VecC>& channels, const channel::ArrayGeometry&) {
  const int cols = static_cast<int>(channels.size());
  if (cols < 1) throw std::invalid_argument("zf_beamformers: no channels");
  const int n = static_cast<int>(channels[0].size());
  if (cols > n) throw std::invalid_argument("zf_beamformers: more channels than antennas");

  double acc = 0.0;
  for (const auto& h : channels) acc += std::log(std::max(h.norm(), 1e-300));
  const double gref = std::exp(acc / cols);

  MatC hmat(n, cols);
  for (int c = 0; c < cols; ++c) hmat.col(c) = channels[c] / gref;
  const MatC gram = hmat.adjoint() * hmat;
  Eigen::SelfAdjointEigenSolver<MatC> es(gram);
  const double lmin = es.eigenvalues().minCoeff();
  const double lmax = es.eigenvalues().maxCoeff();
  if (!(lmin > 1e-12 * lmax)) {
    throw std::domain_error("zf_beamformers: stacked channels are rank deficient (degenerate geometry)");
  }
  const MatC pinv = hmat * gram.llt().solve(MatC::Identity(cols, cols));

  ZfBasis basis;
  basis.condition = std::sqrt(lmax / lmin);
  for (int c = 0; c + 1 < cols; ++c) basis.w.push_back(pinv.col(c) / gref);
  basis.w_eve = pinv.col(cols - 1) / gref;
  return basis;
}

struct ScaHandles {
  // allocations are held as fractions of their per-beam power caps, so every
  // variable lives in [0, 1] and the big-M couplings have unit coefficients
  std::vector<int> alloc, alloc_bar, sched;
  int alloc_eve = -1;
  std::vector<int> kap1, kap2, eta;
  std::vector<int> zeta;
  std::vector<int> c1;
  double gain_ref = 1.0;
  VecR eta_scale;
  VecR big_m;          // per-user allocation cap P / ||w~_k||^2
  double big_m_eve = 0.0;
  VecR basis_power;    // ||w~_k||^2 (scaled basis)
  double basis_power_eve = 0.0;
  VecR own_gain;       // |h~_k^H w~_k|^2, ~1 by construction
  double obj_const = 0.0;

  double alloc_value(const conic::ConicProgram& p, const conic::ConicSolution& s, int k) const {
    return big_m[k] * s.scalar_value(p, alloc[k]);
  }
  double alloc_bar_value(const conic::ConicProgram& p, const conic::ConicSolution& s, int k) const {
    return big_m[k] * s.scalar_value(p, alloc_bar[k]);
  }
  double alloc_eve_value(const conic::ConicProgram& p, const conic::ConicSolution& s) const {
    return big_m_eve * s.scalar_value(p, alloc_eve);
  }
};

/// Builds the convex subproblem at the SCA linearization point e_prev with
/// penalty factor rho. Scheduling variables live in [0,1]; pass fix_schedule
/// to re-solve with a frozen binary schedule (repair step).
inline conic::ConicProgram build_sca_subproblem(const gbd::SoopInstance& inst, const ZfBasis& zf,
                                                const VecR& e_prev, double rho, ScaHandles& h,
                                                const std::vector<int>* fix_schedule = nullptr) {
  inst.validate();
  const int kk = inst.num_users();
  if (static_cast<int>(zf.w.size()) != kk) throw std::invalid_argument("build_sca_subproblem: basis size");
  if (inst.gamma1 > kk) throw std::invalid_argument("build_sca_subproblem: gamma1 > K");

  conic::ConicProgram p;
  h = ScaHandles{};
  h.gain_ref = gbd::detail::channel_gain_ref(inst);
  const double g = h.gain_ref;

  // scaled basis: w~ = g * w has O(1) entries; allocations q relate to
  // received powers via |h^H sqrt(q) w~|^2 = q
  std::vector<VecC> wt(kk);
  h.basis_power = VecR(kk);
  h.own_gain = VecR(kk);
  h.big_m = VecR(kk);
  for (int k = 0; k < kk; ++k) {
    wt[k] = g * zf.w[k];
    h.basis_power[k] = wt[k].squaredNorm();
    const cplx own = (inst.channels[k] / g).dot(wt[k]);
    h.own_gain[k] = std::norm(own);
    h.big_m[k] = inst.p_max / h.basis_power[k];
  }
  const VecC wte = g * zf.w_eve;
  h.basis_power_eve = wte.squaredNorm();
  h.big_m_eve = inst.p_max / h.basis_power_eve;

  for (int k = 0; k < kk; ++k) h.alloc.push_back(p.add_scalar("q" + std::to_string(k), true));
  for (int k = 0; k < kk; ++k) h.alloc_bar.push_back(p.add_scalar("qb" + std::to_string(k), true));
  h.alloc_eve = p.add_scalar("qe", true);
  for (int k = 0; k < kk; ++k) h.sched.push_back(p.add_scalar("e" + std::to_string(k), true));
  for (int k = 0; k < kk; ++k) {
    h.kap1.push_back(p.add_scalar("kap1_" + std::to_string(k), true));
    h.kap2.push_back(p.add_scalar("kap2_" + std::to_string(k), true));
    h.eta.push_back(p.add_scalar("eta_" + std::to_string(k), true));
  }
  for (int m = 0; m < 4; ++m) h.zeta.push_back(p.add_scalar("zeta_" + std::to_string(m), true));

  // objective: power plus the linearized binary penalty; a fractional
  // allocation of 1 is exactly the power budget on that beam
  conic::LinExpr obj = p.scalar(h.alloc_eve, h.big_m_eve * h.basis_power_eve);
  h.obj_const = 0.0;
  for (int k = 0; k < kk; ++k) {
    obj += p.scalar(h.alloc_bar[k], h.big_m[k] * h.basis_power[k]);
    obj += p.scalar(h.sched[k], rho * (1.0 - 2.0 * e_prev[k]));
    h.obj_const += rho * e_prev[k] * e_prev[k];
  }
  p.set_objective(obj);

  const VecR noise_scaled = inst.noise_user / (g * g);
  for (int k = 0; k < kk; ++k) {
    const double ri = inst.rate_lin_info[k];
    conic::LinExpr expr = p.scalar(h.alloc_bar[k], h.big_m[k] * h.own_gain[k]);
    expr += p.scalar(h.sched[k], -ri * noise_scaled[k]);
    h.c1.push_back(p.add_ge(expr, 0.0));
  }

  const VecC& abar = inst.eve_response;
  const int n = inst.num_antennas();
  h.eta_scale = VecR(kk);
  for (int k = 0; k < kk; ++k) {
    const double rl = inst.rate_lin_leak[k];
    const double s_eta = inst.d_bar * inst.d_bar * rl * inst.noise_eve / inst.alpha;
    h.eta_scale[k] = s_eta;
    VecC vk(n + 1), ve(n + 1);
    vk << wt[k], abar.dot(wt[k]);
    ve << wte, abar.dot(wte);
    if (inst.beta_a > 1e-15) {
      conic::AffineMatrix am(n + 1);
      MatC kap_coef = MatC::Identity(n + 1, n + 1);
      kap_coef(n, n) = -inst.beta_a;
      am.add_expr(p.scalar(h.kap1[k]), kap_coef);
      MatC eta_coef = MatC::Zero(n + 1, n + 1);
      eta_coef(n, n) = s_eta;
      am.add_expr(p.scalar(h.eta[k]), eta_coef);
      am.add_expr(p.scalar(h.alloc_bar[k]), MatC(-h.big_m[k] * vk * vk.adjoint()));
      am.add_expr(p.scalar(h.alloc_eve), MatC(rl * h.big_m_eve * ve * ve.adjoint()));
      p.add_lmi(std::move(am));
    } else {
      conic::LinExpr expr = p.scalar(h.eta[k], s_eta);
      expr += p.scalar(h.alloc_bar[k], -h.big_m[k] * std::norm(abar.dot(wt[k])));
      expr += p.scalar(h.alloc_eve, rl * h.big_m_eve * std::norm(abar.dot(wte)));
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
      p.add_lmi(std::move(am));
    } else {
      p.add_le(p.scalar(h.eta[k]), 1.0);
    }
  }

  {  // planned posterior covariance budget with Z = q_e w~_e w~_e^H
    const double eve_gain = std::norm(abar.dot(wte));
    std::vector<int> c5a_ids;
    int c5b_row = -1;
    gbd::detail::add_tracking_block(p, p.scalar(h.alloc_eve, h.big_m_eve * eve_gain), h.zeta, c5a_ids,
                                    c5b_row, inst);
  }

  // unit big-M couplings between fractional allocations and the schedule
  conic::LinExpr floor_expr;
  for (int k = 0; k < kk; ++k) {
    p.add_ge(p.scalar(h.sched[k]) - p.scalar(h.alloc_bar[k]), 0.0);                              // qb <= e
    p.add_ge(p.scalar(h.alloc_bar[k]) - p.scalar(h.alloc[k]) - p.scalar(h.sched[k]), -1.0);      // qb >= q-(1-e)
    p.add_ge(p.scalar(h.alloc[k]) - p.scalar(h.alloc_bar[k]), 0.0);                              // qb <= q
    p.add_le(p.scalar(h.alloc[k]), 1.0);
    p.add_le(p.scalar(h.sched[k]), 1.0);
    floor_expr += p.scalar(h.sched[k]);
    if (fix_schedule) p.add_eq(p.scalar(h.sched[k]), static_cast<double>((*fix_schedule)[k]));
  }
  p.add_le(p.scalar(h.alloc_eve), 1.0);
  p.add_ge(floor_expr, static_cast<double>(inst.gamma1));
  return p;
}

inline std::vector<int> round_and_repair(const VecR& e_frac, const gbd::SoopInstance& inst) {
  const int kk = static_cast<int>(e_frac.size());
  std::vector<int> e(kk);
  for (int k = 0; k < kk; ++k) e[k] = e_frac[k] >= 0.5 ? 1 : 0;
  int count = 0;
  for (int v : e) count += v;
  while (count < inst.gamma1) {
    int arg = -1;
    double best = -1.0;
    for (int k = 0; k < kk; ++k) {
      if (!e[k] && e_frac[k] > best) {
        best = e_frac[k];
        arg = k;
      }
    }
    e[arg] = 1;
    ++count;
  }
  return e;
}

struct ZfScaOptions {
  double eps = 1e-4;
  double rho = 0.0;  // 0: default 10 * p_max
  int max_iters = 50;
  int max_rho_doublings = 3;
  double binariness_tol = 1e-3;
  conic::SolverOptions solver{1e-8, 200};
};

struct ZfScaResult {
  gbd::Design design;
  ScaState state;
  ZfBasis basis;
};

/// Penalty/SCA loop of the low-complexity design: iterate the convex
/// subproblem from e = 0, track the true penalized objective, double the
/// penalty if the relaxation fails to go near-binary, then round and re-solve
/// once with the schedule frozen.
inline ZfScaResult zfsca_solve(const gbd::SoopInstance& inst, const ZfScaOptions& opts_in = {}) {
  ZfScaOptions opts = opts_in;
  if (opts.rho <= 0.0) opts.rho = 10.0 * inst.p_max;
  inst.validate();
  const int kk = inst.num_users();

  ZfScaResult out;
  out.design.schedule.assign(kk, 0);
  out.design.status = gbd::DesignStatus::numerical_failure;

  std::vector<VecC> stacked = inst.channels;
  stacked.push_back((std::sqrt(inst.alpha) / inst.d_bar) * inst.eve_response);
  out.basis = zf_beamformers(stacked, channel::ArrayGeometry{});

  ScaState& st = out.state;
  st.rho = opts.rho;
  st.e_frac = VecR::Zero(kk);

  ScaHandles h;
  conic::ConicSolution sol;
  double prev_obj = std::numeric_limits<double>::infinity();
  bool converged = false;
  for (int iter = 0; iter < opts.max_iters; ++iter) {
    const conic::ConicProgram p = build_sca_subproblem(inst, out.basis, st.e_frac, st.rho, h);
    sol = conic::solve(p, opts.solver);
    if (!gbd::detail::usable(sol)) {
      out.design.status = sol.status == conic::SolveStatus::infeasible_detected
                              ? gbd::DesignStatus::infeasible
                              : gbd::DesignStatus::numerical_failure;
      return out;
    }
    st.iterations = iter + 1;

    VecR e_new(kk), q(kk), qb(kk);
    for (int k = 0; k < kk; ++k) {
      e_new[k] = std::clamp(sol.scalar_value(p, h.sched[k]), 0.0, 1.0);
      q[k] = h.alloc_value(p, sol, k);
      qb[k] = h.alloc_bar_value(p, sol, k);
    }
    const double qe = h.alloc_eve_value(p, sol);

    double power = qe * h.basis_power_eve;
    double binariness = 0.0;
    for (int k = 0; k < kk; ++k) {
      power += qb[k] * h.basis_power[k];
      binariness += e_new[k] * (1.0 - e_new[k]);
    }
    const double penalized = power + st.rho * binariness;
    st.history.push_back({st.rho, penalized, power, binariness});
    st.e_frac = e_new;
    st.alloc = q;
    st.alloc_bar = qb;
    st.alloc_eve = qe;

    const double change = std::abs(penalized - prev_obj) / std::max(std::abs(penalized), 1e-12);
    prev_obj = penalized;
    if (change <= opts.eps) {
      if (binariness <= opts.binariness_tol) {
        converged = true;
        break;
      }
      if (st.rho_doublings >= opts.max_rho_doublings) break;
      st.rho *= 2.0;
      ++st.rho_doublings;
      prev_obj = std::numeric_limits<double>::infinity();
    }
  }
  (void)converged;

  // round, then one repair solve with the schedule frozen
  const std::vector<int> e_bin = round_and_repair(st.e_frac, inst);
  const conic::ConicProgram pfix = build_sca_subproblem(inst, out.basis, st.e_frac, 0.0, h, &e_bin);
  const conic::ConicSolution fixed = conic::solve(pfix, opts.solver);
  if (!gbd::detail::usable(fixed)) {
    out.design.status = gbd::DesignStatus::infeasible;
    return out;
  }

  const int n = inst.num_antennas();
  out.design.schedule = e_bin;
  out.design.w.assign(kk, VecC::Zero(n));
  double objective = 0.0;
  const double g = h.gain_ref;
  for (int k = 0; k < kk; ++k) {
    if (!e_bin[k]) continue;
    const double qb = std::max(h.alloc_bar_value(pfix, fixed, k), 0.0);
    out.design.w[k] = std::sqrt(qb) * (g * out.basis.w[k]);
    objective += qb * h.basis_power[k];
  }
  const double qe = std::max(h.alloc_eve_value(pfix, fixed), 0.0);
  const VecC wte = g * out.basis.w_eve;
  out.design.Z = qe * (wte * wte.adjoint());
  objective += qe * h.basis_power_eve;
  out.design.objective = objective;
  out.design.status = gbd::DesignStatus::converged;
  out.design.iterations = st.iterations;
  return out;
}

}  // namespace nfsec::zfsca
