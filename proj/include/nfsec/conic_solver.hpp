#pragma once

// Primal-dual interior-point engine behind conic::solve. Infeasible-start
// path following with the HKM direction and a Mehrotra predictor-corrector,
// dense factorizations throughout. Complex LMI blocks are embedded as real
// symmetric blocks of twice the size; the embedded structure is invariant
// under the iteration, so duals map back to Hermitian matrices exactly.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "nfsec/conic.hpp"

namespace nfsec::conic::detail {

struct Entry {
  int r, c;
  double v;
};

struct BlockCoef {
  int param;
  std::vector<Entry> entries;
  MatR dense;  // populated instead of entries when the coefficient is full

  bool is_dense() const { return dense.size() > 0; }
};

struct Block {
  int dim = 0;          // real (possibly embedded) dimension
  bool complex_src = false;
  int src_dim = 0;
  double scale = 1.0;   // normalization divisor
  MatR f0;
  std::vector<BlockCoef> coefs;
};

struct Row {
  std::vector<LinTerm> terms;
  double rhs = 0.0;
  double scale = 1.0;
  int origin = -1;  // index into the program's row list; -1 for nonneg rows
};

struct Compiled {
  int n = 0;
  VecR c;
  double c_scale = 1.0;
  double obj_const = 0.0;
  std::vector<Row> eq, ge;
  std::vector<Block> blocks;
  bool trivially_infeasible = false;
  std::vector<int> ge_map;   // program ge index -> compiled ge index (-1 if dropped)
  std::vector<int> eq_map;
};

inline void append_embedded(std::vector<Entry>& out, const MatC& m, int half, double tol) {
  for (int i = 0; i < half; ++i) {
    for (int j = 0; j < half; ++j) {
      const double x = m(i, j).real();
      const double y = m(i, j).imag();
      if (std::abs(x) > tol) {
        out.push_back({i, j, x});
        out.push_back({i + half, j + half, x});
      }
      if (std::abs(y) > tol) {
        out.push_back({i, j + half, -y});
        out.push_back({i + half, j, y});
      }
    }
  }
}

inline void append_real(std::vector<Entry>& out, const MatC& m, int dim, double tol) {
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < dim; ++j) {
      const double x = m(i, j).real();
      if (std::abs(x) > tol) out.push_back({i, j, x});
    }
  }
}

inline Compiled compile(const ConicProgram& p) {
  Compiled cp;
  cp.n = p.params();
  cp.c = VecR::Zero(cp.n);
  for (const auto& t : p.objective().terms) cp.c[t.param] += t.coeff;
  cp.obj_const = p.objective().constant;
  cp.c_scale = std::max(1.0, cp.c.size() ? cp.c.cwiseAbs().maxCoeff() : 0.0);
  cp.c /= cp.c_scale;

  auto add_rows = [&](const std::vector<ConicProgram::LinearConstraint>& src, std::vector<Row>& dst,
                      std::vector<int>& map, bool is_eq) {
    map.assign(src.size(), -1);
    for (std::size_t i = 0; i < src.size(); ++i) {
      Row r;
      r.origin = static_cast<int>(i);
      // merge duplicate params
      std::vector<double> acc;
      for (const auto& t : src[i].terms) {
        bool found = false;
        for (auto& u : r.terms) {
          if (u.param == t.param) {
            u.coeff += t.coeff;
            found = true;
            break;
          }
        }
        if (!found) r.terms.push_back(t);
      }
      r.rhs = src[i].rhs;
      double m = 0.0;
      for (const auto& t : r.terms) m = std::max(m, std::abs(t.coeff));
      if (m == 0.0) {
        const bool violated = is_eq ? (std::abs(r.rhs) > 1e-12) : (r.rhs > 1e-12);
        if (violated) cp.trivially_infeasible = true;
        continue;  // vacuous row
      }
      r.scale = m;
      for (auto& t : r.terms) t.coeff /= m;
      r.rhs /= m;
      map[i] = static_cast<int>(dst.size());
      dst.push_back(std::move(r));
    }
  };
  add_rows(p.equalities(), cp.eq, cp.eq_map, true);
  add_rows(p.inequalities(), cp.ge, cp.ge_map, false);

  for (const auto& s : p.scalars()) {
    if (!s.nonneg) continue;
    Row r;
    r.terms.push_back({s.param, 1.0});
    r.rhs = 0.0;
    r.scale = 1.0;
    r.origin = -1;
    cp.ge.push_back(std::move(r));
  }

  for (const auto& am : p.lmis()) {
    Block b;
    b.src_dim = am.dim();
    double mag = am.constant().cwiseAbs().maxCoeff();
    double imag_mag = am.constant().imag().cwiseAbs().maxCoeff();
    for (const auto& [param, coef] : am.coeffs()) {
      mag = std::max(mag, coef.cwiseAbs().maxCoeff());
      imag_mag = std::max(imag_mag, coef.imag().cwiseAbs().maxCoeff());
    }
    b.scale = std::max(mag, 1e-300);
    b.complex_src = imag_mag > 1e-14 * b.scale;
    b.dim = b.complex_src ? 2 * am.dim() : am.dim();
    const double drop = 0.0;  // keep every stored nonzero
    MatC f0 = am.constant() / b.scale;
    if (b.complex_src) {
      b.f0 = embed_hermitian(f0);
    } else {
      b.f0 = f0.real();
    }
    b.f0 = symmetric_part(b.f0);
    for (const auto& [param, coef] : am.coeffs()) {
      BlockCoef bc;
      bc.param = param;
      const MatC scaled = coef / b.scale;
      if (b.complex_src) append_embedded(bc.entries, scaled, am.dim(), drop);
      else append_real(bc.entries, scaled, am.dim(), drop);
      if (bc.entries.empty()) continue;
      // dense coefficients (beamformer outer products and the like) go
      // through GEMM kernels instead of entrywise accumulation
      if (static_cast<int>(bc.entries.size()) > 8 * b.dim) {
        bc.dense = MatR::Zero(b.dim, b.dim);
        for (const auto& e : bc.entries) bc.dense(e.r, e.c) += e.v;
        bc.entries.clear();
      }
      b.coefs.push_back(std::move(bc));
    }
    cp.blocks.push_back(std::move(b));
  }
  return cp;
}

// F_j(x) evaluated into dense storage.
inline void eval_block(const Block& b, const VecR& x, MatR& out) {
  out = b.f0;
  for (const auto& bc : b.coefs) {
    const double xv = x[bc.param];
    if (xv == 0.0) continue;
    if (bc.is_dense()) out.noalias() += xv * bc.dense;
    else for (const auto& e : bc.entries) out(e.r, e.c) += xv * e.v;
  }
}

inline double max_step_cone(const Eigen::LLT<MatR>& llt, const MatR& delta) {
  const MatR a = llt.matrixL().solve(delta);
  const MatR w = llt.matrixL().solve(a.transpose());
  Eigen::SelfAdjointEigenSolver<MatR> es(symmetric_part(w), Eigen::EigenvaluesOnly);
  const double lmin = es.eigenvalues().minCoeff();
  if (lmin >= 0.0) return std::numeric_limits<double>::infinity();
  return -1.0 / lmin;
}

struct BlockState {
  MatR s, y;              // slack and multiplier iterates
  MatR sinv;
  Eigen::LLT<MatR> s_llt, y_llt;
  MatR resid;             // F(x) - S
  std::vector<MatR> h;    // Sinv * E_d * Y per coefficient
  MatR ds, dy, ds_aff, dy_aff, scratch;
};

inline MatC map_back_dual(const Block& b, const MatR& y) {
  if (!b.complex_src) return y.cast<cplx>();
  const int m = b.src_dim;
  MatC out(m, m);
  out.real() = y.topLeftCorner(m, m) + y.bottomRightCorner(m, m);
  out.imag() = y.bottomLeftCorner(m, m) - y.topRightCorner(m, m);
  return hermitian_part(out);
}

}  // namespace nfsec::conic::detail

namespace nfsec::conic {

inline ConicSolution solve(const ConicProgram& p, const SolverOptions& opts) {
  using namespace detail;
  Compiled cp = compile(p);
  const int n = cp.n;
  const int meq = static_cast<int>(cp.eq.size());
  const int mge = static_cast<int>(cp.ge.size());
  const int nblk = static_cast<int>(cp.blocks.size());

  ConicSolution sol;
  sol.x = VecR::Zero(n);
  sol.eq_dual = VecR::Zero(p.equalities().size());
  sol.ge_dual = VecR::Zero(p.inequalities().size());
  sol.lmi_dual.assign(p.lmis().size(), MatC());
  for (std::size_t j = 0; j < p.lmis().size(); ++j) {
    sol.lmi_dual[j] = MatC::Zero(p.lmis()[j].dim(), p.lmis()[j].dim());
  }
  if (cp.trivially_infeasible) {
    sol.status = SolveStatus::infeasible_detected;
    return sol;
  }

  double cone_dim = mge;
  for (const auto& b : cp.blocks) cone_dim += b.dim;
  if (cone_dim == 0.0 && meq == 0) {
    sol.status = SolveStatus::optimal;
    sol.objective = cp.obj_const;
    sol.dual_objective = cp.obj_const;
    return sol;
  }

  // iterates; slacks start at the scale of their row data so the initial
  // primal infeasibility cannot dwarf the complementarity products
  VecR x = VecR::Zero(n);
  VecR nu = VecR::Zero(meq);
  VecR lam = VecR::Ones(mge), slack(mge);
  for (int i = 0; i < mge; ++i) slack[i] = std::max(1.0, 1.5 * std::abs(cp.ge[i].rhs));
  std::vector<BlockState> bs(nblk);
  for (int j = 0; j < nblk; ++j) {
    const int d = cp.blocks[j].dim;
    bs[j].s = MatR::Identity(d, d);
    bs[j].y = MatR::Identity(d, d);
    bs[j].h.resize(cp.blocks[j].coefs.size());
  }

  MatR aeq(meq, n);
  VecR beq(meq);
  for (int i = 0; i < meq; ++i) {
    aeq.row(i).setZero();
    for (const auto& t : cp.eq[i].terms) aeq(i, t.param) = t.coeff;
    beq[i] = cp.eq[i].rhs;
  }
  VecR bge(mge);
  for (int i = 0; i < mge; ++i) bge[i] = cp.ge[i].rhs;

  MatR schur(n, n);
  Eigen::LLT<MatR> schur_llt;
  VecR rd(n), rpe(meq), rpi(mge);
  VecR dx(n), dx_aff(n), dnu(meq), dnu_aff(meq), dlam(mge), ds(mge), dlam_aff(mge), ds_aff(mge);

  auto ge_value = [&](const Row& r) {
    double v = 0.0;
    for (const auto& t : r.terms) v += t.coeff * x[t.param];
    return v;
  };

  struct Metrics {
    double mu = 0.0, pobj = 0.0, dobj = 0.0, p_res = 0.0, d_res = 0.0, rel_gap = 0.0;
    double value() const { return std::max({p_res, d_res, rel_gap}); }
  };

  // refreshes rd / rpe / rpi and the per-block residuals from the current
  // iterate and reports the convergence measures
  auto eval_metrics = [&]() {
    Metrics m;
    rd = cp.c;
    for (int i = 0; i < meq; ++i) {
      for (const auto& t : cp.eq[i].terms) rd[t.param] -= nu[i] * t.coeff;
    }
    for (int i = 0; i < mge; ++i) {
      for (const auto& t : cp.ge[i].terms) rd[t.param] -= lam[i] * t.coeff;
    }
    for (int j = 0; j < nblk; ++j) {
      for (const auto& bc : cp.blocks[j].coefs) {
        double acc = 0.0;
        if (bc.is_dense()) acc = (bc.dense.array() * bs[j].y.array()).sum();
        else for (const auto& e : bc.entries) acc += e.v * bs[j].y(e.r, e.c);
        rd[bc.param] -= acc;
      }
    }
    for (int i = 0; i < meq; ++i) rpe[i] = aeq.row(i).dot(x) - beq[i];
    for (int i = 0; i < mge; ++i) rpi[i] = ge_value(cp.ge[i]) - bge[i] - slack[i];
    double block_res = 0.0, block_norm = 1.0;
    for (int j = 0; j < nblk; ++j) {
      eval_block(cp.blocks[j], x, bs[j].scratch);
      bs[j].resid = bs[j].scratch - bs[j].s;
      block_res = std::max(block_res, bs[j].resid.cwiseAbs().maxCoeff());
      block_norm = std::max(block_norm, cp.blocks[j].f0.cwiseAbs().maxCoeff());
    }
    double gap = slack.dot(lam);
    for (int j = 0; j < nblk; ++j) gap += (bs[j].s.array() * bs[j].y.array()).sum();
    m.mu = gap / cone_dim;
    m.pobj = cp.c.dot(x);
    m.dobj = beq.dot(nu) + bge.dot(lam);
    for (int j = 0; j < nblk; ++j) m.dobj -= (cp.blocks[j].f0.array() * bs[j].y.array()).sum();
    m.p_res = std::max({meq ? rpe.cwiseAbs().maxCoeff() / (1.0 + beq.cwiseAbs().maxCoeff()) : 0.0,
                        mge ? rpi.cwiseAbs().maxCoeff() / (1.0 + bge.cwiseAbs().maxCoeff()) : 0.0,
                        block_res / (1.0 + block_norm)});
    m.d_res = rd.cwiseAbs().maxCoeff() / (1.0 + cp.c.cwiseAbs().maxCoeff());
    m.rel_gap = std::abs(m.pobj - m.dobj) / (1.0 + std::abs(m.pobj) + std::abs(m.dobj));
    return m;
  };

  const double tol = opts.tol;
  int stall = 0;
  bool step_floor = false;  // endgame backtracking exhausted

  // best iterate seen so far; the tail of the path can degrade the dual
  // residual once complementarity products hit machine noise
  struct Snapshot {
    double metric = std::numeric_limits<double>::infinity();
    VecR x, nu, lam;
    std::vector<MatR> y;
    double objective = 0.0, dual_objective = 0.0, rel_gap = 0.0, p_res = 0.0, d_res = 0.0;
    int iter = 0;
  } best;

  for (int iter = 0; iter <= opts.max_iters; ++iter) {
    const Metrics m = eval_metrics();
    const double mu = m.mu;
    const double pobj = m.pobj;
    const double p_res = m.p_res, d_res = m.d_res, rel_gap = m.rel_gap;

    sol.objective = pobj * cp.c_scale + cp.obj_const;
    sol.dual_objective = m.dobj * cp.c_scale + cp.obj_const;
    sol.rel_gap = rel_gap;
    sol.primal_residual = p_res;
    sol.dual_residual = d_res;
    sol.iterations = iter;

    if (opts.verbose) {
      std::fprintf(stderr, "ipm %3d  obj % .8e  gap %.2e  pres %.2e  dres %.2e  mu %.2e\n", iter, sol.objective,
                   rel_gap, p_res, d_res, mu);
    }

    if (m.value() < best.metric) {
      best.metric = m.value();
      best.x = x;
      best.nu = nu;
      best.lam = lam;
      best.y.resize(nblk);
      for (int j = 0; j < nblk; ++j) best.y[j] = bs[j].y;
      best.objective = sol.objective;
      best.dual_objective = sol.dual_objective;
      best.rel_gap = rel_gap;
      best.p_res = p_res;
      best.d_res = d_res;
      best.iter = iter;
    }

    if (p_res <= tol && d_res <= tol && rel_gap <= tol) {
      sol.status = SolveStatus::optimal;
      break;
    }
    const bool drifting = mu < 1e-6 * (1.0 + std::abs(pobj)) && m.value() > 20.0 * best.metric;
    if (step_floor || drifting || mu < 1e-14 * (1.0 + std::abs(pobj))) {
      sol.status = best.metric <= tol ? SolveStatus::optimal : SolveStatus::not_converged;
      break;
    }

    // primal infeasibility certificate: a dual ray with A^T y ~ 0 and
    // positive dual objective
    double dual_norm = lam.size() ? lam.cwiseAbs().maxCoeff() : 0.0;
    dual_norm = std::max(dual_norm, nu.size() ? nu.cwiseAbs().maxCoeff() : 0.0);
    for (int j = 0; j < nblk; ++j) dual_norm = std::max(dual_norm, bs[j].y.cwiseAbs().maxCoeff());
    if (dual_norm > 1e7) {
      const double ray_resid = (cp.c - rd).cwiseAbs().maxCoeff() / dual_norm;
      double ray_obj = beq.dot(nu) + bge.dot(lam);
      for (int j = 0; j < nblk; ++j) ray_obj -= (cp.blocks[j].f0.array() * bs[j].y.array()).sum();
      if (ray_resid <= 1e-8 && ray_obj / dual_norm > 1e-9) {
        sol.status = SolveStatus::infeasible_detected;
        break;
      }
    }
    if (iter == opts.max_iters || !std::isfinite(mu) || !std::isfinite(pobj)) {
      sol.status = SolveStatus::not_converged;
      break;
    }

    // factorizations of the current cone iterates
    bool fact_ok = true;
    for (int j = 0; j < nblk; ++j) {
      bs[j].s_llt.compute(bs[j].s);
      bs[j].y_llt.compute(bs[j].y);
      if (bs[j].s_llt.info() != Eigen::Success || bs[j].y_llt.info() != Eigen::Success) fact_ok = false;
    }
    if (!fact_ok) {
      sol.status = SolveStatus::not_converged;
      break;
    }
    for (int j = 0; j < nblk; ++j) {
      const int d = cp.blocks[j].dim;
      bs[j].sinv = bs[j].s_llt.solve(MatR::Identity(d, d));
    }

    // Schur matrix M = sum_j B_j + A_ge^T D A_ge
    schur.setZero();
    for (int j = 0; j < nblk; ++j) {
      const auto& blk = cp.blocks[j];
      auto& st = bs[j];
      const int d = blk.dim;
      const int nc = static_cast<int>(blk.coefs.size());
      for (int a = 0; a < nc; ++a) {
        if (blk.coefs[a].is_dense()) {
          st.h[a].noalias() = st.sinv * blk.coefs[a].dense * st.y;
        } else {
          st.h[a].setZero(d, d);
          for (const auto& e : blk.coefs[a].entries) {
            st.h[a].noalias() += e.v * (st.sinv.col(e.r) * st.y.row(e.c));
          }
        }
      }
      for (int a = 0; a < nc; ++a) {
        const int pa = blk.coefs[a].param;
        for (int b = a; b < nc; ++b) {
          const int pb = blk.coefs[b].param;
          double acc = 0.0;
          if (blk.coefs[b].is_dense()) acc = (blk.coefs[b].dense.array() * st.h[a].transpose().array()).sum();
          else for (const auto& e : blk.coefs[b].entries) acc += e.v * st.h[a](e.c, e.r);
          schur(pa, pb) += acc;
          if (pa != pb) schur(pb, pa) += acc;
        }
      }
    }
    for (int i = 0; i < mge; ++i) {
      const double di = lam[i] / slack[i];
      for (const auto& t1 : cp.ge[i].terms) {
        for (const auto& t2 : cp.ge[i].terms) schur(t1.param, t2.param) += di * t1.coeff * t2.coeff;
      }
    }

    double reg = 0.0;
    for (int attempt = 0; attempt < 6; ++attempt) {
      schur_llt.compute(schur);
      if (schur_llt.info() == Eigen::Success) break;
      const double bump = (reg == 0.0) ? 1e-12 * std::max(1.0, schur.diagonal().maxCoeff()) : reg * 100.0;
      schur.diagonal().array() += bump - reg;
      reg = bump;
    }
    if (schur_llt.info() != Eigen::Success) {
      sol.status = SolveStatus::not_converged;
      break;
    }

    MatR x2;        // M^{-1} Aeq^T for the equality pivot
    MatR eq_schur;
    Eigen::LDLT<MatR> eq_ldlt;
    if (meq > 0) {
      x2 = schur_llt.solve(aeq.transpose());
      eq_schur = aeq * x2;
      eq_ldlt.compute(eq_schur);
    }

    // direction solve shared by predictor and corrector
    auto solve_direction = [&](double sigma_mu, bool corrector, VecR& out_dx, VecR& out_dnu, VecR& out_dlam,
                               VecR& out_ds) {
      VecR rhs = -rd;
      for (int i = 0; i < mge; ++i) {
        const double corr = corrector ? ds_aff[i] * dlam_aff[i] : 0.0;
        const double vi = (sigma_mu - slack[i] * lam[i] - corr) / slack[i];
        const double di = lam[i] / slack[i];
        const double w = vi - di * rpi[i];
        for (const auto& t : cp.ge[i].terms) rhs[t.param] += t.coeff * w;
      }
      for (int j = 0; j < nblk; ++j) {
        const auto& blk = cp.blocks[j];
        auto& st = bs[j];
        // P = Y * (R + corrector-part) * Sinv folded together
        st.scratch.noalias() = st.y * st.resid * st.sinv;
        if (corrector) st.scratch.noalias() += st.dy_aff * st.ds_aff * st.sinv;
        for (const auto& bc : blk.coefs) {
          // sigma_mu * Tr(E Sinv) - Tr(E Y) - Tr(E P)
          double acc = 0.0;
          if (bc.is_dense()) {
            acc = sigma_mu * (bc.dense.array() * st.sinv.array()).sum() -
                  (bc.dense.array() * st.y.array()).sum() -
                  (bc.dense.array() * st.scratch.transpose().array()).sum();
          } else {
            for (const auto& e : bc.entries) {
              acc += e.v * (sigma_mu * st.sinv(e.r, e.c) - st.y(e.r, e.c) - st.scratch(e.c, e.r));
            }
          }
          rhs[bc.param] += acc;
        }
      }
      VecR x1 = schur_llt.solve(rhs);
      x1 += schur_llt.solve(rhs - schur * x1);  // two refinement passes
      x1 += schur_llt.solve(rhs - schur * x1);
      if (meq > 0) {
        out_dnu = eq_ldlt.solve(-rpe - aeq * x1);
        out_dx = x1 + x2 * out_dnu;
      } else {
        out_dx = x1;
      }
      for (int i = 0; i < mge; ++i) {
        double adx = 0.0;
        for (const auto& t : cp.ge[i].terms) adx += t.coeff * out_dx[t.param];
        out_ds[i] = adx + rpi[i];
        const double corr = corrector ? ds_aff[i] * dlam_aff[i] : 0.0;
        out_dlam[i] = (sigma_mu - slack[i] * lam[i] - corr) / slack[i] - (lam[i] / slack[i]) * out_ds[i];
      }
      for (int j = 0; j < nblk; ++j) {
        const auto& blk = cp.blocks[j];
        auto& st = bs[j];
        st.ds = st.resid;
        for (const auto& bc : blk.coefs) {
          const double xv = out_dx[bc.param];
          if (xv == 0.0) continue;
          if (bc.is_dense()) st.ds.noalias() += xv * bc.dense;
          else for (const auto& e : bc.entries) st.ds(e.r, e.c) += xv * e.v;
        }
        MatR m = st.y * st.ds * st.sinv;
        if (corrector) m.noalias() += st.dy_aff * st.ds_aff * st.sinv;
        st.dy = sigma_mu * st.sinv - st.y - symmetric_part(m);
      }
    };

    auto step_lengths = [&](double& ap, double& ad) {
      ap = ad = std::numeric_limits<double>::infinity();
      for (int i = 0; i < mge; ++i) {
        if (ds[i] < 0.0) ap = std::min(ap, -slack[i] / ds[i]);
        if (dlam[i] < 0.0) ad = std::min(ad, -lam[i] / dlam[i]);
      }
      for (int j = 0; j < nblk; ++j) {
        ap = std::min(ap, max_step_cone(bs[j].s_llt, bs[j].ds));
        ad = std::min(ad, max_step_cone(bs[j].y_llt, bs[j].dy));
      }
    };

    // predictor
    solve_direction(0.0, false, dx_aff, dnu_aff, dlam, ds);
    for (int j = 0; j < nblk; ++j) {
      bs[j].ds_aff = bs[j].ds;
      bs[j].dy_aff = bs[j].dy;
    }
    ds_aff = ds;
    dlam_aff = dlam;
    double ap_aff, ad_aff;
    step_lengths(ap_aff, ad_aff);
    ap_aff = std::min(1.0, ap_aff);
    ad_aff = std::min(1.0, ad_aff);

    double gap_aff = 0.0;
    for (int i = 0; i < mge; ++i) gap_aff += (slack[i] + ap_aff * ds_aff[i]) * (lam[i] + ad_aff * dlam_aff[i]);
    for (int j = 0; j < nblk; ++j) {
      gap_aff += ((bs[j].s + ap_aff * bs[j].ds_aff).array() * (bs[j].y + ad_aff * bs[j].dy_aff).array()).sum();
    }
    const double mu_aff = gap_aff / cone_dim;
    double sigma = std::pow(std::max(mu_aff, 0.0) / mu, 3.0);
    sigma = std::clamp(sigma, 1e-8, 0.99);
    if (stall >= 2) sigma = std::max(sigma, 0.5);

    // corrector
    solve_direction(sigma * mu, true, dx, dnu, dlam, ds);
    double ap, ad;
    step_lengths(ap, ad);
    ap = std::min(1.0, opts.step_fraction * ap);
    ad = std::min(1.0, opts.step_fraction * ad);

    // near convergence the Schur system turns ill-conditioned and a full
    // step can wreck the duals; accept the step only if the merit does not
    // blow up, backtracking otherwise
    const bool endgame = mu < 1e-5 * (1.0 + std::abs(pobj));
    VecR sx, snu, slam, sslack;
    std::vector<MatR> ss, sy;
    if (endgame) {
      sx = x;
      snu = nu;
      slam = lam;
      sslack = slack;
      ss.resize(nblk);
      sy.resize(nblk);
      for (int j = 0; j < nblk; ++j) {
        ss[j] = bs[j].s;
        sy[j] = bs[j].y;
      }
    }
    const double metric_before = m.value();
    for (int attempt = 0;; ++attempt) {
      x += ap * dx;
      slack += ap * ds;
      for (int j = 0; j < nblk; ++j) {
        bs[j].s = symmetric_part(bs[j].s + ap * bs[j].ds);
        bs[j].y = symmetric_part(bs[j].y + ad * bs[j].dy);
      }
      if (meq > 0) nu += ad * dnu;
      lam += ad * dlam;
      if (!endgame) break;
      const Metrics trial = eval_metrics();
      if (trial.value() <= 5.0 * metric_before || attempt >= 3) {
        if (trial.value() > 5.0 * metric_before) step_floor = true;
        break;
      }
      // reject: restore and halve the step
      x = sx;
      nu = snu;
      lam = slam;
      slack = sslack;
      for (int j = 0; j < nblk; ++j) {
        bs[j].s = ss[j];
        bs[j].y = sy[j];
      }
      ap *= 0.5;
      ad *= 0.5;
    }

    stall = (std::min(ap, ad) < 1e-3) ? stall + 1 : 0;
    if (stall >= 8) {
      sol.status = SolveStatus::not_converged;
      sol.iterations = iter + 1;
      break;
    }
  }

  // fall back to the best iterate along the path
  if (best.metric < std::max({sol.primal_residual, sol.dual_residual, sol.rel_gap})) {
    x = best.x;
    nu = best.nu;
    lam = best.lam;
    for (int j = 0; j < nblk; ++j) bs[j].y = best.y[j];
    sol.objective = best.objective;
    sol.dual_objective = best.dual_objective;
    sol.rel_gap = best.rel_gap;
    sol.primal_residual = best.p_res;
    sol.dual_residual = best.d_res;
    if (sol.status != SolveStatus::infeasible_detected && best.metric <= tol) sol.status = SolveStatus::optimal;
  }

  // map duals back to the caller's (unscaled, complex) constraint set
  for (std::size_t i = 0; i < cp.eq_map.size(); ++i) {
    if (cp.eq_map[i] >= 0) sol.eq_dual[i] = nu[cp.eq_map[i]] * cp.c_scale / cp.eq[cp.eq_map[i]].scale;
  }
  for (std::size_t i = 0; i < cp.ge_map.size(); ++i) {
    if (cp.ge_map[i] >= 0) sol.ge_dual[i] = lam[cp.ge_map[i]] * cp.c_scale / cp.ge[cp.ge_map[i]].scale;
  }
  for (int j = 0; j < nblk; ++j) {
    sol.lmi_dual[j] = detail::map_back_dual(cp.blocks[j], bs[j].y) * (cp.c_scale / cp.blocks[j].scale);
  }
  sol.x = x;
  return sol;
}

}  // namespace nfsec::conic
