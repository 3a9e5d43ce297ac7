#include <catch2/catch.hpp>

#include "instances.hpp"
#include "nfsec/gbd.hpp"

using namespace nfsec;
using namespace nfsec::gbd;

TEST_CASE("constraint inventory for K=1, N=2") {
  auto setup = instances::desk_instance(2, 1, 7, 1, 0.8);
  SoopHandles h;
  const auto p = build_soop(setup.instance, {1}, h);

  CHECK(h.c1.size() == 1);
  CHECK(h.lmi_c2a.size() == 1);
  CHECK(h.lmi_c2a[0] >= 0);
  CHECK(h.lmi_c2b.size() == 1);
  CHECK(h.lmi_c2b[0] >= 0);
  CHECK(h.lmi_c5a.size() == 4);
  CHECK(h.c5b >= 0);
  // C7a-d and C8a-d present once each, no C9 pairs for a single user
  CHECK(h.lmi_c7a.size() == 1);
  CHECK(h.lmi_c7d.size() == 1);
  CHECK(h.lmi_c8d.size() == 1);
  CHECK(h.lmi_c9a[0][0] == -1);
  // total LMI count: C2a + C2b + 4*C5a + 4*C7 + 4*C8 + psd(W) + psd(Z)
  CHECK(p.lmis().size() == 16);
  // inequalities: rate row, trace budget row, two power caps
  CHECK(p.inequalities().size() == 4);
}

TEST_CASE("all-zero schedule reduces to the minimum sensing power") {
  auto setup = instances::desk_instance(6, 2, 11, 0, 0.3);
  const auto& inst = setup.instance;
  const auto r = solve_primal(inst, {0, 0});
  REQUIRE(r.ok);

  // independent reduced problem: min Tr(Z) subject to the tracking block
  // only, written directly against the posterior-information Schur form
  // (pre-whitened by the prior standard deviations for conditioning)
  conic::ConicProgram q;
  const int z = q.add_hermitian("Z", 6);
  std::vector<int> zeta;
  for (int m = 0; m < 4; ++m) zeta.push_back(q.add_scalar("zeta" + std::to_string(m), true));
  q.add_psd(z);
  q.add_le(q.trace(z), inst.p_max);
  const MatR pcov = inst.prior_info.inverse();
  VecR dsc(4);
  for (int m = 0; m < 4; ++m) dsc[m] = std::sqrt(pcov(m, m));
  const MatR dmat = dsc.asDiagonal();
  conic::LinExpr sz;
  for (int m = 0; m < 4; ++m) {
    conic::AffineMatrix am(5);
    MatC f0 = MatC::Zero(5, 5);
    f0.topLeftCorner(4, 4) = (dmat * inst.prior_info * dmat).cast<cplx>();
    f0(m, 4) = 1.0;
    f0(4, m) = 1.0;
    am.add_constant(f0);
    MatC gz = MatC::Zero(5, 5);
    gz.topLeftCorner(4, 4) = (dmat * inst.sensing_gain * dmat).cast<cplx>();
    am.add_expr(q.quad(z, inst.eve_response), gz);
    MatC ez = MatC::Zero(5, 5);
    ez(4, 4) = 1.0;
    am.add_expr(q.scalar(zeta[m]), ez);
    q.add_lmi(std::move(am));
    sz += q.scalar(zeta[m], dsc[m] * dsc[m]);
  }
  q.add_le(sz, inst.gamma2);
  conic::LinExpr obj = q.trace(z);
  q.set_objective(obj);
  const auto ref = conic::solve(q, {1e-8, 200});
  REQUIRE(ref.status == conic::SolveStatus::optimal);
  CHECK(r.objective == Approx(ref.objective).epsilon(1e-5).margin(1e-8));
}

TEST_CASE("hand-constructed point satisfies the assembled program") {
  auto setup = instances::desk_instance(6, 2, 13, 0, 0.9);
  auto inst = setup.instance;
  SoopHandles h;
  const auto p = build_soop(inst, {0, 0}, h);

  VecR x = VecR::Zero(p.params());
  auto set_matrix = [&](int var, const MatC& m) {
    const int dim = static_cast<int>(m.rows());
    for (int i = 0; i < dim; ++i) x[p.diag_param(var, i)] = m(i, i).real();
    for (int i = 0; i < dim; ++i) {
      for (int j = i + 1; j < dim; ++j) {
        const auto [pr, pi] = p.offdiag_params(var, i, j);
        x[pr] = m(i, j).real();
        x[pi] = m(i, j).imag();
      }
    }
  };

  // strong focused sensing beam plus idle matched-filter beamformers
  const VecC a = inst.eve_response;
  const MatC z = (0.4 * inst.p_max / 6.0) * MatC::Identity(6, 6) +
                 (0.4 * inst.p_max / 6.0) * (a * a.adjoint());
  set_matrix(h.Z, z);
  for (int k = 0; k < 2; ++k) {
    const VecC hk = inst.channels[k] / inst.channels[k].norm();
    set_matrix(h.W[k], MatC(0.5 * inst.p_max * hk * hk.adjoint()));
  }
  // posterior diagonal bounds consistent with that Z
  const double gain = quad_form(a, z, a);
  const MatR info = inst.prior_info + gain * inst.sensing_gain;
  const MatR cov = info.llt().solve(MatR::Identity(4, 4));
  REQUIRE(cov.trace() <= inst.gamma2);  // gamma2 was set above the floor
  const MatR pcov = inst.prior_info.inverse();
  for (int m = 0; m < 4; ++m) {
    // the program holds each diagonal bound in units of its prior variance
    x[p.scalar_param(h.zeta[m])] = (cov(m, m) + 0.25 * (inst.gamma2 - cov.trace())) / pcov(m, m);
  }

  const auto viol = conic::primal_violations(p, x);
  CHECK(viol.max() < 1e-9);
}

TEST_CASE("feasibility problem: slack and dual normalization") {
  auto setup = instances::desk_instance(6, 2, 17, 2, 0.7);
  const auto& inst = setup.instance;

  const auto feas = solve_feasibility(inst, {1, 1});
  REQUIRE(feas.ok);
  if (feas.objective > 1e-7) {
    CHECK(feas.dual_sum_lambda == Approx(1.0).margin(1e-6));
  } else {
    // serviceable schedule: the production (presolved) primal must agree
    // with a direct solve of the unreduced formulation
    const auto primal = solve_primal(inst, {1, 1});
    REQUIRE(primal.ok);
    SoopHandles h;
    const auto p = build_soop(inst, {1, 1}, h);
    const auto sol = conic::solve(p, {1e-6, 200});
    REQUIRE(detail::usable(sol, 1e-4));
    CHECK(sol.objective == Approx(primal.objective).epsilon(1e-4));
    const auto rep = conic::residuals(p, sol);
    CHECK(rep.stationarity < 1e-3 * (1.0 + std::abs(sol.objective)));
    CHECK(rep.primal.max() < 1e-4);
  }
}

TEST_CASE("an unservable user produces positive slack and a valid cut") {
  // eavesdropper sits essentially on top of user 0: leakage cannot be met
  auto setup = instances::desk_instance(6, 2, 19, 1, 0.8, 0.05);
  auto inst = setup.instance;
  const auto g = setup.geometry;
  const channel::PolarPosition split{inst.theta_bar, inst.d_bar + 0.05};
  inst.channels[0] = channel::channel_vector(g, split).entries;
  inst.user_angles[0] = split.angle;
  inst.rate_lin_info[0] = std::exp2(6.0) - 1.0;

  const std::vector<int> e{1, 0};
  const auto feas = solve_feasibility(inst, e);
  REQUIRE(feas.ok);
  REQUIRE(feas.objective > 1e-6);
  CHECK(feas.dual_sum_lambda == Approx(1.0).margin(1e-6));

  const Cut cut = make_feasibility_cut(inst, feas);
  CHECK(cut.generator_value == Approx(feas.objective).margin(1e-6));
  CHECK(cut.value(e) > 0.0);

  // schedules that drop user 0 must survive the cut
  const std::vector<int> good{0, 1};
  const auto feas_good = solve_feasibility(inst, good);
  if (feas_good.objective <= 1e-7) CHECK(cut.value(good) <= 1e-6 * (1.0 + std::abs(cut.constant)));
}

TEST_CASE("optimality cut equals the primal objective at its generator") {
  auto setup = instances::desk_instance(6, 2, 23, 1, 0.6);
  const auto& inst = setup.instance;
  for (const auto& e : {std::vector<int>{1, 0}, std::vector<int>{1, 1}}) {
    const auto feas = solve_feasibility(inst, e);
    REQUIRE(feas.ok);
    if (feas.objective > 1e-7) continue;
    const auto primal = solve_primal(inst, e);
    REQUIRE(primal.ok);
    const Cut cut = make_optimality_cut(inst, primal);
    CHECK(cut.generator_value == Approx(primal.objective).margin(1e-6));
  }
}

TEST_CASE("relaxed master enumeration") {
  // no cuts: the service floor picks the all-ones schedule at the mu floor
  const auto m0 = solve_relaxed_master({}, 3, 3);
  REQUIRE(m0.feasible);
  CHECK(m0.schedule == std::vector<int>{1, 1, 1});
  CHECK(m0.mu == 0.0);

  // one optimality cut: mu equals the cut value at the minimizer
  Cut c1;
  c1.kind = Cut::Kind::optimality;
  c1.coeff = VecR(3);
  c1.coeff << 1.0, 2.0, 4.0;
  c1.constant = 0.5;
  const auto m1 = solve_relaxed_master({c1}, 1, 3);
  REQUIRE(m1.feasible);
  CHECK(m1.schedule == std::vector<int>{1, 0, 0});
  CHECK(m1.mu == Approx(1.5));

  // random cut sets match a brute-force re-evaluation
  Rng rng(77);
  for (int t = 0; t < 20; ++t) {
    std::vector<Cut> cuts;
    const int nc = 1 + static_cast<int>(rng.uniform() * 4);
    for (int i = 0; i < nc; ++i) {
      Cut c;
      c.kind = rng.uniform() < 0.4 ? Cut::Kind::feasibility : Cut::Kind::optimality;
      c.coeff = VecR(4);
      for (int k = 0; k < 4; ++k) c.coeff[k] = rng.uniform(-2.0, 2.0);
      c.constant = rng.uniform(-2.0, 2.0);
      cuts.push_back(c);
    }
    const int gamma1 = static_cast<int>(rng.uniform() * 4);
    const auto got = solve_relaxed_master(cuts, gamma1, 4);

    bool any = false;
    double best = 0.0;
    std::vector<int> beste;
    for (int mask = 0; mask < 16; ++mask) {
      std::vector<int> e(4);
      int cnt = 0;
      for (int k = 0; k < 4; ++k) {
        e[k] = (mask >> k) & 1;
        cnt += e[k];
      }
      if (cnt < gamma1) continue;
      bool ok = true;
      double mu = 0.0;
      for (const auto& c : cuts) {
        const double v = c.value(e);
        if (c.kind == Cut::Kind::feasibility) {
          ok = ok && v <= 1e-6 * (1.0 + std::abs(c.constant) + c.coeff.cwiseAbs().sum());
        } else {
          mu = std::max(mu, v);
        }
      }
      if (!ok) continue;
      if (!any || mu < best - 1e-12 ||
          (std::abs(mu - best) <= 1e-12 && std::lexicographical_compare(e.begin(), e.end(), beste.begin(), beste.end()))) {
        any = true;
        best = mu;
        beste = e;
      }
    }
    CHECK(got.feasible == any);
    if (any) {
      CHECK(got.mu == Approx(best).margin(1e-9));
      CHECK(got.schedule == beste);
    }
  }
}

TEST_CASE("gbd matches enumeration on small instances") {
  for (std::uint64_t seed : {31u, 37u, 41u}) {
    auto setup = instances::desk_instance(6, 2, seed, 1, seed % 2 ? 0.25 : 0.75);
    const auto& inst = setup.instance;
    const auto truth = enumerate_optimal(inst);
    const auto got = gbd_solve(inst, 1e-5);

    REQUIRE(got.design.status != DesignStatus::numerical_failure);
    if (truth.design.status == DesignStatus::infeasible) {
      CHECK(got.design.status == DesignStatus::infeasible);
      continue;
    }
    REQUIRE(got.design.status == DesignStatus::converged);
    CHECK(got.design.objective ==
          Approx(truth.design.objective).epsilon(1e-4).margin(1e-7));
    CHECK(got.design.schedule == truth.design.schedule);
    CHECK(got.design.ubd - got.design.lbd <= 1e-4 * (1.0 + std::abs(got.design.ubd)));

    // monotone bounds along the trace
    double ubd_prev = std::numeric_limits<double>::infinity(), lbd_prev = 0.0;
    for (const auto& it : got.trace) {
      CHECK(it.ubd <= ubd_prev + 1e-9);
      CHECK(it.lbd >= lbd_prev - 1e-9);
      ubd_prev = it.ubd;
      lbd_prev = it.lbd;
    }
  }
}

TEST_CASE("degenerate service floor with a slack budget serves nobody") {
  auto setup = instances::desk_instance(6, 2, 43, 0, 1.5, 1.5);
  const auto got = gbd_solve(setup.instance, 1e-5);
  REQUIRE(got.design.status == DesignStatus::converged);
  CHECK(got.design.schedule == std::vector<int>{0, 0});
  CHECK(got.design.objective < 1e-4);
}

TEST_CASE("extracted design meets rates and stays within the SDR matrices") {
  auto setup = instances::desk_instance(6, 2, 47, 2, 0.6);
  const auto& inst = setup.instance;
  const auto got = gbd_solve(inst, 1e-5);
  if (got.design.status != DesignStatus::converged) return;  // instance happened infeasible

  const auto dp = got.design.point();
  for (int k = 0; k < 2; ++k) {
    if (!got.design.schedule[k]) continue;
    const double rate = channel::achievable_rate(k, dp, inst.channels, inst.noise_user[k]);
    const double need = std::log2(1.0 + inst.rate_lin_info[k]);
    CHECK(rate >= need - 1e-6);
    CHECK(!got.design.rank_one_fallback);
  }
}
