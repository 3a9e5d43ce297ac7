#pragma once

#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "nfsec/linalg.hpp"

namespace nfsec::conic {

enum class SolveStatus { optimal, infeasible_detected, not_converged };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible_detected: return "infeasible_detected";
    case SolveStatus::not_converged: return "not_converged";
  }
  return "?";
}

/// Real-to-real embedding of a Hermitian matrix: [[Re H, -Im H], [Im H, Re H]].
/// PSD-ness is preserved both ways and the spectrum of H appears with doubled
/// multiplicity.
inline MatR embed_hermitian(const MatC& h) {
  if (h.rows() != h.cols()) throw std::invalid_argument("embed_hermitian: matrix must be square");
  const Eigen::Index m = h.rows();
  MatR e(2 * m, 2 * m);
  e.topLeftCorner(m, m) = h.real();
  e.bottomRightCorner(m, m) = h.real();
  e.topRightCorner(m, m) = -h.imag();
  e.bottomLeftCorner(m, m) = h.imag();
  return e;
}

struct LinTerm {
  int param = 0;
  double coeff = 0.0;
};

/// Linear expression over the flattened real parameter vector.
struct LinExpr {
  std::vector<LinTerm> terms;
  double constant = 0.0;

  LinExpr& add(int param, double coeff) {
    if (coeff != 0.0) terms.push_back({param, coeff});
    return *this;
  }
  LinExpr& operator+=(const LinExpr& o) {
    terms.insert(terms.end(), o.terms.begin(), o.terms.end());
    constant += o.constant;
    return *this;
  }
  LinExpr& operator*=(double s) {
    for (auto& t : terms) t.coeff *= s;
    constant *= s;
    return *this;
  }
  friend LinExpr operator*(double s, LinExpr e) {
    e *= s;
    return e;
  }
  friend LinExpr operator+(LinExpr a, const LinExpr& b) {
    a += b;
    return a;
  }
  friend LinExpr operator-(LinExpr a, const LinExpr& b) {
    LinExpr nb = b;
    nb *= -1.0;
    a += nb;
    return a;
  }
};

/// Affine Hermitian-matrix map F0 + sum_d x_d F_d used as an LMI "... >= 0".
class AffineMatrix {
 public:
  AffineMatrix() = default;
  explicit AffineMatrix(int dim) : dim_(dim), constant_(MatC::Zero(dim, dim)) {}

  int dim() const { return dim_; }
  const MatC& constant() const { return constant_; }
  const std::vector<std::pair<int, MatC>>& coeffs() const { return coeffs_; }

  void add_constant(const MatC& m) {
    check(m);
    constant_ += m;
  }

  /// Adds expr * M (M Hermitian) to the map.
  void add_expr(const LinExpr& expr, const MatC& m) {
    check(m);
    if (expr.constant != 0.0) constant_ += expr.constant * m;
    for (const auto& t : expr.terms) add_coeff(t.param, t.coeff * m);
  }

  void add_coeff(int param, const MatC& m) {
    check(m);
    for (auto& [p, c] : coeffs_) {
      if (p == param) {
        c += m;
        return;
      }
    }
    coeffs_.emplace_back(param, m);
  }

 private:
  void check(const MatC& m) const {
    if (m.rows() != dim_ || m.cols() != dim_) throw std::invalid_argument("AffineMatrix: dimension mismatch");
    if (!is_hermitian(m, 1e-12)) throw std::invalid_argument("AffineMatrix: coefficient is not Hermitian");
  }

  int dim_ = 0;
  MatC constant_;
  std::vector<std::pair<int, MatC>> coeffs_;
};

/// Standard-form conic problem over scalar variables (optionally nonnegative)
/// and Hermitian matrix variables, with linear equalities, linear
/// inequalities (expr >= rhs), and LMI constraints (affine map PSD).
class ConicProgram {
 public:
  struct ScalarVar {
    std::string name;
    bool nonneg = false;
    int param = 0;
  };
  struct MatrixVar {
    std::string name;
    int dim = 0;
    int param0 = 0;
  };
  struct LinearConstraint {
    std::vector<LinTerm> terms;
    double rhs = 0.0;
  };

  int add_scalar(std::string name, bool nonneg = false) {
    ScalarVar v{std::move(name), nonneg, num_params_};
    scalars_.push_back(std::move(v));
    ++num_params_;
    var_kinds_.push_back({false, static_cast<int>(scalars_.size()) - 1});
    return static_cast<int>(var_kinds_.size()) - 1;
  }

  int add_hermitian(std::string name, int dim) {
    if (dim < 1) throw std::invalid_argument("add_hermitian: dim must be >= 1");
    MatrixVar v{std::move(name), dim, num_params_};
    matrices_.push_back(std::move(v));
    num_params_ += dim * dim;
    var_kinds_.push_back({true, static_cast<int>(matrices_.size()) - 1});
    return static_cast<int>(var_kinds_.size()) - 1;
  }

  int params() const { return num_params_; }
  int num_vars() const { return static_cast<int>(var_kinds_.size()); }
  bool is_matrix_var(int var) const { return var_kinds_.at(var).is_matrix; }

  const ScalarVar& scalar_info(int var) const { return scalars_[index_of(var, false)]; }
  const MatrixVar& matrix_info(int var) const { return matrices_[index_of(var, true)]; }

  // -- parameter addressing -------------------------------------------------
  int scalar_param(int var) const { return scalar_info(var).param; }

  int diag_param(int var, int i) const {
    const auto& m = matrix_info(var);
    if (i < 0 || i >= m.dim) throw std::out_of_range("diag_param");
    return m.param0 + i;
  }

  /// Off-diagonal entry (i, j), i < j: real part and imaginary part params.
  std::pair<int, int> offdiag_params(int var, int i, int j) const {
    const auto& m = matrix_info(var);
    if (!(0 <= i && i < j && j < m.dim)) throw std::out_of_range("offdiag_params");
    // pairs ordered (0,1), (0,2), ..., (0,m-1), (1,2), ...
    const int pair_index = i * m.dim - i * (i + 1) / 2 + (j - i - 1);
    const int base = m.param0 + m.dim + 2 * pair_index;
    return {base, base + 1};
  }

  /// Hermitian basis matrix of one local parameter (local in [0, dim^2)).
  MatC basis_matrix(int var, int local) const {
    const auto& m = matrix_info(var);
    MatC e = MatC::Zero(m.dim, m.dim);
    if (local < m.dim) {
      e(local, local) = 1.0;
      return e;
    }
    const int pair_index = (local - m.dim) / 2;
    const bool imag_part = ((local - m.dim) % 2) != 0;
    int i = 0, rem = pair_index;
    while (rem >= m.dim - 1 - i) {
      rem -= m.dim - 1 - i;
      ++i;
    }
    const int j = i + 1 + rem;
    if (imag_part) {
      e(i, j) = cplx(0.0, 1.0);
      e(j, i) = cplx(0.0, -1.0);
    } else {
      e(i, j) = 1.0;
      e(j, i) = 1.0;
    }
    return e;
  }

  /// Reconstructs a Hermitian matrix variable from a parameter vector.
  MatC matrix_of(int var, const VecR& x) const {
    const auto& m = matrix_info(var);
    MatC w = MatC::Zero(m.dim, m.dim);
    for (int i = 0; i < m.dim; ++i) w(i, i) = x[m.param0 + i];
    for (int i = 0; i < m.dim; ++i) {
      for (int j = i + 1; j < m.dim; ++j) {
        const auto [pr, pi] = offdiag_params(var, i, j);
        w(i, j) = cplx(x[pr], x[pi]);
        w(j, i) = std::conj(w(i, j));
      }
    }
    return w;
  }

  // -- expression builders ----------------------------------------------------
  LinExpr scalar(int var, double coeff = 1.0) const {
    LinExpr e;
    e.add(scalar_param(var), coeff);
    return e;
  }

  LinExpr trace(int var, double coeff = 1.0) const {
    LinExpr e;
    const auto& m = matrix_info(var);
    for (int i = 0; i < m.dim; ++i) e.add(m.param0 + i, coeff);
    return e;
  }

  /// coeff * Tr(A W) for Hermitian A.
  LinExpr inner(int var, const MatC& a, double coeff = 1.0) const {
    const auto& m = matrix_info(var);
    if (a.rows() != m.dim || a.cols() != m.dim) throw std::invalid_argument("inner: dimension mismatch");
    LinExpr e;
    for (int i = 0; i < m.dim; ++i) e.add(m.param0 + i, coeff * a(i, i).real());
    for (int i = 0; i < m.dim; ++i) {
      for (int j = i + 1; j < m.dim; ++j) {
        const auto [pr, pi] = offdiag_params(var, i, j);
        e.add(pr, coeff * 2.0 * a(i, j).real());
        e.add(pi, coeff * 2.0 * a(i, j).imag());
      }
    }
    return e;
  }

  /// coeff * a^H W a.
  LinExpr quad(int var, const VecC& a, double coeff = 1.0) const { return inner(var, MatC(a * a.adjoint()), coeff); }

  /// Adds scale * W to an affine map (block must match the variable size).
  void affine_add_matrix(AffineMatrix& am, int var, double scale) const {
    const auto& m = matrix_info(var);
    if (am.dim() != m.dim) throw std::invalid_argument("affine_add_matrix: dimension mismatch");
    for (int local = 0; local < m.dim * m.dim; ++local) {
      am.add_coeff(m.param0 + local, scale * basis_matrix(var, local));
    }
  }

  /// Adds scale * U^H W U to an affine map; U maps C^{dim(var)} -> C^{am.dim()}
  /// columns, i.e. U has shape dim(var) x am.dim().
  void affine_add_congruence(AffineMatrix& am, int var, const MatC& u, double scale) const {
    const auto& m = matrix_info(var);
    if (u.rows() != m.dim || u.cols() != am.dim()) throw std::invalid_argument("affine_add_congruence: U shape");
    for (int i = 0; i < m.dim; ++i) {
      const MatC ri = u.row(i);
      am.add_coeff(m.param0 + i, scale * (ri.adjoint() * ri));
    }
    for (int i = 0; i < m.dim; ++i) {
      const MatC ri = u.row(i);
      for (int j = i + 1; j < m.dim; ++j) {
        const MatC rj = u.row(j);
        const auto [pr, pi] = offdiag_params(var, i, j);
        const MatC cross = ri.adjoint() * rj;
        am.add_coeff(pr, scale * (cross + cross.adjoint()));
        am.add_coeff(pi, scale * (cplx(0, 1) * cross - cplx(0, 1) * cross.adjoint()));
      }
    }
  }

  // -- constraints ------------------------------------------------------------
  void set_objective(const LinExpr& e) {
    objective_ = e;
  }

  const LinExpr& objective() const { return objective_; }

  int add_eq(const LinExpr& e, double rhs) {
    eqs_.push_back({e.terms, rhs - e.constant});
    return static_cast<int>(eqs_.size()) - 1;
  }

  int add_ge(const LinExpr& e, double rhs) {
    ges_.push_back({e.terms, rhs - e.constant});
    return static_cast<int>(ges_.size()) - 1;
  }

  int add_le(const LinExpr& e, double rhs) {
    LinExpr neg = e;
    neg *= -1.0;
    return add_ge(neg, -rhs);
  }

  int add_lmi(AffineMatrix am) {
    if (am.dim() < 1) throw std::invalid_argument("add_lmi: empty block");
    lmis_.push_back(std::move(am));
    return static_cast<int>(lmis_.size()) - 1;
  }

  /// Shorthand for the PSD constraint W >= 0 on a matrix variable.
  int add_psd(int var) {
    AffineMatrix am(matrix_info(var).dim);
    affine_add_matrix(am, var, 1.0);
    return add_lmi(std::move(am));
  }

  const std::vector<ScalarVar>& scalars() const { return scalars_; }
  const std::vector<MatrixVar>& matrices() const { return matrices_; }
  const std::vector<LinearConstraint>& equalities() const { return eqs_; }
  const std::vector<LinearConstraint>& inequalities() const { return ges_; }
  const std::vector<AffineMatrix>& lmis() const { return lmis_; }

 private:
  struct VarKind {
    bool is_matrix;
    int index;
  };

  int index_of(int var, bool matrix) const {
    const auto& k = var_kinds_.at(var);
    if (k.is_matrix != matrix) throw std::invalid_argument("variable kind mismatch");
    return k.index;
  }

  int num_params_ = 0;
  std::vector<ScalarVar> scalars_;
  std::vector<MatrixVar> matrices_;
  std::vector<VarKind> var_kinds_;
  std::vector<LinearConstraint> eqs_, ges_;
  std::vector<AffineMatrix> lmis_;
  LinExpr objective_;
};

struct ConicSolution {
  SolveStatus status = SolveStatus::not_converged;
  double objective = 0.0;
  double dual_objective = 0.0;
  double rel_gap = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  int iterations = 0;
  VecR x;
  VecR eq_dual;
  VecR ge_dual;
  std::vector<MatC> lmi_dual;  // Hermitian multiplier per LMI

  double scalar_value(const ConicProgram& p, int var) const { return x[p.scalar_param(var)]; }
  MatC matrix_value(const ConicProgram& p, int var) const { return p.matrix_of(var, x); }
};

inline double eval(const LinExpr& e, const VecR& x) {
  double v = e.constant;
  for (const auto& t : e.terms) v += t.coeff * x[t.param];
  return v;
}

inline double eval_row(const ConicProgram::LinearConstraint& r, const VecR& x) {
  double v = 0.0;
  for (const auto& t : r.terms) v += t.coeff * x[t.param];
  return v;
}

inline MatC eval_lmi(const AffineMatrix& am, const VecR& x) {
  MatC s = am.constant();
  for (const auto& [param, coef] : am.coeffs()) s += x[param] * coef;
  return s;
}

/// Primal-side violations of a parameter vector (no duals needed); used both
/// by residuals() and for checking hand-constructed feasible points.
struct PrimalViolations {
  double max_eq = 0.0;        // |a x - b|
  double max_ge = 0.0;        // max(0, b - a x)
  double max_lmi = 0.0;       // max(0, -lambda_min)
  double max_nonneg = 0.0;    // max(0, -x_i)
  double max() const { return std::max(std::max(max_eq, max_ge), std::max(max_lmi, max_nonneg)); }
};

inline PrimalViolations primal_violations(const ConicProgram& p, const VecR& x) {
  PrimalViolations out;
  for (const auto& r : p.equalities()) out.max_eq = std::max(out.max_eq, std::abs(eval_row(r, x) - r.rhs));
  for (const auto& r : p.inequalities()) out.max_ge = std::max(out.max_ge, r.rhs - eval_row(r, x));
  out.max_ge = std::max(out.max_ge, 0.0);
  for (const auto& s : p.scalars()) {
    if (s.nonneg) out.max_nonneg = std::max(out.max_nonneg, -x[s.param]);
  }
  out.max_nonneg = std::max(out.max_nonneg, 0.0);
  for (const auto& am : p.lmis()) {
    out.max_lmi = std::max(out.max_lmi, -min_eigenvalue(eval_lmi(am, x)));
  }
  out.max_lmi = std::max(out.max_lmi, 0.0);
  return out;
}

/// Full KKT recomputation from scratch at the complex level: primal
/// feasibility, dual feasibility (stationarity and cone membership), and
/// complementarity. Independent of the solver's internal scaled bookkeeping.
struct ResidualReport {
  PrimalViolations primal;
  double stationarity = 0.0;       // inf-norm of c - A^T nu - A^T lambda - sum F*(Y)
  double dual_cone = 0.0;          // most negative multiplier / eigenvalue
  double complementarity = 0.0;    // max |lambda_i g_i|, |<Y, S>|
  double max() const {
    return std::max(std::max(primal.max(), stationarity), std::max(dual_cone, complementarity));
  }
};

inline ResidualReport residuals(const ConicProgram& p, const ConicSolution& sol) {
  ResidualReport rep;
  rep.primal = primal_violations(p, sol.x);

  VecR grad = VecR::Zero(p.params());
  for (const auto& t : p.objective().terms) grad[t.param] += t.coeff;
  for (std::size_t i = 0; i < p.equalities().size(); ++i) {
    for (const auto& t : p.equalities()[i].terms) grad[t.param] -= sol.eq_dual[i] * t.coeff;
  }
  for (std::size_t i = 0; i < p.inequalities().size(); ++i) {
    const double lam = sol.ge_dual[i];
    rep.dual_cone = std::max(rep.dual_cone, -lam);
    const double slack = eval_row(p.inequalities()[i], sol.x) - p.inequalities()[i].rhs;
    rep.complementarity = std::max(rep.complementarity, std::abs(lam * slack));
    for (const auto& t : p.inequalities()[i].terms) grad[t.param] -= lam * t.coeff;
  }
  // nonnegative scalars carry an implicit multiplier equal to the remaining
  // gradient; fold their complementarity in
  for (std::size_t j = 0; j < p.lmis().size(); ++j) {
    const auto& am = p.lmis()[j];
    const MatC& y = sol.lmi_dual[j];
    rep.dual_cone = std::max(rep.dual_cone, -min_eigenvalue(y));
    rep.complementarity = std::max(rep.complementarity, std::abs(trace_inner(y, eval_lmi(am, sol.x))));
    for (const auto& [param, coef] : am.coeffs()) grad[param] -= trace_inner(coef, y);
  }
  for (const auto& s : p.scalars()) {
    if (s.nonneg) {
      // multiplier of x >= 0 is whatever gradient remains; it must be >= 0
      rep.dual_cone = std::max(rep.dual_cone, -grad[s.param]);
      rep.complementarity = std::max(rep.complementarity, std::abs(grad[s.param] * sol.x[s.param]));
      grad[s.param] = 0.0;
    }
  }
  rep.stationarity = grad.size() ? grad.cwiseAbs().maxCoeff() : 0.0;
  return rep;
}

/// Rank-one beamformer recovery w = (h^H W h)^{-1/2} W h; preserves the
/// desired-signal power h^H w w^H h = h^H W h exactly and satisfies
/// w w^H <= W in the PSD order.
inline VecC extract_rank_one(const MatC& w, const VecC& h, double tol = 1e-9) {
  if (h.size() != w.rows() || w.rows() != w.cols()) throw std::invalid_argument("extract_rank_one: shape mismatch");
  if (h.norm() == 0.0) throw std::invalid_argument("extract_rank_one: zero channel");
  const double q = quad_form(h, w, h);
  const double scale = std::max(1.0, std::abs(w.trace().real()) * h.squaredNorm());
  if (q <= tol * scale) throw std::domain_error("extract_rank_one: h^H W h ~ 0 (unserved or degenerate user)");
  return (w * h) / std::sqrt(q);
}

/// Plain-text sparse triplet dump. One line per nonzero:
///   <constraint> <variable-param> <row> <col> <real> <imag>
/// Constraint ids: "obj", "eq<i>", "ge<i>", "lmi<i>"; param -1 denotes the
/// constant part (rhs for rows, F0 entries for LMIs).
inline void dump_triplets(const ConicProgram& p, std::ostream& os) {
  for (const auto& t : p.objective().terms) os << "obj " << t.param << " 0 0 " << t.coeff << " 0\n";
  for (std::size_t i = 0; i < p.equalities().size(); ++i) {
    for (const auto& t : p.equalities()[i].terms) os << "eq" << i << ' ' << t.param << " 0 0 " << t.coeff << " 0\n";
    os << "eq" << i << " -1 0 0 " << p.equalities()[i].rhs << " 0\n";
  }
  for (std::size_t i = 0; i < p.inequalities().size(); ++i) {
    for (const auto& t : p.inequalities()[i].terms) os << "ge" << i << ' ' << t.param << " 0 0 " << t.coeff << " 0\n";
    os << "ge" << i << " -1 0 0 " << p.inequalities()[i].rhs << " 0\n";
  }
  for (std::size_t i = 0; i < p.lmis().size(); ++i) {
    const auto& am = p.lmis()[i];
    auto emit = [&](int param, const MatC& m) {
      for (int r = 0; r < am.dim(); ++r) {
        for (int c = 0; c < am.dim(); ++c) {
          if (m(r, c) != cplx(0.0, 0.0)) {
            os << "lmi" << i << ' ' << param << ' ' << r << ' ' << c << ' ' << m(r, c).real() << ' '
               << m(r, c).imag() << '\n';
          }
        }
      }
    };
    emit(-1, am.constant());
    for (const auto& [param, coef] : am.coeffs()) emit(param, coef);
  }
}

struct SolverOptions {
  double tol = 1e-7;
  int max_iters = 200;
  double step_fraction = 0.98;
  bool verbose = false;
};

ConicSolution solve(const ConicProgram& p, const SolverOptions& opts = {});

}  // namespace nfsec::conic

#include "nfsec/conic_solver.hpp"
