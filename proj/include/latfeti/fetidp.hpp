#pragma once

// Exact FETI-DP: local dual-primal operators, coarse primal Schur complement, the interface
// operator F = B K⁻¹ Bᵀ, the Dirichlet preconditioner and full-solution recovery.

#include <tuple>
#include <vector>

#include "latfeti/problem.hpp"

namespace latfeti {

//! The five dense per-cell operators shared by the exact and the reduced solvers.
struct DualPrimalOps {
  Matrix U_rp;  // K_rr⁻¹ K_rp
  Matrix S_pp;  // K_pp − K_pr K_rr⁻¹ K_rp
  Matrix U_rd;  // K_rr⁻¹ T_rd
  Matrix F_dd;  // dual rows of U_rd
  Matrix S_dd;  // F_dd⁻¹

  std::size_t dense_bytes() const {
    return sizeof(double) *
           std::size_t(U_rp.size() + S_pp.size() + U_rd.size() + F_dd.size() + S_dd.size());
  }
};

struct LocalDDOps : DualPrimalOps {
  Index cell = -1;
  CholeskyFactor factor_rr;
};

//! K^(s) in (i, d, p) ordering split into remainder and primal blocks.
struct RpBlocks {
  SparseSymMatrix rr;
  Matrix rp, pp;
};

inline RpBlocks split_rp(const SparseSymMatrix& k, const DofPartition& dp) {
  const Index nr = dp.n_r(), np = dp.n_p();
  const SparseMatrix full = k.full();
  RpBlocks b;
  b.rr = SparseSymMatrix::from_full(full.topLeftCorner(nr, nr));
  b.rp = Matrix(full.topRightCorner(nr, np));
  b.pp = Matrix(full.bottomRightCorner(np, np));
  return b;
}

//! All operators from a single factorization of K_rr^(s).
inline LocalDDOps build_local_dd_ops(const SparseSymMatrix& k_rp_ordered, const DofPartition& dp, Index cell = -1) {
  const Index ni = dp.n_i(), nd = dp.n_d(), nr = dp.n_r();
  RpBlocks b = split_rp(k_rp_ordered, dp);
  LocalDDOps ops;
  ops.cell = cell;
  ops.factor_rr = CholeskyFactor(b.rr);
  ops.U_rp = ops.factor_rr.solve(b.rp);
  ops.S_pp = sym(b.pp - b.rp.transpose() * ops.U_rp);
  Matrix t_rd = Matrix::Zero(nr, nd);
  t_rd.bottomRows(nd).setIdentity();
  ops.U_rd = ops.factor_rr.solve(t_rd);
  ops.F_dd = sym(ops.U_rd.middleRows(ni, nd));
  ops.S_dd = nd ? sym(CholeskyFactor(ops.F_dd).solve(Matrix(Matrix::Identity(nd, nd)))) : Matrix(0, 0);
  return ops;
}

struct CoarseOp {
  SparseSymMatrix S_PP;
  CholeskyFactor factor;
};

//! S_PP = Σ_s A_p^(s) S_pp^(s) A_p^(s)ᵀ; `get(s)` returns the cell operators.
template <class Get>
CoarseOp assemble_coarse(const DofPartition& dp, Get&& get) {
  std::vector<Triplet> trip;
  for (Index s = 0; s < dp.n_cells(); ++s) {
    const Matrix& spp = get(s).S_pp;
    for (Index k = 0; k < dp.n_p(); ++k) {
      const Index gk = dp.primal_index(s, k);
      if (gk < 0) continue;
      for (Index l = 0; l < dp.n_p(); ++l) {
        const Index gl = dp.primal_index(s, l);
        if (gl >= 0 && gk >= gl) trip.emplace_back(int(gk), int(gl), spp(k, l));
      }
    }
  }
  CoarseOp c;
  c.S_PP = SparseSymMatrix(dp.n_P(), trip);
  c.factor = CholeskyFactor(c.S_PP);
  return c;
}

inline CoarseOp assemble_coarse(const std::vector<LocalDDOps>& locals, const DofPartition& dp) {
  return assemble_coarse(dp, [&](Index s) -> const DualPrimalOps& { return locals[s]; });
}

// Operator products written once for any source of per-cell operators (exact or reduced).
namespace interface {

//! Σ_s A_p U_rpᵀ x_r: primal coupling of a remainder vector.
template <class Get>
Vector primal_coupling(const DofPartition& dp, Get&& get, const Vector& v_r_all) {
  Vector h = Vector::Zero(dp.n_P());
  for (Index s = 0; s < dp.n_cells(); ++s)
    dp.assemble_primal(s, get(s).U_rp.transpose() * v_r_all.segment(s * dp.n_r(), dp.n_r()), h);
  return h;
}

//! F λ = Σ B_d F_dd B_dᵀ λ + B_R U_RP S_PP⁻¹ U_RPᵀ B_Rᵀ λ.
template <class Get>
Vector apply_dual_schur(const DofPartition& dp, const JumpOperator& jo, Get&& get, const CoarseOp& coarse,
                        const Vector& lambda) {
  const Index ni = dp.n_i(), nd = dp.n_d();
  Vector out = Vector::Zero(jo.rows());
  Vector h = Vector::Zero(dp.n_P());
  std::vector<Vector> w(dp.n_cells());
  for (Index s = 0; s < dp.n_cells(); ++s) {
    w[s] = jo.gather(s, lambda);
    const auto& o = get(s);
    jo.scatter_add(s, o.F_dd * w[s], out);
    dp.assemble_primal(s, o.U_rp.middleRows(ni, nd).transpose() * w[s], h);
  }
  const Vector z = coarse.factor.solve(h);
  for (Index s = 0; s < dp.n_cells(); ++s)
    jo.scatter_add(s, get(s).U_rp.middleRows(ni, nd) * dp.restrict_primal(s, z), out);
  return out;
}

//! Σ_s D B_d S_dd B_dᵀ D r.
template <class Get>
Vector apply_dirichlet_preconditioner(const JumpOperator& jo, const ScalingWeights& sw, Get&& get, const Vector& r) {
  Vector out = Vector::Zero(jo.rows());
  for (Index s = 0; s < jo.n_cells(); ++s) {
    const auto& w = sw.of(s);
    jo.scatter_add(s, get(s).S_dd * jo.gather(s, r, &w), out, &w);
  }
  return out;
}

//! B K⁻¹ v through the stored dual solutions (no local solves).
template <class Get>
Vector apply_U(const DofPartition& dp, const JumpOperator& jo, Get&& get, const CoarseOp& coarse, const Vector& v) {
  const Index ni = dp.n_i(), nd = dp.n_d(), nr = dp.n_r();
  const Vector vbar = v.tail(dp.n_P()) - primal_coupling(dp, get, v.head(dp.n_R()));
  const Vector zp = coarse.factor.solve(vbar);
  Vector z = Vector::Zero(jo.rows());
  for (Index s = 0; s < dp.n_cells(); ++s) {
    const auto& o = get(s);
    const Vector zd = o.U_rd.transpose() * v.segment(s * nr, nr) - o.U_rp.middleRows(ni, nd) * dp.restrict_primal(s, zp);
    jo.scatter_add(s, zd, z);
  }
  return z;
}

//! K⁻¹ Bᵀ y, the adjoint of apply_U.
template <class Get>
Vector apply_Ut(const DofPartition& dp, const JumpOperator& jo, Get&& get, const CoarseOp& coarse, const Vector& y) {
  const Index ni = dp.n_i(), nd = dp.n_d(), nr = dp.n_r();
  std::vector<Vector> w(dp.n_cells());
  Vector h = Vector::Zero(dp.n_P());
  for (Index s = 0; s < dp.n_cells(); ++s) {
    w[s] = jo.gather(s, y);
    dp.assemble_primal(s, -(get(s).U_rp.middleRows(ni, nd).transpose() * w[s]), h);
  }
  const Vector zp = coarse.factor.solve(h);
  Vector x(dp.n_U());
  for (Index s = 0; s < dp.n_cells(); ++s) {
    const auto& o = get(s);
    x.segment(s * nr, nr) = o.U_rd * w[s] - o.U_rp * dp.restrict_primal(s, zp);
  }
  x.tail(dp.n_P()) = zp;
  return x;
}

//! Block LDLᵀ solve with K: `local(s, v_r)` realizes K_rr^(s)⁻¹ (exactly or approximately).
template <class Get, class LocalSolve>
Vector apply_K_inverse(const DofPartition& dp, Get&& get, const CoarseOp& coarse, LocalSolve&& local, const Vector& v) {
  const Index nr = dp.n_r();
  const Vector vbar = v.tail(dp.n_P()) - primal_coupling(dp, get, v.head(dp.n_R()));
  const Vector xp = coarse.factor.solve(vbar);
  Vector x(dp.n_U());
  for (Index s = 0; s < dp.n_cells(); ++s)
    x.segment(s * nr, nr) = local(s, Vector(v.segment(s * nr, nr))) - get(s).U_rp * dp.restrict_primal(s, xp);
  x.tail(dp.n_P()) = xp;
  return x;
}

}  // namespace interface

struct DDSolution {
  Vector u, lambda;
  SolveReport report;
};

class FetiDP {
 public:
  explicit FetiDP(const DDProblem& pb) : pb_(pb) {
    Stopwatch clock;
    const auto& dp = pb.partition();
    locals_.reserve(pb.n_cells());
    for (Index s = 0; s < pb.n_cells(); ++s) locals_.push_back(build_local_dd_ops(pb.stiffness_rp(s), dp, s));
    coarse_ = assemble_coarse(locals_, dp);
    build_seconds_ = clock.seconds();
  }

  const LocalDDOps& local(Index s) const { return locals_[s]; }
  const std::vector<LocalDDOps>& locals() const { return locals_; }
  const CoarseOp& coarse() const { return coarse_; }
  double build_seconds() const { return build_seconds_; }

  std::size_t factor_bytes() const {
    std::size_t b = 0;
    for (const auto& l : locals_) b += l.factor_rr.bytes();
    return b;
  }

  Vector apply_F(const Vector& lambda) const {
    return interface::apply_dual_schur(pb_.partition(), pb_.jump(), getter(), coarse_, lambda);
  }
  Vector apply_preconditioner(const Vector& r) const {
    return interface::apply_dirichlet_preconditioner(pb_.jump(), pb_.weights(), getter(), r);
  }
  //! Exact K⁻¹ g through the local factors and the coarse problem.
  Vector solve_K(const Vector& g) const {
    return interface::apply_K_inverse(pb_.partition(), getter(), coarse_,
                                      [&](Index s, const Vector& v) { return locals_[s].factor_rr.solve(v); }, g);
  }
  Vector apply_U(const Vector& v) const {
    return interface::apply_U(pb_.partition(), pb_.jump(), getter(), coarse_, v);
  }
  Vector apply_Ut(const Vector& y) const {
    return interface::apply_Ut(pb_.partition(), pb_.jump(), getter(), coarse_, y);
  }

  //! PCG on F λ = B K⁻¹ f − d with the Dirichlet preconditioner, then u = K⁻¹(f − Bᵀλ).
  DDSolution solve(const SolverOptions& opts = {}) const {
    opts.validate();
    Stopwatch clock;
    DDSolution sol;
    auto& rep = sol.report;
    rep.mode = "fetidp";
    const Vector dbar = apply_U(pb_.f()) - pb_.d();
    KrylovOptions ko;
    ko.tol = opts.tol_cg;
    ko.max_it = opts.max_inner;
    ko.metric = ResidualMetric::PreconditionedRelative;
    const auto res = pcg([&](const Vector& x) { return apply_F(x); },
                         [&](const Vector& r) { return apply_preconditioner(r); }, dbar, ko);
    sol.lambda = res.x;
    sol.u = solve_K(pb_.f() - pb_.apply_Bt(sol.lambda));
    rep.time_iterate = clock.seconds();

    rep.inner_iterations_per_call = {res.stats.iterations};
    rep.residual_history = res.stats.residual_history;
    rep.converged = res.stats.converged;
    rep.local_factorizations = int(locals_.size());
    rep.coarse_factorizations = 1;
    rep.peak_held_factorizations = int(locals_.size());
    rep.peak_local_factor_bytes = factor_bytes();
    rep.time_setup = pb_.setup_seconds();
    rep.time_principal_ops = build_seconds_;
    std::tie(rep.final_residual, rep.constraint_residual) = pb_.saddle_residuals(sol.u, sol.lambda);
    return sol;
  }

 private:
  struct View {
    const std::vector<LocalDDOps>* locals;
    const DualPrimalOps& operator()(Index s) const { return (*locals)[s]; }
  };
  View getter() const { return View{&locals_}; }

  const DDProblem& pb_;
  std::vector<LocalDDOps> locals_;
  CoarseOp coarse_;
  double build_seconds_ = 0.0;
};

inline DDSolution solve_fetidp(const DDProblem& pb, const SolverOptions& opts = {}) {
  return FetiDP(pb).solve(opts);
}

}  // namespace latfeti
