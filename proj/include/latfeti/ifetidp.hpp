#pragma once

// Inexact FETI-DP: flexible GMRES on the saddle system [[K, Bᵀ], [B, 0]] with a block
// preconditioner whose local, coarse and interface solves use the reduced cell operators.

#include <memory>
#include <string>
#include <vector>

#include "latfeti/rom.hpp"

namespace latfeti {

class InexactFetiDP {
 public:
  InexactFetiDP(const DDProblem& pb, const SolverOptions& opts) : pb_(pb), opts_(opts) {
    opts_.validate();
    rom_ = std::make_unique<RomModel>(pb, opts_.tol_rb);
  }

  const RomModel& rom() const { return *rom_; }

  //! Galerkin projection of K_rr^(s)⁻¹ v on span{K_rr^(σ_k)⁻¹ v}.
  Vector rom_local_solve(Index s, const Vector& v) const {
    const auto& po = rom_->principal();
    const int slot = rom_->principal_slot(s);
    if (slot >= 0) return po.ops[slot].factor_rr.solve(v);
    if (v.squaredNorm() == 0.0) return Vector::Zero(v.size());
    Matrix r(v.size(), po.size());
    for (int k = 0; k < po.size(); ++k) r.col(k) = po.ops[k].factor_rr.solve(v);
    const Matrix kr = pb_.apply_remainder(s, r);
    const Vector c = solve_gram(r.transpose() * kr, Matrix(r.transpose() * v));
    return r * c;
  }

  Vector apply_K_rom(const Vector& v) const {
    return interface::apply_K_inverse(pb_.partition(), view(), rom_->coarse(),
                                      [&](Index s, const Vector& x) { return rom_local_solve(s, x); }, v);
  }
  Vector apply_F_hat(const Vector& mu) const {
    return interface::apply_dual_schur(pb_.partition(), pb_.jump(), view(), rom_->coarse(), mu);
  }
  Vector apply_MD_hat(const Vector& r) const {
    return interface::apply_dirichlet_preconditioner(pb_.jump(), pb_.weights(), view(), r);
  }
  Vector apply_U_hat(const Vector& v) const {
    return interface::apply_U(pb_.partition(), pb_.jump(), view(), rom_->coarse(), v);
  }
  Vector apply_Ut_hat(const Vector& y) const {
    return interface::apply_Ut(pb_.partition(), pb_.jump(), view(), rom_->coarse(), y);
  }

  //! Block preconditioner: w̄ = w − Ûv, y = −F̂⁻¹w̄ (inner PCG), x = K̊⁻¹v − Ûᵀy.
  Vector apply_preconditioner(const Vector& vw) const {
    const Index nu = pb_.n_U();
    const Vector v = vw.head(nu), w = vw.tail(pb_.n_L());
    const Vector wbar = w - apply_U_hat(v);
    const Vector y = -solve_interface(wbar);
    Vector out(vw.size());
    out.head(nu) = apply_K_rom(v) - apply_Ut_hat(y);
    out.tail(pb_.n_L()) = y;
    return out;
  }

  //! Interface solves performed so far (iterations per call) and fallback counts.
  const std::vector<int>& inner_iterations() const { return inner_its_; }
  int inner_cap_hits() const { return cap_hits_; }
  int negative_curvature_fallbacks() const { return fallbacks_; }

  DDSolution solve() const {
    inner_its_.clear();
    cap_hits_ = fallbacks_ = 0;
    Stopwatch clock;
    DDSolution sol;
    auto& rep = sol.report;
    rep.mode = "rom-ifetidp";
    const Index nu = pb_.n_U(), nl = pb_.n_L();
    Vector rhs(nu + nl);
    rhs << pb_.f(), pb_.d();
    KrylovOptions ko;
    ko.tol = opts_.tol_gmres;
    ko.max_it = opts_.max_outer;
    const auto res = fgmres([&](const Vector& x) { return pb_.apply_saddle(x); },
                            [&](const Vector& r) { return apply_preconditioner(r); }, rhs, ko);
    sol.u = res.x.head(nu);
    sol.lambda = res.x.tail(nl);
    rep.time_iterate = clock.seconds();

    rep.outer_iterations = res.stats.iterations;
    rep.residual_history = res.stats.residual_history;
    rep.converged = res.stats.converged;
    rep.inner_iterations_per_call = inner_its_;
    rep.inner_cap_hits = cap_hits_;
    rep.negative_curvature_fallbacks = fallbacks_;
    rep.local_factorizations = rom_->n_rb();
    rep.coarse_factorizations = 1;
    rep.peak_held_factorizations = rom_->n_rb();
    rep.peak_local_factor_bytes = rom_->principal().factor_bytes();
    rep.n_rb = rom_->n_rb();
    rep.greedy_residual = rom_->greedy().residual;
    rep.principal_cells = rom_->greedy().sigma;
    rep.time_setup = pb_.setup_seconds();
    rep.time_greedy = rom_->greedy_seconds();
    rep.time_principal_ops = rom_->principal_seconds();
    rep.warnings = rom_->warnings();
    if (cap_hits_) rep.warnings.push_back(std::to_string(cap_hits_) + " interface solves stopped at max_inner");
    if (fallbacks_)
      rep.warnings.push_back(std::to_string(fallbacks_) + " interface solves switched to GMRES (negative curvature)");
    std::tie(rep.final_residual, rep.constraint_residual) = pb_.saddle_residuals(sol.u, sol.lambda);
    return sol;
  }

 private:
  struct View {
    const RomModel* rom;
    const DualPrimalOps& operator()(Index s) const { return rom->ops(s); }
  };
  View view() const { return View{rom_.get()}; }

  // F̂⁻¹ w by PCG with M̂_D⁻¹; GMRES when F̂ shows negative curvature. Never throws on the cap.
  Vector solve_interface(const Vector& w) const {
    KrylovOptions ko;
    ko.tol = opts_.tol_cg;
    ko.max_it = opts_.max_inner;
    ko.metric = ResidualMetric::PreconditionedRelative;
    ko.throw_on_max = false;
    ko.true_residual = false;
    const LinearOperator f = [&](const Vector& x) { return apply_F_hat(x); };
    const LinearOperator m = [&](const Vector& x) { return apply_MD_hat(x); };
    KrylovResult res = pcg(f, m, w, ko);
    int its = res.stats.iterations;
    if (res.stats.negative_curvature) {
      ++fallbacks_;
      ko.metric = ResidualMetric::Unpreconditioned;
      try {
        res = gmres(f, m, w, ko);
      } catch (const Breakdown&) {
      }
      its += res.stats.iterations;
    }
    if (!res.stats.converged) ++cap_hits_;
    inner_its_.push_back(its);
    return res.x;
  }

  const DDProblem& pb_;
  SolverOptions opts_;
  std::unique_ptr<RomModel> rom_;
  mutable std::vector<int> inner_its_;
  mutable int cap_hits_ = 0, fallbacks_ = 0;
};

inline DDSolution solve_ifetidp(const DDProblem& pb, const SolverOptions& opts = {}) {
  return InexactFetiDP(pb, opts).solve();
}

}  // namespace latfeti
