#pragma once

// Reduced model of the cell operators: greedy selection of principal cells on the macro-field
// coefficients, change of basis to principal coordinates, principal dual-primal operators and
// energy-norm projections yielding per-cell reduced operators.

#include <string>
#include <vector>

#include "latfeti/fetidp.hpp"

namespace latfeti {

struct GreedyBasis {
  Matrix Z;                  // orthonormal columns over the flattened coefficient space
  std::vector<Index> sigma;  // principal cells, in selection order
  Matrix beta;               // N_rb × N, column s holds β^(s)
  Vector norms;              // ‖A^(s)‖₂
  std::vector<double> residual_history;  // max_s ‖Δ_i^(s)‖∞, entry 0 before the first step
  double residual = 0.0;

  int size() const { return int(sigma.size()); }
};

inline GreedyBasis greedy_select(const std::vector<PolyCoeffs>& coeffs, double tol_rb) {
  if (coeffs.empty()) throw ValidationError("cells", "no cells");
  if (!(tol_rb > 0.0 && tol_rb < 1.0)) throw ValidationError("solver.tol_rb", "must lie in (0, 1)");
  const Index n_cells = Index(coeffs.size());
  const Index n = Index(coeffs[0].values.size());
  GreedyBasis gb;
  gb.norms.resize(n_cells);
  Matrix delta(n, n_cells);
  for (Index s = 0; s < n_cells; ++s) {
    if (Index(coeffs[s].values.size()) != n) throw DimensionMismatch("greedy: coefficient sizes differ");
    const Vector a = coeffs[s].flattened();
    gb.norms(s) = a.norm();
    if (!(gb.norms(s) > 0.0)) throw ValidationError("material", "cell with vanishing coefficients");
    delta.col(s) = a / gb.norms(s);
  }
  auto worst = [&](Index& arg) {
    double best = -1.0;
    for (Index s = 0; s < n_cells; ++s)
      if (const double v = delta.col(s).lpNorm<Eigen::Infinity>(); v > best) best = v, arg = s;
    return best;
  };
  Index arg = 0;
  double res = worst(arg);
  gb.residual_history.push_back(res);
  std::vector<Vector> zeta;
  std::vector<Vector> betas;
  const Index cap = std::min(n_cells, n);
  while (res >= tol_rb && Index(zeta.size()) < cap) {
    Vector z = delta.col(arg);
    for (const auto& zk : zeta) z -= zk.dot(z) * zk;  // second pass keeps Z orthonormal
    z /= z.norm();
    const Vector b = delta.transpose() * z;
    delta -= z * b.transpose();
    delta.col(arg).setZero();  // exactly representable now; keeps later β^(σ_k) entries at zero
    gb.sigma.push_back(arg);
    zeta.push_back(z);
    betas.push_back(b);
    res = worst(arg);
    gb.residual_history.push_back(res);
  }
  gb.residual = res;
  const Index nrb = Index(zeta.size());
  gb.Z.resize(n, nrb);
  gb.beta.resize(nrb, n_cells);
  for (Index k = 0; k < nrb; ++k) {
    gb.Z.col(k) = zeta[k];
    gb.beta.row(k) = betas[k].transpose();
  }
  return gb;
}

//! Coordinates α^(s) in the principal basis: ‖A^(s)‖ Z β^(s) = [A^(σ_1) … A^(σ_N)] α^(s).
inline Matrix change_basis(const GreedyBasis& gb) {
  const Index nrb = gb.size();
  Matrix p(nrb, nrb);
  for (Index k = 0; k < nrb; ++k) p.col(k) = gb.norms(gb.sigma[k]) * gb.beta.col(gb.sigma[k]);
  const double scale = p.diagonal().cwiseAbs().maxCoeff();
  for (Index k = 0; k < nrb; ++k)
    if (!(std::abs(p(k, k)) > 1e-13 * scale)) throw SingularBasisChange("principal coordinate matrix is singular");
  Matrix rhs = gb.beta;
  for (Index s = 0; s < rhs.cols(); ++s) rhs.col(s) *= gb.norms(s);
  return p.triangularView<Eigen::Upper>().solve(rhs);
}

// ---------------------------------------------------------------------------

enum class GramSolve { Cholesky, Jitter, Truncated };

//! Solves G x = rhs for a symmetric positive semi-definite Gram matrix: Cholesky, then a
//! diagonal shift 1e-12·tr(G)/n, then least squares on the eigenvalues above 1e-12·λ_max.
inline Matrix solve_gram(const Matrix& g, const Matrix& rhs, GramSolve* how = nullptr) {
  const Matrix gs = sym(g);
  try {
    const CholeskyFactor f(gs);
    if (how) *how = GramSolve::Cholesky;
    return f.solve(rhs);
  } catch (const NotPositiveDefinite&) {
  }
  try {
    const double shift = 1e-12 * gs.trace() / double(gs.rows());
    const CholeskyFactor f(Matrix(gs + shift * Matrix::Identity(gs.rows(), gs.rows())));
    if (how) *how = GramSolve::Jitter;
    return f.solve(rhs);
  } catch (const NotPositiveDefinite&) {
  }
  const Eigen::SelfAdjointEigenSolver<Matrix> es(gs);
  const Vector& ev = es.eigenvalues();
  const double top = ev.maxCoeff();
  if (!(top > 0.0)) throw SingularGram("Gram matrix has no positive eigenvalue");
  Vector inv = Vector::Zero(ev.size());
  for (Index i = 0; i < ev.size(); ++i)
    if (ev(i) > 1e-12 * top) inv(i) = 1.0 / ev(i);
  if (how) *how = GramSolve::Truncated;
  return es.eigenvectors() * inv.asDiagonal() * (es.eigenvectors().transpose() * rhs);
}

// ---------------------------------------------------------------------------

struct PrincipalOps {
  std::vector<Index> sigma;
  std::vector<LocalDDOps> ops;
  std::vector<Matrix> K_rp, K_pp;
  Matrix Vp;  // column k: vec(U_rp^(σ_k))
  Matrix Vd;  // column k: vec(U_rd^(σ_k))
  Vector d;   // tr(U_rd^(σ_k)ᵀ T_rd) = tr(F_dd^(σ_k))

  int size() const { return int(sigma.size()); }
  std::size_t factor_bytes() const {
    std::size_t b = 0;
    for (const auto& o : ops) b += o.factor_rr.bytes();
    return b;
  }
};

inline PrincipalOps build_principal_ops(const std::vector<Index>& sigma, const DDProblem& pb) {
  if (sigma.empty()) throw ValidationError("rom", "no principal cells");
  const auto& dp = pb.partition();
  const Index nr = dp.n_r(), np = dp.n_p(), nd = dp.n_d();
  const Index nrb = Index(sigma.size());
  PrincipalOps po;
  po.sigma = sigma;
  po.Vp.resize(nr * np, nrb);
  po.Vd.resize(nr * nd, nrb);
  po.d.resize(nrb);
  for (Index k = 0; k < nrb; ++k) {
    const SparseSymMatrix kk = pb.stiffness_rp(sigma[k]);
    RpBlocks b = split_rp(kk, dp);
    po.ops.push_back(build_local_dd_ops(kk, dp, sigma[k]));
    po.K_rp.push_back(std::move(b.rp));
    po.K_pp.push_back(std::move(b.pp));
    const auto& o = po.ops.back();
    po.Vp.col(k) = Eigen::Map<const Vector>(o.U_rp.data(), nr * np);
    po.Vd.col(k) = Eigen::Map<const Vector>(o.U_rd.data(), nr * nd);
    po.d(k) = o.F_dd.trace();
  }
  return po;
}

struct CellRomCoeffs {
  Vector alpha, pi, delta;
};

//! Energy-norm projections of U_rp^(s) and U_rd^(s) on the principal solutions.
struct Projection {
  Vector pi, delta;
  Matrix gram_p, gram_d;  // A^(s), M^(s)
  Vector rhs_p;           // b^(s)
  GramSolve how_p = GramSolve::Cholesky, how_d = GramSolve::Cholesky;
};

inline Projection project_coeffs(Index s, const PrincipalOps& po, const DDProblem& pb) {
  const auto& dp = pb.partition();
  const Index nr = dp.n_r(), np = dp.n_p(), nd = dp.n_d();
  const Index nrb = po.size();
  Projection pr;
  const Matrix up = Eigen::Map<const Matrix>(po.Vp.data(), nr, np * nrb);
  const Matrix kup = pb.apply_remainder(s, up);
  pr.gram_p = po.Vp.transpose() * Eigen::Map<const Matrix>(kup.data(), nr * np, nrb);
  const Matrix krp = pb.primal_columns(s).topRows(nr);
  pr.rhs_p = po.Vp.transpose() * Eigen::Map<const Vector>(krp.data(), nr * np);
  pr.pi = solve_gram(pr.gram_p, pr.rhs_p, &pr.how_p);
  if (nd > 0) {
    const Matrix ud = Eigen::Map<const Matrix>(po.Vd.data(), nr, nd * nrb);
    const Matrix kud = pb.apply_remainder(s, ud);
    pr.gram_d = po.Vd.transpose() * Eigen::Map<const Matrix>(kud.data(), nr * nd, nrb);
    pr.delta = solve_gram(pr.gram_d, po.d, &pr.how_d);
  } else {
    pr.gram_d = Matrix::Zero(nrb, nrb);
    pr.delta = Vector::Zero(nrb);
  }
  return pr;
}

//! Reduced operators of one cell as linear combinations of the principal ones.
inline DualPrimalOps build_rom_local_ops(const CellRomCoeffs& c, const PrincipalOps& po) {
  const auto& o0 = po.ops[0];
  DualPrimalOps r;
  r.U_rp = Matrix::Zero(o0.U_rp.rows(), o0.U_rp.cols());
  r.U_rd = Matrix::Zero(o0.U_rd.rows(), o0.U_rd.cols());
  r.F_dd = Matrix::Zero(o0.F_dd.rows(), o0.F_dd.cols());
  r.S_dd = Matrix::Zero(o0.S_dd.rows(), o0.S_dd.cols());
  Matrix krp = Matrix::Zero(o0.U_rp.rows(), o0.U_rp.cols());
  Matrix kpp = Matrix::Zero(o0.S_pp.rows(), o0.S_pp.cols());
  for (int k = 0; k < po.size(); ++k) {
    const auto& o = po.ops[k];
    r.U_rp += c.pi(k) * o.U_rp;
    r.U_rd += c.delta(k) * o.U_rd;
    r.F_dd += c.delta(k) * o.F_dd;
    r.S_dd += c.alpha(k) * o.S_dd;
    krp += c.alpha(k) * po.K_rp[k];
    kpp += c.alpha(k) * po.K_pp[k];
  }
  r.S_pp = sym(kpp - krp.transpose() * r.U_rp);
  return r;
}

//! [−Ûᵀ I] K^(s) [−Û; I] = K_pp − 2 sym(K_pr Û) + Ûᵀ K_rr Û, which dominates the exact S_pp.
inline Matrix extension_energy(Index s, const Matrix& u_rp, const DDProblem& pb) {
  const Index nr = pb.partition().n_r();
  const Matrix kp = pb.primal_columns(s);
  const Matrix krp = kp.topRows(nr), kpp = kp.bottomRows(kp.rows() - nr);
  return sym(kpp - 2.0 * sym(krp.transpose() * u_rp) + u_rp.transpose() * pb.apply_remainder(s, u_rp));
}

//! Everything the reduced solver needs, built without factorizing non-principal cells.
class RomModel {
 public:
  RomModel(const DDProblem& pb, double tol_rb) : pb_(pb) {
    Stopwatch clock;
    greedy_ = greedy_select(pb.coeffs(), tol_rb);
    alpha_ = change_basis(greedy_);
    greedy_seconds_ = clock.seconds();

    Stopwatch ops_clock;
    principal_ = build_principal_ops(greedy_.sigma, pb);
    const Index n = pb.n_cells();
    coeffs_.resize(n);
    ops_.resize(n);
    std::vector<Matrix> energy_spp(n);
    for (Index s = 0; s < n; ++s) {
      const Projection pr = project_coeffs(s, principal_, pb);
      if (pr.how_p != GramSolve::Cholesky || pr.how_d != GramSolve::Cholesky)
        warnings_.push_back("cell " + std::to_string(s) + ": Gram system needed a regularized solve");
      coeffs_[s] = {alpha_.col(s), pr.pi, pr.delta};
      ops_[s] = build_rom_local_ops(coeffs_[s], principal_);
      energy_spp[s] = extension_energy(s, ops_[s].U_rp, pb);
    }
    auto get = [&](Index s) -> const DualPrimalOps& { return ops_[s]; };
    try {
      coarse_ = assemble_coarse(pb.partition(), get);
    } catch (const NotPositiveDefinite&) {
      // The α-combined blocks can perturb the soft coarse modes past zero; the energy of the
      // reduced extension is bounded below by the exact Schur complement.
      for (Index s = 0; s < n; ++s) ops_[s].S_pp = std::move(energy_spp[s]);
      coarse_ = assemble_coarse(pb.partition(), get);
      energy_coarse_ = true;
      warnings_.push_back("reduced coarse matrix was indefinite; used extension energies instead");
    }
    principal_seconds_ = ops_clock.seconds();
  }

  const DDProblem& problem() const { return pb_; }
  const GreedyBasis& greedy() const { return greedy_; }
  const PrincipalOps& principal() const { return principal_; }
  const CellRomCoeffs& coeffs(Index s) const { return coeffs_[s]; }
  const DualPrimalOps& ops(Index s) const { return ops_[s]; }
  const CoarseOp& coarse() const { return coarse_; }
  int n_rb() const { return principal_.size(); }
  //! True when the coarse matrix had to be built from extension energies.
  bool energy_coarse() const { return energy_coarse_; }
  double greedy_seconds() const { return greedy_seconds_; }
  double principal_seconds() const { return principal_seconds_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  //! Principal index k of cell s, or -1.
  int principal_slot(Index s) const {
    for (int k = 0; k < n_rb(); ++k)
      if (principal_.sigma[k] == s) return k;
    return -1;
  }

 private:
  const DDProblem& pb_;
  GreedyBasis greedy_;
  Matrix alpha_;
  PrincipalOps principal_;
  std::vector<CellRomCoeffs> coeffs_;
  std::vector<DualPrimalOps> ops_;
  CoarseOp coarse_;
  double greedy_seconds_ = 0.0, principal_seconds_ = 0.0;
  bool energy_coarse_ = false;
  std::vector<std::string> warnings_;
};

}  // namespace latfeti
