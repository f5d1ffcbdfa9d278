#pragma once

// A decomposed lattice problem: geometry, per-cell stiffness provider, jump operator, loads
// and the conforming direct solve used as reference.

#include <chrono>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "latfeti/assembly.hpp"
#include "latfeti/decomposition.hpp"

namespace latfeti {

struct NeumannBC {
  int face = 0;
  Point traction;
};

struct ProblemSpec {
  MacroPatch patch;
  GridDims cells{1, 1, 1};
  CellPattern cell;
  Material material;
  std::vector<double> cell_E_scale;  // empty, or one multiplier per cell
  std::vector<DirichletBC> dirichlet;
  std::vector<NeumannBC> neumann;
  Point body_force;  // empty: none
  int fit_degree = 2;
  //! Never keep assembled cell matrices; contract the lookup table on every product.
  bool matrix_free = false;
};

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

//! Iteration, factorization and timing record of one solve.
struct SolveReport {
  std::string mode;
  int outer_iterations = 0;
  std::vector<int> inner_iterations_per_call;
  int inner_cap_hits = 0;
  int negative_curvature_fallbacks = 0;
  int local_factorizations = 0;
  int coarse_factorizations = 0;
  int peak_held_factorizations = 0;
  std::size_t peak_local_factor_bytes = 0;
  std::vector<double> residual_history;
  bool converged = false;
  double final_residual = 0.0;    // ‖Ku + Bᵀλ − f‖ / ‖f‖
  double constraint_residual = 0.0;  // ‖Bu − d‖ / max(1, ‖d‖)
  int n_rb = 0;
  double greedy_residual = 0.0;
  std::vector<Index> principal_cells;
  double time_setup = 0.0, time_greedy = 0.0, time_principal_ops = 0.0, time_iterate = 0.0;
  std::vector<std::string> warnings;

  int inner_iterations_total() const {
    int t = 0;
    for (int i : inner_iterations_per_call) t += i;
    return t;
  }
};

struct SolverOptions {
  double tol_gmres = 1e-5;
  double tol_cg = 1e-11;
  double tol_rb = 1e-6;
  int max_outer = 200;
  int max_inner = 500;

  void validate() const {
    auto unit = [](double v, const char* field) {
      if (!(v > 0.0 && v < 1.0)) throw ValidationError(field, "must lie in (0, 1)");
    };
    unit(tol_gmres, "solver.tol_gmres");
    unit(tol_cg, "solver.tol_cg");
    unit(tol_rb, "solver.tol_rb");
    if (max_outer < 1) throw ValidationError("solver.max_outer", "must be >= 1");
    if (max_inner < 1) throw ValidationError("solver.max_inner", "must be >= 1");
  }
};

class DDProblem {
 public:
  explicit DDProblem(const ProblemSpec& spec)
      : spec_(spec),
        rc_(build_reference_cell(spec.cell)),
        mm_(build_macro_model(spec.patch, spec.cells)),
        table_(rc_, spec.fit_degree) {
    Stopwatch clock;
    spec_.material.validate();
    if (rc_.dim() != mm_.dim()) throw ValidationError("cell.pattern", "cell dimension differs from macro patch");
    if (spec.dirichlet.empty()) throw ValidationError("bcs.dirichlet", "at least one Dirichlet condition is required");
    const double mismatch = interface_mismatch(mm_, rc_);
    if (mismatch > 1e-10) throw ValidationError("macro", "adjacent cells do not match (" + std::to_string(mismatch) + ")");
    if (!spec.cell_E_scale.empty() && Index(spec.cell_E_scale.size()) != mm_.n_cells())
      throw ValidationError("material.cell_E_scale", "needs one entry per cell");

    coeffs_.reserve(mm_.n_cells());
    for (Index s = 0; s < mm_.n_cells(); ++s) {
      Material m = spec.material;
      if (!spec.cell_E_scale.empty()) m.E *= spec.cell_E_scale[s];
      coeffs_.push_back(fit_poly_coeffs(mm_.mapping(s), m, spec.fit_degree, s));
    }
    dp_ = partition_dofs(rc_, mm_, spec.dirichlet);
    jo_ = build_jump_operator(dp_, rc_, mm_, spec.dirichlet);
    sw_ = build_scaling_weights(jo_);

    if (!spec.matrix_free) {
      cache_.reserve(mm_.n_cells());
      for (Index s = 0; s < mm_.n_cells(); ++s) cache_.push_back(assemble_rp(s));
    }
    build_loads();
    setup_seconds_ = clock.seconds();
  }

  const ProblemSpec& spec() const { return spec_; }
  const ReferenceCell& cell() const { return rc_; }
  const MacroModel& macro() const { return mm_; }
  const LookupTable& table() const { return table_; }
  const std::vector<PolyCoeffs>& coeffs() const { return coeffs_; }
  const DofPartition& partition() const { return dp_; }
  const JumpOperator& jump() const { return jo_; }
  const ScalingWeights& weights() const { return sw_; }
  Index n_cells() const { return mm_.n_cells(); }
  int dim() const { return rc_.dim(); }
  double setup_seconds() const { return setup_seconds_; }
  //! Unique mesh DOF of the conforming structure.
  Index n_global_dofs() const { return GlobalNodes(rc_, mm_).size() * dim(); }

  //! K^(s) reordered to (i, d, p).
  SparseSymMatrix stiffness_rp(Index s) const { return cache_.empty() ? assemble_rp(s) : cache_[s]; }

  //! K^(s) X in (i, d, p) ordering.
  Matrix apply_stiffness_rp(Index s, const Matrix& x) const {
    if (!cache_.empty()) return cache_[s] * x;
    const Permutation& p = dp_.to_rp();
    const MatrixFreeStiffness k(table_, coeffs_[s]);
    return p * (k * Matrix(p.transpose() * x));
  }

  //! K_rr^(s) X for X with n_r rows.
  Matrix apply_remainder(Index s, const Matrix& x) const {
    Matrix full = Matrix::Zero(dp_.n_local(), x.cols());
    full.topRows(dp_.n_r()) = x;
    return apply_stiffness_rp(s, full).topRows(dp_.n_r());
  }

  //! Columns [K_rp; K_pp] of K^(s).
  Matrix primal_columns(Index s) const {
    Matrix e = Matrix::Zero(dp_.n_local(), dp_.n_p());
    e.bottomRows(dp_.n_p()).setIdentity();
    return apply_stiffness_rp(s, e);
  }

  //! Load vector f^(s) in (i, d, p) ordering (zero for unloaded cells).
  Vector local_load_rp(Index s) const {
    const auto it = loads_.find(s);
    return it == loads_.end() ? Vector::Zero(dp_.n_local()) : it->second;
  }

  const Vector& f() const { return f_; }
  const Vector& d() const { return jo_.rhs(); }

  Index n_U() const { return dp_.n_U(); }
  Index n_L() const { return jo_.rows(); }

  //! Local (i, d, p) vector of cell s taken from u, with zero in eliminated primal slots.
  Vector gather_local(Index s, const Vector& u) const {
    Vector x(dp_.n_local());
    x.head(dp_.n_r()) = u.segment(s * dp_.n_r(), dp_.n_r());
    x.tail(dp_.n_p()) = dp_.restrict_primal(s, u.tail(dp_.n_P()));
    return x;
  }

  Vector apply_K(const Vector& u) const {
    Vector y = Vector::Zero(n_U());
    const Index nr = dp_.n_r();
    for (Index s = 0; s < n_cells(); ++s) {
      const Vector ky = apply_stiffness_rp(s, gather_local(s, u));
      y.segment(s * nr, nr) = ky.head(nr);
      Vector yp = y.tail(dp_.n_P());
      dp_.assemble_primal(s, ky.tail(dp_.n_p()), yp);
      y.tail(dp_.n_P()) = yp;
    }
    return y;
  }

  Vector apply_B(const Vector& u) const {
    Vector out = Vector::Zero(n_L());
    for (Index s = 0; s < n_cells(); ++s)
      jo_.scatter_add(s, u.segment(s * dp_.n_r() + dp_.n_i(), dp_.n_d()), out);
    return out;
  }

  Vector apply_Bt(const Vector& lambda) const {
    Vector u = Vector::Zero(n_U());
    for (Index s = 0; s < n_cells(); ++s) u.segment(s * dp_.n_r() + dp_.n_i(), dp_.n_d()) = jo_.gather(s, lambda);
    return u;
  }

  //! Full saddle operator [[K, Bᵀ], [B, 0]].
  Vector apply_saddle(const Vector& x) const {
    Vector y(n_U() + n_L());
    const Vector u = x.head(n_U()), lambda = x.tail(n_L());
    y.head(n_U()) = apply_K(u) + apply_Bt(lambda);
    y.tail(n_L()) = apply_B(u);
    return y;
  }

  //! Saddle residuals (‖Ku + Bᵀλ − f‖/‖f‖, ‖Bu − d‖/max(1,‖d‖)).
  std::pair<double, double> saddle_residuals(const Vector& u, const Vector& lambda) const {
    const double fn = f_.norm();
    const double r1 = (apply_K(u) + apply_Bt(lambda) - f_).norm() / (fn > 0 ? fn : 1.0);
    const double r2 = (apply_B(u) - d()).norm() / std::max(1.0, d().norm());
    return {r1, r2};
  }

  //! Full local solution of cell s in natural ordering, eliminated values restored.
  Vector local_solution(Index s, const Vector& u) const {
    Vector x = gather_local(s, u);
    for (Index k = 0; k < dp_.n_p(); ++k)
      if (dp_.primal_index(s, k) < 0) x(dp_.n_r() + k) = dp_.primal_value(s, k);
    return dp_.to_rp().transpose() * x;
  }

  //! One displacement per conforming node (taken from the first hosting cell).
  Matrix nodal_field(const Vector& u, double* max_jump = nullptr) const {
    const GlobalNodes gn(rc_, mm_);
    const int d = dim();
    Matrix field(gn.size(), d);
    std::vector<char> set(gn.size(), 0);
    double jump = 0.0;
    for (Index s = 0; s < n_cells(); ++s) {
      const Vector x = local_solution(s, u);
      for (Index n = 0; n < rc_.n_nodes(); ++n) {
        const Index g = gn.global(s, n);
        const auto val = x.segment(n * d, d).transpose();
        if (!set[g]) {
          field.row(g) = val;
          set[g] = 1;
        } else {
          jump = std::max(jump, (field.row(g) - val).cwiseAbs().maxCoeff());
        }
      }
    }
    if (max_jump) *max_jump = jump;
    return field;
  }

 private:
  SparseSymMatrix assemble_rp(Index s) const {
    return assemble_local_stiffness(table_, coeffs_[s]).permuted(dp_.to_rp());
  }

  void build_loads() {
    const int d = dim();
    std::map<Index, CellLoads> per_cell;
    if (spec_.body_force.size() && spec_.body_force.norm() > 0) {
      if (spec_.body_force.size() != d) throw ValidationError("bcs.body_force", "wrong dimension");
      for (Index s = 0; s < n_cells(); ++s) per_cell[s].body_force = spec_.body_force;
    }
    for (const auto& nb : spec_.neumann) {
      if (nb.face < 0 || nb.face >= 2 * d) throw ValidationError("bcs.neumann.face", "invalid face");
      if (nb.traction.size() != d) throw ValidationError("bcs.neumann.traction", "wrong dimension");
      for (Index s = 0; s < n_cells(); ++s)
        if (mm_.face_on_boundary(s, nb.face)) per_cell[s].tractions.push_back({nb.face, nb.traction});
    }
    for (const auto& [s, l] : per_cell) {
      std::array<bool, 6> ext{};
      for (int f = 0; f < 2 * d; ++f) ext[f] = mm_.face_on_boundary(s, f);
      loads_[s] = dp_.to_rp() * assemble_local_rhs(rc_, mm_.mapping(s), l, ext);
    }

    const Index nr = dp_.n_r(), np = dp_.n_p();
    f_ = Vector::Zero(n_U());
    Vector fp = Vector::Zero(dp_.n_P());
    for (Index s = 0; s < n_cells(); ++s) {
      Vector fl = local_load_rp(s);
      if (dp_.has_eliminated(s)) {
        // Move prescribed primal values to the right-hand side.
        Vector x = Vector::Zero(dp_.n_local());
        x.tail(np) = dp_.eliminated_values(s);
        fl -= apply_stiffness_rp(s, x);
      }
      f_.segment(s * nr, nr) = fl.head(nr);
      dp_.assemble_primal(s, fl.tail(np), fp);
    }
    f_.tail(dp_.n_P()) = fp;
  }

  ProblemSpec spec_;
  ReferenceCell rc_;
  MacroModel mm_;
  LookupTable table_;
  std::vector<PolyCoeffs> coeffs_;
  DofPartition dp_;
  JumpOperator jo_;
  ScalingWeights sw_;
  std::vector<SparseSymMatrix> cache_;
  std::map<Index, Vector> loads_;
  Vector f_;
  double setup_seconds_ = 0.0;
};

// ---------------------------------------------------------------------------

struct DirectSolution {
  Matrix nodal;  // one row per conforming node
  Index n_free = 0;
  double seconds = 0.0;
  std::size_t factor_bytes = 0;
};

//! Assembled conforming system with Dirichlet DOF eliminated, solved by sparse Cholesky.
inline DirectSolution solve_direct(const DDProblem& pb) {
  Stopwatch clock;
  const auto& rc = pb.cell();
  const auto& mm = pb.macro();
  const int d = pb.dim();
  const GlobalNodes gn(rc, mm);
  const Index n = gn.size() * d;
  const detail::DirichletTable dt(rc, mm, gn, pb.spec().dirichlet);

  std::vector<Triplet> trip;
  Vector f = Vector::Zero(n);
  const Permutation& to_rp = pb.partition().to_rp();
  for (Index s = 0; s < mm.n_cells(); ++s) {
    const SparseMatrix k = assemble_local_stiffness(pb.table(), pb.coeffs()[s]).lower();
    for (int c = 0; c < k.outerSize(); ++c)
      for (SparseMatrix::InnerIterator it(k, c); it; ++it) {
        const Index gi = gn.global(s, it.row() / d) * d + it.row() % d;
        const Index gj = gn.global(s, it.col() / d) * d + it.col() % d;
        trip.emplace_back(int(gi), int(gj), it.value());
      }
    const Vector fl = to_rp.transpose() * pb.local_load_rp(s);
    for (Index i = 0; i < rc.n_dofs(); ++i) f(gn.global(s, i / d) * d + i % d) += fl(i);
  }
  // Each cell contributes its lower triangle once; reversed global order is mirrored.
  const SparseSymMatrix k(n, trip);

  std::vector<Index> order, pos(n);
  Vector ud = Vector::Zero(n);
  Index n_free = 0;
  for (Index i = 0; i < n; ++i)
    if (!dt.at(i / d, int(i % d))) order.push_back(i), ++n_free;
  for (Index i = 0; i < n; ++i)
    if (const auto& v = dt.at(i / d, int(i % d))) order.push_back(i), ud(i) = *v;
  Permutation p(n);
  for (Index i = 0; i < n; ++i) p.indices()[order[i]] = int(i);
  const SparseMatrix kp = k.permuted(p).full();
  const SparseSymMatrix kff = SparseSymMatrix::from_full(kp.topLeftCorner(n_free, n_free));
  const SparseMatrix kfd = kp.topRightCorner(n_free, n - n_free);
  const Vector fp = p * f, udp = p * ud;
  const Vector rhs = fp.head(n_free) - kfd * udp.tail(n - n_free);

  const CholeskyFactor chol(kff);
  Vector up = udp;
  up.head(n_free) = chol.solve(rhs);
  const Vector u = p.transpose() * up;

  DirectSolution sol;
  sol.nodal.resize(gn.size(), d);
  for (Index g = 0; g < gn.size(); ++g) sol.nodal.row(g) = u.segment(g * d, d).transpose();
  sol.n_free = n_free;
  sol.factor_bytes = chol.bytes();
  sol.seconds = clock.seconds();
  return sol;
}

inline double relative_l2(const Matrix& a, const Matrix& ref) {
  const double rn = ref.norm();
  return rn > 0 ? (a - ref).norm() / rn : a.norm();
}

}  // namespace latfeti
