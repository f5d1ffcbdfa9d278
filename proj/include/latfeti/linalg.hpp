#pragma once

// Dense/sparse symmetric storage, Cholesky factors and Krylov solvers.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "latfeti/errors.hpp"

namespace latfeti {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
using Triplet = Eigen::Triplet<double, int>;
using Permutation = Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int>;

//! Symmetric sparse matrix holding only its lower triangle.
class SparseSymMatrix {
 public:
  SparseSymMatrix() = default;

  //! Entries above the diagonal are moved to their mirror position; duplicates are summed.
  //! A pair (i,j), (j,i) must therefore be given only once.
  SparseSymMatrix(Index n, const std::vector<Triplet>& entries) : lower_(n, n) {
    std::vector<Triplet> lo;
    lo.reserve(entries.size());
    for (const auto& t : entries) {
      if (t.row() >= t.col())
        lo.push_back(t);
      else
        lo.emplace_back(t.col(), t.row(), t.value());
    }
    lower_.setFromTriplets(lo.begin(), lo.end());
    lower_.makeCompressed();
  }

  static SparseSymMatrix from_full(const SparseMatrix& a) {
    SparseSymMatrix s;
    s.lower_ = a.triangularView<Eigen::Lower>();
    s.lower_.makeCompressed();
    return s;
  }

  static SparseSymMatrix from_dense(const Matrix& a) {
    return from_full(a.sparseView());
  }

  Index size() const { return lower_.rows(); }
  Index nonzeros() const { return lower_.nonZeros(); }
  const SparseMatrix& lower() const { return lower_; }

  SparseMatrix full() const {
    SparseMatrix f = lower_.selfadjointView<Eigen::Lower>();
    return f;
  }
  Matrix dense() const { return Matrix(full()); }

  Vector operator*(const Vector& x) const { return lower_.selfadjointView<Eigen::Lower>() * x; }
  Matrix operator*(const Matrix& x) const { return lower_.selfadjointView<Eigen::Lower>() * x; }

  //! Symmetric reordering: entry (i,j) moves to (perm[i], perm[j]).
  SparseSymMatrix permuted(const Permutation& perm) const {
    SparseSymMatrix s;
    s.lower_.resize(size(), size());
    s.lower_.selfadjointView<Eigen::Lower>() = lower_.selfadjointView<Eigen::Lower>().twistedBy(perm);
    // The permuted copy has unsorted inner indices; a double transpose sorts them.
    s.lower_ = SparseMatrix(SparseMatrix(s.lower_.transpose()).transpose());
    return s;
  }

  double frobenius_norm() const {
    double diag = 0.0, off = 0.0;
    for (int k = 0; k < lower_.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(lower_, k); it; ++it)
        (it.row() == it.col() ? diag : off) += it.value() * it.value();
    return std::sqrt(diag + 2.0 * off);
  }

 private:
  SparseMatrix lower_;
};

//! Cholesky factor P A Pᵀ = L Lᵀ. Small matrices are factorized densely (identity P).
class CholeskyFactor {
 public:
  static constexpr Index kDenseCutoff = 64;
  // Pivots below this fraction of the largest diagonal entry are treated as non-positive.
  static constexpr double kPivotTolerance = 1e-13;

  using SparseLLT = Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>>;

  CholeskyFactor() = default;

  explicit CholeskyFactor(const SparseSymMatrix& a) : n_(a.size()) {
    if (n_ < kDenseCutoff) {
      factor_dense(a.dense());
      return;
    }
    auto f = std::make_shared<SparseLLT>();
    f->compute(a.lower());
    if (f->info() != Eigen::Success) throw NotPositiveDefinite("cholesky: non-positive pivot");
    check_pivots(Vector(a.lower().diagonal()), Vector(SparseMatrix(f->matrixL()).diagonal()));
    sparse_ = std::move(f);
  }

  explicit CholeskyFactor(const Matrix& a) : n_(a.rows()) {
    if (a.rows() != a.cols()) throw DimensionMismatch("cholesky: matrix not square");
    factor_dense(a);
  }

  Index size() const { return n_; }
  bool is_dense() const { return static_cast<bool>(dense_); }

  Vector solve(const Vector& b) const {
    if (b.size() != n_) throw DimensionMismatch("cholesky solve: rhs size");
    if (n_ == 0) return Vector();
    return dense_ ? Vector(dense_->solve(b)) : Vector(sparse_->solve(b));
  }

  Matrix solve(const Matrix& b) const {
    if (b.rows() != n_) throw DimensionMismatch("cholesky solve: rhs rows");
    if (n_ == 0) return Matrix(0, b.cols());
    return dense_ ? Matrix(dense_->solve(b)) : Matrix(sparse_->solve(b));
  }

  //! P such that P A Pᵀ = L Lᵀ.
  Permutation permutation() const {
    if (sparse_) return sparse_->permutationP();
    Permutation p(n_);
    p.setIdentity();
    return p;
  }

  SparseMatrix lower_factor() const {
    if (sparse_) return SparseMatrix(sparse_->matrixL());
    Matrix l = dense_->matrixL();
    return l.sparseView();
  }

  //! Storage held by the factor (values + indices), used for memory reporting.
  std::size_t bytes() const {
    if (dense_) return static_cast<std::size_t>(n_ * n_) * sizeof(double);
    if (!sparse_) return 0;
    const auto nnz = static_cast<std::size_t>(SparseMatrix(sparse_->matrixL()).nonZeros());
    return nnz * (sizeof(double) + sizeof(int)) + static_cast<std::size_t>(2 * n_ + 1) * sizeof(int);
  }

 private:
  void factor_dense(const Matrix& a) {
    if (n_ == 0) {
      dense_ = std::make_shared<Eigen::LLT<Matrix>>();
      return;
    }
    auto f = std::make_shared<Eigen::LLT<Matrix>>(a);
    if (f->info() != Eigen::Success) throw NotPositiveDefinite("cholesky: non-positive pivot");
    check_pivots(a.diagonal(), Matrix(f->matrixL()).diagonal());
    dense_ = std::move(f);
  }

  static void check_pivots(const Vector& a_diag, const Vector& l_diag) {
    if (a_diag.size() == 0) return;
    const double scale = a_diag.cwiseAbs().maxCoeff();
    const double min_pivot = l_diag.cwiseAbs2().minCoeff();
    if (!(min_pivot > kPivotTolerance * scale))
      throw NotPositiveDefinite("cholesky: pivot " + std::to_string(min_pivot) + " below tolerance");
  }

  Index n_ = 0;
  std::shared_ptr<const Eigen::LLT<Matrix>> dense_;
  std::shared_ptr<const SparseLLT> sparse_;
};

// ---------------------------------------------------------------------------
// Krylov solvers

using LinearOperator = std::function<Vector(const Vector&)>;

inline LinearOperator identity_operator() {
  return [](const Vector& v) { return v; };
}

struct IterStats {
  int iterations = 0;
  //! Relative residuals, entry 0 is the initial one (1 unless b = 0).
  std::vector<double> residual_history;
  bool converged = false;
  //! ‖b − A x‖ / ‖b‖ recomputed at exit (NaN when not computed).
  double true_residual = std::numeric_limits<double>::quiet_NaN();
  bool negative_curvature = false;
};

struct KrylovResult {
  Vector x;
  IterStats stats;
};

class MaxIterations : public Error {
 public:
  explicit MaxIterations(KrylovResult r, const std::string& who = "krylov")
      : Error(who + ": no convergence after " + std::to_string(r.stats.iterations) + " iterations"),
        result(std::move(r)) {}
  KrylovResult result;  // best iterate and its statistics
};

enum class ResidualMetric {
  Unpreconditioned,        // ‖r‖ / ‖b‖
  PreconditionedRelative,  // sqrt(rᵀMr) / sqrt(r0ᵀMr0)
};

struct KrylovOptions {
  double tol = 1e-10;
  int max_it = 200;
  ResidualMetric metric = ResidualMetric::Unpreconditioned;
  bool throw_on_max = true;
  bool true_residual = true;
};

namespace detail {

inline double relative_true_residual(const LinearOperator& a, const Vector& b, const Vector& x) {
  const double bn = b.norm();
  return bn > 0 ? (b - a(x)).norm() / bn : (x.size() ? a(x).norm() : 0.0);
}

inline KrylovResult finish(KrylovResult res, const LinearOperator& a, const Vector& b,
                           const KrylovOptions& opts, const char* who) {
  if (opts.true_residual) res.stats.true_residual = relative_true_residual(a, b, res.x);
  if (!res.stats.converged && opts.throw_on_max) throw MaxIterations(std::move(res), who);
  return res;
}

}  // namespace detail

//! Preconditioned conjugate gradients from x0 = 0. Stops early (converged = false,
//! negative_curvature = true) if pᵀAp ≤ 0 or rᵀMr < 0 is met.
inline KrylovResult pcg(const LinearOperator& a, const LinearOperator& m, const Vector& b,
                        const KrylovOptions& opts) {
  KrylovResult res;
  auto& st = res.stats;
  res.x = Vector::Zero(b.size());
  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    st.residual_history = {0.0};
    st.converged = true;
    st.true_residual = 0.0;
    return res;
  }

  Vector r = b;
  Vector z = m(r);
  double rz = r.dot(z);
  const bool precond_metric = opts.metric == ResidualMetric::PreconditionedRelative;
  if (precond_metric && !(rz > 0.0)) {
    st.negative_curvature = rz < 0.0;
    st.residual_history = {1.0};
    return detail::finish(std::move(res), a, b, opts, "pcg");
  }
  const double ref = precond_metric ? std::sqrt(rz) : bnorm;
  st.residual_history.push_back(1.0);

  Vector p = z;
  Vector best = res.x;
  double best_res = 1.0;
  for (int k = 1; k <= opts.max_it; ++k) {
    const Vector ap = a(p);
    const double pap = p.dot(ap);
    if (!(pap > 0.0)) {
      st.negative_curvature = true;
      break;
    }
    const double alpha = rz / pap;
    res.x += alpha * p;
    r -= alpha * ap;
    z = m(r);
    const double rz_new = r.dot(z);
    if (rz_new < 0.0) st.negative_curvature = true;
    const double rel = precond_metric ? std::sqrt(std::abs(rz_new)) / ref : r.norm() / bnorm;
    st.residual_history.push_back(rel);
    st.iterations = k;
    if (rel < best_res) {
      best_res = rel;
      best = res.x;
    }
    if (rel <= opts.tol) {
      st.converged = true;
      break;
    }
    if (st.negative_curvature) break;
    p = z + (rz_new / rz) * p;
    rz = rz_new;
  }
  if (!st.converged) res.x = best;
  return detail::finish(std::move(res), a, b, opts, "pcg");
}

inline KrylovResult pcg(const LinearOperator& a, const LinearOperator& m, const Vector& b, double tol,
                        int max_it) {
  KrylovOptions o;
  o.tol = tol;
  o.max_it = max_it;
  return pcg(a, m, b, o);
}

namespace detail {

// Right-preconditioned GMRES from x0 = 0, full basis. With `flexible` the preconditioned
// directions are kept so that M may change between iterations.
inline KrylovResult gmres_impl(const LinearOperator& a, const LinearOperator& m, const Vector& b,
                               const KrylovOptions& opts, bool flexible) {
  const char* who = flexible ? "fgmres" : "gmres";
  KrylovResult res;
  auto& st = res.stats;
  res.x = Vector::Zero(b.size());
  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    st.residual_history = {0.0};
    st.converged = true;
    st.true_residual = 0.0;
    return res;
  }
  const int max_it = std::max(1, opts.max_it);
  std::vector<Vector> v, z;
  v.reserve(32);
  v.push_back(b / bnorm);
  Matrix h = Matrix::Zero(max_it + 1, max_it);
  Vector cs = Vector::Zero(max_it), sn = Vector::Zero(max_it);
  Vector g = Vector::Zero(max_it + 1);
  g(0) = bnorm;
  st.residual_history.push_back(1.0);

  int k = 0;
  bool broke_down = false;
  for (int j = 0; j < max_it; ++j) {
    Vector zj = m(v[j]);
    Vector w = a(zj);
    if (flexible) z.push_back(std::move(zj));
    const double wnorm0 = w.norm();
    // Modified Gram-Schmidt, two passes for orthogonality close to working precision.
    for (int pass = 0; pass < 2; ++pass)
      for (int i = 0; i <= j; ++i) {
        const double hij = w.dot(v[i]);
        h(i, j) += hij;
        w -= hij * v[i];
      }
    const double hn = w.norm();
    h(j + 1, j) = hn;
    for (int i = 0; i < j; ++i) {
      const double t = cs(i) * h(i, j) + sn(i) * h(i + 1, j);
      h(i + 1, j) = -sn(i) * h(i, j) + cs(i) * h(i + 1, j);
      h(i, j) = t;
    }
    const double denom = std::hypot(h(j, j), h(j + 1, j));
    cs(j) = denom > 0 ? h(j, j) / denom : 1.0;
    sn(j) = denom > 0 ? h(j + 1, j) / denom : 0.0;
    h(j, j) = denom;
    h(j + 1, j) = 0.0;
    g(j + 1) = -sn(j) * g(j);
    g(j) = cs(j) * g(j);

    k = j + 1;
    const double rel = std::abs(g(j + 1)) / bnorm;
    st.residual_history.push_back(rel);
    st.iterations = k;
    if (rel <= opts.tol) {
      st.converged = true;
      break;
    }
    if (hn <= 1e-14 * std::max(wnorm0, std::numeric_limits<double>::min())) {
      broke_down = true;
      break;
    }
    v.push_back(w / hn);
  }

  const Vector y = h.topLeftCorner(k, k).triangularView<Eigen::Upper>().solve(g.head(k));
  if (flexible) {
    for (int i = 0; i < k; ++i) res.x += y(i) * z[i];
  } else {
    Vector acc = Vector::Zero(b.size());
    for (int i = 0; i < k; ++i) acc += y(i) * v[i];
    res.x = m(acc);
  }
  if (broke_down) {
    if (opts.true_residual) st.true_residual = relative_true_residual(a, b, res.x);
    throw Breakdown(std::string(who) + ": Arnoldi breakdown with residual " +
                    std::to_string(st.residual_history.back()));
  }
  return finish(std::move(res), a, b, opts, who);
}

}  // namespace detail

//! Standard right-preconditioned GMRES (fixed preconditioner).
inline KrylovResult gmres(const LinearOperator& a, const LinearOperator& m, const Vector& b,
                          const KrylovOptions& opts) {
  return detail::gmres_impl(a, m, b, opts, false);
}

//! Flexible GMRES: the preconditioner may vary from one iteration to the next.
inline KrylovResult fgmres(const LinearOperator& a, const LinearOperator& m, const Vector& b,
                           const KrylovOptions& opts) {
  return detail::gmres_impl(a, m, b, opts, true);
}

inline KrylovResult fgmres(const LinearOperator& a, const LinearOperator& m, const Vector& b, double tol,
                           int max_it) {
  KrylovOptions o;
  o.tol = tol;
  o.max_it = max_it;
  return fgmres(a, m, b, o);
}

//! Symmetric part of a square dense matrix.
inline Matrix sym(const Matrix& a) { return 0.5 * (a + a.transpose()); }

}  // namespace latfeti
