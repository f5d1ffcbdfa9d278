#pragma once

// Pulled-back elasticity fields, their polynomial fits, reference lookup tables and
// per-cell stiffness/load assembly.

#include <algorithm>
#include <array>
#include <vector>

#include "latfeti/geometry.hpp"

namespace latfeti {

//! d²×d² operator on displacement gradients, index i*d + a (component i, derivative a).
using GradTensor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, 9, 9>;

struct Material {
  double E = 5000.0;
  double nu = 0.4;

  void validate() const {
    if (!(E > 0.0)) throw ValidationError("material.E", "must be positive");
    if (!(nu > -1.0 && nu < 0.5)) throw ValidationError("material.nu", "must lie in (-1, 0.5)");
  }
  double lambda() const { return E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu)); }
  double mu() const { return E / (2.0 * (1.0 + nu)); }

  //! Isotropic C on gradients; plane strain in 2D.
  GradTensor gradient_tensor(int d) const {
    GradTensor c = GradTensor::Zero(d * d, d * d);
    const double l = lambda(), m = mu();
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        for (int k = 0; k < d; ++k)
          for (int q = 0; q < d; ++q)
            c(i * d + j, k * d + q) = l * (i == j) * (k == q) + m * ((i == k) * (j == q) + (i == q) * (j == k));
    return c;
  }
};

//! Ĉ = det J · (I ⊗ J⁻¹) C (I ⊗ J⁻¹)ᵀ, i.e. the elasticity form written on reference gradients.
inline GradTensor pull_back(const SmallMatrix& jac, const GradTensor& c) {
  const int d = int(jac.rows());
  const double det = jac.determinant();
  if (!(det > 0.0)) throw DegenerateJacobian("non-positive det J = " + std::to_string(det));
  const SmallMatrix inv = jac.inverse();
  GradTensor q = GradTensor::Zero(d * d, d * d);
  for (int i = 0; i < d; ++i) q.block(i * d, i * d, d, d) = inv;
  return det * (q * c * q.transpose());
}

inline GradTensor pulled_back_tensor(const MacroMapping& m, const Material& mat, const Point& xi) {
  return pull_back(m.evaluate(xi).jacobian, mat.gradient_tensor(m.dim()));
}

// Packed upper triangle of a symmetric D×D tensor, row by row.
inline int packed_size(int d) { return d * d * (d * d + 1) / 2; }

inline Eigen::RowVectorXd pack(const GradTensor& t) {
  const int n = int(t.rows());
  Eigen::RowVectorXd out(n * (n + 1) / 2);
  int c = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) out(c++) = t(i, j);
  return out;
}

template <class Row>
GradTensor unpack(const Row& packed, int d) {
  const int n = d * d;
  GradTensor t(n, n);
  int c = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) t(i, j) = t(j, i) = packed(c++);
  return t;
}

//! Tensor-product Lagrange basis at Chebyshev-Gauss-Lobatto nodes on [0,1]^d.
class FitBasis {
 public:
  FitBasis(int dim, int degree) : dim_(dim), degree_(degree), nodes_(cgl_nodes(degree)) {
    if (degree < 0 || degree > 8) throw ValidationError("solver.fit_degree", "must be in [0, 8]");
  }
  int dim() const { return dim_; }
  int degree() const { return degree_; }
  int size() const {
    int n = 1;
    for (int k = 0; k < dim_; ++k) n *= degree_ + 1;
    return n;
  }
  Point node(int q) const {
    const int n = degree_ + 1;
    Point p(dim_);
    for (int k = 0; k < dim_; ++k, q /= n) p(k) = nodes_[q % n];
    return p;
  }
  void values(const Point& xi, double* out) const {
    double v[3][9];
    for (int k = 0; k < dim_; ++k) lagrange_1d(nodes_, xi(k), v[k], nullptr);
    const int n = degree_ + 1;
    for (int q = 0, sz = size(); q < sz; ++q) {
      double val = 1.0;
      for (int k = 0, r = q; k < dim_; ++k, r /= n) val *= v[k][r % n];
      out[q] = val;
    }
  }

 private:
  int dim_, degree_;
  std::vector<double> nodes_;
};

//! Interpolation coefficients of Ĉ: one packed tensor per fit node (n_A × n_C).
struct PolyCoeffs {
  Index cell = 0;
  int dim = 2;
  int degree = 2;
  Matrix values;

  Index n_A() const { return values.rows(); }
  Index n_C() const { return values.cols(); }

  GradTensor reconstruct(const FitBasis& basis, const Point& xi) const {
    std::vector<double> n(basis.size());
    basis.values(xi, n.data());
    Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(values.cols());
    for (Index q = 0; q < values.rows(); ++q) acc += n[q] * values.row(q);
    return unpack(acc, dim);
  }

  //! Row-major flattening used as the greedy snapshot.
  Vector flattened() const {
    Vector f(values.size());
    for (Index q = 0; q < values.rows(); ++q) f.segment(q * values.cols(), values.cols()) = values.row(q).transpose();
    return f;
  }
};

inline PolyCoeffs fit_poly_coeffs(const MacroMapping& m, const Material& mat, int degree, Index cell = 0) {
  const FitBasis basis(m.dim(), degree);
  const GradTensor c = mat.gradient_tensor(m.dim());
  PolyCoeffs a;
  a.cell = cell;
  a.dim = m.dim();
  a.degree = degree;
  a.values.resize(basis.size(), packed_size(m.dim()));
  for (int q = 0; q < basis.size(); ++q) a.values.row(q) = pack(pull_back(m.evaluate(basis.node(q)).jacobian, c));
  return a;
}

// ---------------------------------------------------------------------------
// Lookup table

//! Integrals ∫ N_q ∂_a N_m ∂_b N_n dξ over the reference cell for node pairs m ≥ n.
class LookupTable {
 public:
  LookupTable(const ReferenceCell& rc, int fit_degree)
      : dim_(rc.dim()), n_nodes_(rc.n_nodes()), basis_(rc.dim(), fit_degree) {
    build_pattern(rc);
    const int d = dim_, d2 = d * d, na = basis_.size();
    entries_ = Matrix::Zero(Index(pairs_.size()), Index(na) * d2);

    const int npts = rc.degree() + (fit_degree + 1) / 2 + 1;
    const Rule1D g = gauss_legendre(npts);
    const int npe = rc.nodes_per_element();
    const double jac_scale = rc.resolution();  // dξ = dη / M
    double vol = 1.0;
    for (int k = 0; k < d; ++k) vol /= rc.resolution();

    std::vector<double> nq(na), n(npe), dn(npe * d);
    std::vector<Index> local_pairs(std::size_t(npe) * npe);
    int nqp = 1;
    for (int k = 0; k < d; ++k) nqp *= npts;
    for (Index e = 0; e < rc.n_elements(); ++e) {
      const int* nodes = rc.element_nodes(e);
      for (int a = 0; a < npe; ++a)
        for (int b = 0; b < npe; ++b)
          local_pairs[a * npe + b] = nodes[a] >= nodes[b] ? pair_index(nodes[a], nodes[b]) : -1;
      for (int ip = 0; ip < nqp; ++ip) {
        Point eta(d);
        double w = vol;
        for (int k = 0, r = ip; k < d; ++k, r /= npts) {
          eta(k) = g.points[r % npts];
          w *= g.weights[r % npts];
        }
        rc.shape(eta, n.data(), dn.data());
        for (double& v : dn) v *= jac_scale;
        basis_.values(rc.element_xi(e, eta), nq.data());
        for (int a = 0; a < npe; ++a)
          for (int b = 0; b < npe; ++b) {
            const Index p = local_pairs[a * npe + b];
            if (p < 0) continue;
            const double* dm = &dn[a * d];
            const double* dnn = &dn[b * d];
            double* row = &entries_(p, 0);
            const Index ld = entries_.rows();
            for (int q = 0; q < na; ++q) {
              const double coef = w * nq[q];
              for (int al = 0; al < d; ++al)
                for (int be = 0; be < d; ++be) row[(Index(q) * d2 + al * d + be) * ld] += coef * (dm[al] * dnn[be]);
            }
          }
      }
    }
  }

  int dim() const { return dim_; }
  Index n_nodes() const { return n_nodes_; }
  int n_A() const { return basis_.size(); }
  const FitBasis& basis() const { return basis_; }
  Index n_pairs() const { return Index(pairs_.size()); }
  const std::vector<std::pair<int, int>>& pairs() const { return pairs_; }
  //! n_pairs × (n_A·d²), column q·d² + a·d + b.
  const Matrix& entries() const { return entries_; }

  Index pair_index(int m, int n) const {
    const auto first = col_.begin() + row_ptr_[m], last = col_.begin() + row_ptr_[m + 1];
    const auto it = std::lower_bound(first, last, n);
    return (it != last && *it == n) ? row_ptr_[m] + (it - first) : -1;
  }

  //! ∫ N_q ∂_a N_i ∂_b N_j for any node order (exchange symmetry).
  double entry(int q, int i, int a, int j, int b) const {
    if (i < j) return entry(q, j, b, i, a);
    const Index p = pair_index(i, j);
    return p < 0 ? 0.0 : entries_(p, Index(q) * dim_ * dim_ + a * dim_ + b);
  }

  std::size_t bytes() const { return std::size_t(entries_.size()) * sizeof(double); }

 private:
  void build_pattern(const ReferenceCell& rc) {
    std::vector<std::vector<int>> nb(rc.n_nodes());
    const int npe = rc.nodes_per_element();
    for (Index e = 0; e < rc.n_elements(); ++e) {
      const int* nodes = rc.element_nodes(e);
      for (int a = 0; a < npe; ++a)
        for (int b = 0; b < npe; ++b)
          if (nodes[a] >= nodes[b]) nb[nodes[a]].push_back(nodes[b]);
    }
    row_ptr_.assign(rc.n_nodes() + 1, 0);
    for (Index m = 0; m < rc.n_nodes(); ++m) {
      auto& v = nb[m];
      std::sort(v.begin(), v.end());
      v.erase(std::unique(v.begin(), v.end()), v.end());
      row_ptr_[m + 1] = row_ptr_[m] + Index(v.size());
      for (int n : v) {
        col_.push_back(n);
        pairs_.emplace_back(int(m), n);
      }
    }
  }

  int dim_;
  Index n_nodes_;
  FitBasis basis_;
  std::vector<Index> row_ptr_;
  std::vector<int> col_;
  std::vector<std::pair<int, int>> pairs_;
  Matrix entries_;
};

//! (n_A·d²) × d² matrix C with C[(q,a,b),(i,k)] = Ĉ_q[(i,a),(k,b)].
inline Matrix contraction_matrix(const PolyCoeffs& coeffs) {
  const int d = coeffs.dim, d2 = d * d;
  Matrix c(coeffs.n_A() * d2, d2);
  for (Index q = 0; q < coeffs.n_A(); ++q) {
    const GradTensor t = unpack(coeffs.values.row(q), d);
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b)
        for (int i = 0; i < d; ++i)
          for (int k = 0; k < d; ++k) c(q * d2 + a * d + b, i * d + k) = t(i * d + a, k * d + b);
  }
  return c;
}

inline void check_compatible(const LookupTable& t, const PolyCoeffs& a) {
  if (a.dim != t.dim() || a.n_A() != t.n_A() || a.n_C() != packed_size(t.dim()))
    throw DimensionMismatch("lookup table and polynomial coefficients disagree in size");
}

//! Node-pair d×d stiffness blocks (row-major i*d + k) of a cell: one dense product.
inline Matrix pair_blocks(const LookupTable& t, const PolyCoeffs& a) {
  check_compatible(t, a);
  return t.entries() * contraction_matrix(a);
}

//! Cell stiffness in natural ordering (dof = node·d + component).
inline SparseSymMatrix assemble_local_stiffness(const LookupTable& t, const PolyCoeffs& a) {
  const Matrix blocks = pair_blocks(t, a);
  const int d = t.dim();
  std::vector<Triplet> trip;
  trip.reserve(std::size_t(blocks.size()));
  for (Index p = 0; p < t.n_pairs(); ++p) {
    const auto [m, n] = t.pairs()[p];
    for (int i = 0; i < d; ++i)
      for (int k = 0; k < d; ++k) {
        if (m == n && k > i) continue;
        trip.emplace_back(m * d + i, n * d + k, blocks(p, i * d + k));
      }
  }
  return SparseSymMatrix(t.n_nodes() * d, trip);
}

//! K·X without forming K, contracting the table with the coefficients on the fly.
class MatrixFreeStiffness {
 public:
  MatrixFreeStiffness(const LookupTable& t, const PolyCoeffs& a) : table_(&t), blocks_(pair_blocks(t, a)) {}

  Index size() const { return table_->n_nodes() * table_->dim(); }

  Matrix operator*(const Matrix& x) const {
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const int d = table_->dim();
    // Row-major copies keep the per-DOF row updates contiguous for wide blocks.
    const RowMajor xr = x;
    RowMajor y = RowMajor::Zero(x.rows(), x.cols());
    for (Index p = 0; p < table_->n_pairs(); ++p) {
      const auto [m, n] = table_->pairs()[p];
      for (int i = 0; i < d; ++i)
        for (int k = 0; k < d; ++k) {
          const double v = blocks_(p, i * d + k);
          y.row(m * d + i) += v * xr.row(n * d + k);
          if (m != n) y.row(n * d + k) += v * xr.row(m * d + i);
        }
    }
    return y;
  }
  Vector operator*(const Vector& x) const { return (*this) * Matrix(x); }

 private:
  const LookupTable* table_;
  Matrix blocks_;
};

// ---------------------------------------------------------------------------
// Quadrature oracle and loads

//! Physical-gradient assembly with the exact mapping, no lookup tables.
inline SparseSymMatrix assemble_stiffness_quadrature(const ReferenceCell& rc, const MacroMapping& m,
                                                     const Material& mat, int extra_points = 6) {
  const int d = rc.dim(), npe = rc.nodes_per_element();
  const int npts = rc.degree() + extra_points;
  const Rule1D g = gauss_legendre(npts);
  const GradTensor c = mat.gradient_tensor(d);
  double vol = 1.0;
  for (int k = 0; k < d; ++k) vol /= rc.resolution();
  int nqp = 1;
  for (int k = 0; k < d; ++k) nqp *= npts;

  std::vector<Triplet> trip;
  std::vector<double> n(npe), dn(npe * d);
  Matrix ke(npe * d, npe * d), bmat(d * d, npe * d);
  for (Index e = 0; e < rc.n_elements(); ++e) {
    ke.setZero();
    for (int ip = 0; ip < nqp; ++ip) {
      Point eta(d);
      double w = vol;
      for (int k = 0, r = ip; k < d; ++k, r /= npts) {
        eta(k) = g.points[r % npts];
        w *= g.weights[r % npts];
      }
      rc.shape(eta, n.data(), dn.data());
      const auto ev = m.evaluate(rc.element_xi(e, eta));
      const double det = ev.jacobian.determinant();
      if (!(det > 0.0)) throw DegenerateJacobian("quadrature assembly: non-positive det J");
      const SmallMatrix inv = ev.jacobian.inverse();
      // Physical gradient ∂N/∂x_j = Σ_a ∂N/∂ξ_a J⁻¹_{aj}; B maps nodal values to ∂u_i/∂x_j.
      bmat.setZero();
      for (int a = 0; a < npe; ++a)
        for (int j = 0; j < d; ++j) {
          double gx = 0.0;
          for (int al = 0; al < d; ++al) gx += dn[a * d + al] * rc.resolution() * inv(al, j);
          for (int i = 0; i < d; ++i) bmat(i * d + j, a * d + i) = gx;
        }
      ke.noalias() += (w * det) * bmat.transpose() * c * bmat;
    }
    const int* nodes = rc.element_nodes(e);
    for (int a = 0; a < npe; ++a)
      for (int b = 0; b < npe; ++b)
        for (int i = 0; i < d; ++i)
          for (int k = 0; k < d; ++k) {
            const Index r = Index(nodes[a]) * d + i, col = Index(nodes[b]) * d + k;
            if (r >= col) trip.emplace_back(r, col, ke(a * d + i, b * d + k));
          }
  }
  return SparseSymMatrix(rc.n_dofs(), trip);
}

struct Traction {
  int face = 0;
  Point value;
};

struct CellLoads {
  Point body_force;  // empty: none
  std::vector<Traction> tractions;
  bool empty() const { return body_force.size() == 0 && tractions.empty(); }
};

//! Consistent nodal loads by direct quadrature. `exterior[f]` tells whether cell face f lies on
//! the structure boundary; tractions on other faces are rejected.
inline Vector assemble_local_rhs(const ReferenceCell& rc, const MacroMapping& m, const CellLoads& loads,
                                 const std::array<bool, 6>& exterior = {true, true, true, true, true, true}) {
  const int d = rc.dim(), npe = rc.nodes_per_element(), M = rc.resolution();
  Vector f = Vector::Zero(rc.n_dofs());
  if (loads.empty()) return f;
  const int npts = rc.degree() + 3;
  const Rule1D g = gauss_legendre(npts);
  std::vector<double> n(npe);

  if (loads.body_force.size() && loads.body_force.norm() > 0.0) {
    if (loads.body_force.size() != d) throw DimensionMismatch("body force dimension");
    double vol = 1.0;
    for (int k = 0; k < d; ++k) vol /= M;
    int nqp = 1;
    for (int k = 0; k < d; ++k) nqp *= npts;
    for (Index e = 0; e < rc.n_elements(); ++e) {
      const int* nodes = rc.element_nodes(e);
      for (int ip = 0; ip < nqp; ++ip) {
        Point eta(d);
        double w = vol;
        for (int k = 0, r = ip; k < d; ++k, r /= npts) {
          eta(k) = g.points[r % npts];
          w *= g.weights[r % npts];
        }
        rc.shape(eta, n.data(), nullptr);
        const double det = m.evaluate(rc.element_xi(e, eta)).jacobian.determinant();
        for (int a = 0; a < npe; ++a)
          for (int i = 0; i < d; ++i) f(Index(nodes[a]) * d + i) += w * det * n[a] * loads.body_force(i);
      }
    }
  }

  for (const auto& t : loads.tractions) {
    if (t.face < 0 || t.face >= 2 * d) throw ValidationError("bcs.neumann.face", "invalid face");
    if (!exterior[t.face]) throw FaceNotOnBoundary(std::string("traction on interior face ") + face_name(t.face));
    if (t.value.size() != d) throw DimensionMismatch("traction dimension");
    const int axis = t.face / 2;
    const int side_voxel = t.face % 2 ? M - 1 : 0;
    const double side_eta = t.face % 2 ? 1.0 : 0.0;
    int tang[2], nt = 0;
    for (int k = 0; k < d; ++k)
      if (k != axis) tang[nt++] = k;
    int nqp = 1;
    for (int k = 0; k < nt; ++k) nqp *= npts;
    for (Index e = 0; e < rc.n_elements(); ++e) {
      if (rc.voxel(e)[axis] != side_voxel) continue;
      const int* nodes = rc.element_nodes(e);
      for (int ip = 0; ip < nqp; ++ip) {
        Point eta(d);
        eta(axis) = side_eta;
        double w = 1.0;
        for (int k = 0, r = ip; k < nt; ++k, r /= npts) {
          eta(tang[k]) = g.points[r % npts];
          w *= g.weights[r % npts] / M;
        }
        rc.shape(eta, n.data(), nullptr);
        const SmallMatrix jac = m.evaluate(rc.element_xi(e, eta)).jacobian;
        double measure;
        if (d == 2) {
          measure = jac.col(tang[0]).norm();
        } else {
          const Eigen::Vector3d u = jac.col(tang[0]), v = jac.col(tang[1]);
          measure = u.cross(v).norm();
        }
        for (int a = 0; a < npe; ++a)
          for (int i = 0; i < d; ++i) f(Index(nodes[a]) * d + i) += w * measure * n[a] * t.value(i);
      }
    }
  }
  return f;
}

//! Columns: d translations, then linearized rotations about the origin, at physical node positions.
inline Matrix rigid_body_modes(const ReferenceCell& rc, const MacroMapping& m) {
  const int d = rc.dim();
  const int nrot = d == 2 ? 1 : 3;
  Matrix r = Matrix::Zero(rc.n_dofs(), d + nrot);
  for (Index n = 0; n < rc.n_nodes(); ++n) {
    const Point x = m.evaluate(rc.xi(n)).x;
    for (int i = 0; i < d; ++i) r(n * d + i, i) = 1.0;
    if (d == 2) {
      r(n * 2 + 0, 2) = -x(1);
      r(n * 2 + 1, 2) = x(0);
    } else {
      for (int k = 0; k < 3; ++k) {
        Eigen::Vector3d axis = Eigen::Vector3d::Zero();
        axis(k) = 1.0;
        const Eigen::Vector3d u = axis.cross(Eigen::Vector3d(x(0), x(1), x(2)));
        for (int i = 0; i < 3; ++i) r(n * 3 + i, 3 + k) = u(i);
      }
    }
  }
  return r;
}

}  // namespace latfeti
