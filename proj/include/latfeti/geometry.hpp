#pragma once

// Reference unit cell meshes and Bézier macro mappings placing copies of it in space.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <queue>
#include <string>
#include <vector>

#include "latfeti/errors.hpp"
#include "latfeti/linalg.hpp"
#include "latfeti/quadrature.hpp"

namespace latfeti {

using Point = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, 3, 1>;
using SmallMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, 3, 3>;
using Lattice = std::array<int, 3>;
using GridDims = std::array<int, 3>;

enum class NodeClass : std::uint8_t { Interior, Face, Corner };

//! Face index 2*axis + side, side 0 at ξ_axis = 0.
inline const char* face_name(int face) {
  static const char* names[] = {"xmin", "xmax", "ymin", "ymax", "zmin", "zmax"};
  return names[face];
}

inline int face_from_name(const std::string& s) {
  for (int f = 0; f < 6; ++f)
    if (s == face_name(f)) return f;
  return -1;
}

// ---------------------------------------------------------------------------
// Reference cell

struct CellPattern {
  std::string name;
  int degree = 1;
  int refinement = 0;
  double strut_thickness = 0.25;
};

class ReferenceCell {
 public:
  int dim() const { return dim_; }
  int degree() const { return degree_; }
  //! Voxels per direction.
  int resolution() const { return res_; }
  //! Lattice points per direction minus one.
  int extent() const { return res_ * degree_; }
  const std::string& pattern() const { return pattern_; }

  Index n_nodes() const { return Index(lattice_.size()); }
  Index n_dofs() const { return dim_ * n_nodes(); }
  Index n_elements() const { return Index(voxels_.size()); }
  int nodes_per_element() const { return npe_; }

  const Lattice& lattice(Index node) const { return lattice_[node]; }
  NodeClass node_class(Index node) const { return class_[node]; }
  const Lattice& voxel(Index e) const { return voxels_[e]; }
  //! Element nodes in tensor order, first local direction fastest.
  const int* element_nodes(Index e) const { return conn_.data() + e * npe_; }

  Point xi(Index node) const {
    Point p(dim_);
    for (int k = 0; k < dim_; ++k) p(k) = double(lattice_[node][k]) / extent();
    return p;
  }

  //! Node at an integer lattice position, or -1.
  int node_at(const Lattice& l) const {
    for (int k = 0; k < dim_; ++k)
      if (l[k] < 0 || l[k] > extent()) return -1;
    return lookup_[linear(l)];
  }

  //! Nodes with ξ_axis at the face's side, sorted by their remaining lattice coordinates.
  std::vector<int> face_nodes(int face) const {
    const int axis = face / 2, val = (face % 2) ? extent() : 0;
    std::vector<int> out;
    for (Index n = 0; n < n_nodes(); ++n)
      if (lattice_[n][axis] == val) out.push_back(int(n));
    return out;
  }

  //! Corner nodes ordered by vertex bit pattern (bit k set: ξ_k = 1).
  std::vector<int> corner_nodes() const {
    std::vector<int> out;
    for (int v = 0; v < (1 << dim_); ++v) {
      Lattice l{0, 0, 0};
      for (int k = 0; k < dim_; ++k) l[k] = (v >> k) & 1 ? extent() : 0;
      out.push_back(node_at(l));
    }
    return out;
  }

  //! Element shape functions and their η-derivatives (η ∈ [0,1]^d local to the element).
  void shape(const Point& eta, double* n, double* dn) const {
    double v[3][3], d[3][3];
    for (int k = 0; k < dim_; ++k) lagrange_1d(nodes1d_, eta(k), v[k], d[k]);
    const int q = degree_ + 1;
    for (int a = 0; a < npe_; ++a) {
      int idx[3] = {a % q, (a / q) % q, a / (q * q)};
      double val = 1.0;
      for (int k = 0; k < dim_; ++k) val *= v[k][idx[k]];
      n[a] = val;
      if (dn)
        for (int j = 0; j < dim_; ++j) {
          double g = 1.0;
          for (int k = 0; k < dim_; ++k) g *= (k == j) ? d[k][idx[k]] : v[k][idx[k]];
          dn[a * dim_ + j] = g;
        }
    }
  }

  //! ξ of an element-local point.
  Point element_xi(Index e, const Point& eta) const {
    Point p(dim_);
    for (int k = 0; k < dim_; ++k) p(k) = (voxels_[e][k] + eta(k)) / res_;
    return p;
  }

  friend ReferenceCell build_reference_cell(const CellPattern& pattern);

 private:
  Index linear(const Lattice& l) const {
    const Index s = extent() + 1;
    return l[0] + s * (l[1] + (dim_ == 3 ? s * l[2] : 0));
  }

  int dim_ = 2, degree_ = 1, res_ = 1, npe_ = 4;
  std::string pattern_;
  std::vector<double> nodes1d_;
  std::vector<Lattice> lattice_;
  std::vector<NodeClass> class_;
  std::vector<Lattice> voxels_;
  std::vector<int> conn_;
  std::vector<int> lookup_;
};

namespace detail {

inline int pattern_dim(const std::string& name) {
  if (name == "solid2d" || name == "cross-hollow-square2d" || name == "plus2d") return 2;
  if (name == "solid3d" || name == "bcc3d") return 3;
  throw UnknownPattern("unknown cell pattern '" + name + "'");
}

inline int pattern_base_resolution(const std::string& name) {
  if (name == "cross-hollow-square2d" || name == "plus2d") return 8;
  if (name == "bcc3d") return 4;
  return 1;
}

// Distance from p to the segment [a, b].
inline double segment_distance(const Eigen::Vector3d& p, const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  const Eigen::Vector3d ab = b - a;
  const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

inline bool voxel_active(const std::string& name, int m, double t, int i, int j, int k) {
  if (name == "solid2d" || name == "solid3d") return true;
  // Struts on the cell boundary are shared with the neighbour, so each side carries half.
  const int frame = std::max(1, int(std::lround(t * m / 2.0)));
  auto near_side = [&](int c) { return c < frame || c >= m - frame; };
  if (name == "cross-hollow-square2d") {
    const int band = std::max(1, int(std::floor(t * m / 2.0 + 1e-12)));
    return near_side(i) || near_side(j) || std::abs(i - j) <= band || std::abs(i + j - (m - 1)) <= band;
  }
  if (name == "plus2d") {
    const int half = std::max(1, int(std::lround(t * m / 2.0)));
    auto central = [&](int c) { return c >= m / 2 - half && c < m / 2 + half; };
    return near_side(i) || near_side(j) || central(i) || central(j);
  }
  if (name == "bcc3d") {
    const int edges = int(near_side(i)) + int(near_side(j)) + int(near_side(k));
    if (edges >= 2) return true;
    const double h = 1.0 / m;
    const double radius = std::max(t / 2.0, 0.85 * h);
    const Eigen::Vector3d c((i + 0.5) * h, (j + 0.5) * h, (k + 0.5) * h);
    const Eigen::Vector3d mid(0.5, 0.5, 0.5);
    for (int v = 0; v < 8; ++v) {
      const Eigen::Vector3d corner(v & 1, (v >> 1) & 1, (v >> 2) & 1);
      if (segment_distance(c, mid, corner) <= radius) return true;
    }
    return false;
  }
  throw UnknownPattern("unknown cell pattern '" + name + "'");
}

}  // namespace detail

//! Patterns: solid2d, cross-hollow-square2d, plus2d (2D); solid3d, bcc3d (3D).
inline ReferenceCell build_reference_cell(const CellPattern& pat) {
  ReferenceCell rc;
  rc.dim_ = detail::pattern_dim(pat.name);
  if (pat.degree != 1 && pat.degree != 2) throw ValidationError("cell.degree", "must be 1 or 2");
  if (pat.refinement < 0 || pat.refinement > 8) throw ValidationError("cell.refinement", "must be in [0, 8]");
  if (!(pat.strut_thickness > 0.0 && pat.strut_thickness < 1.0))
    throw ValidationError("cell.strut_thickness", "must be in (0, 1)");
  rc.pattern_ = pat.name;
  rc.degree_ = pat.degree;
  rc.res_ = detail::pattern_base_resolution(pat.name) << pat.refinement;
  rc.npe_ = rc.dim_ == 2 ? (pat.degree + 1) * (pat.degree + 1) : (pat.degree + 1) * (pat.degree + 1) * (pat.degree + 1);
  rc.nodes1d_ = equispaced_nodes(pat.degree);

  const int m = rc.res_, d = rc.dim_, p = rc.degree_;
  const int mz = d == 3 ? m : 1;
  std::vector<char> active(std::size_t(m) * m * mz, 0);
  auto vid = [&](int i, int j, int k) { return std::size_t(i) + std::size_t(m) * (j + std::size_t(m) * k); };
  for (int k = 0; k < mz; ++k)
    for (int j = 0; j < m; ++j)
      for (int i = 0; i < m; ++i)
        if (detail::voxel_active(pat.name, m, pat.strut_thickness, i, j, k)) active[vid(i, j, k)] = 1;

  // Single face-connected component.
  {
    std::vector<char> seen(active.size(), 0);
    std::size_t n_active = std::count(active.begin(), active.end(), 1), reached = 0;
    auto start = std::find(active.begin(), active.end(), 1) - active.begin();
    std::queue<std::size_t> q;
    q.push(start);
    seen[start] = 1;
    while (!q.empty()) {
      const std::size_t v = q.front();
      q.pop();
      ++reached;
      const int i = int(v % m), j = int((v / m) % m), k = int(v / (std::size_t(m) * m));
      const int nb[6][3] = {{i - 1, j, k}, {i + 1, j, k}, {i, j - 1, k}, {i, j + 1, k}, {i, j, k - 1}, {i, j, k + 1}};
      for (int f = 0; f < 2 * d; ++f) {
        const auto& c = nb[f];
        if (c[0] < 0 || c[0] >= m || c[1] < 0 || c[1] >= m || c[2] < 0 || c[2] >= mz) continue;
        const auto w = vid(c[0], c[1], c[2]);
        if (active[w] && !seen[w]) seen[w] = 1, q.push(w);
      }
    }
    if (reached != n_active) throw std::logic_error("reference cell pattern is not connected");
  }

  const int s = m * p + 1;
  const std::size_t n_lat = std::size_t(s) * s * (d == 3 ? s : 1);
  std::vector<char> used(n_lat, 0);
  const int q = p + 1;
  for (int k = 0; k < mz; ++k)
    for (int j = 0; j < m; ++j)
      for (int i = 0; i < m; ++i) {
        if (!active[vid(i, j, k)]) continue;
        rc.voxels_.push_back({i, j, k});
        for (int a = 0; a < rc.npe_; ++a) {
          const Lattice l{i * p + a % q, j * p + (a / q) % q, d == 3 ? k * p + a / (q * q) : 0};
          used[rc.linear(l)] = 1;
        }
      }

  rc.lookup_.assign(n_lat, -1);
  for (std::size_t idx = 0; idx < n_lat; ++idx) {
    if (!used[idx]) continue;
    const Lattice l{int(idx % s), int((idx / s) % s), d == 3 ? int(idx / (std::size_t(s) * s)) : 0};
    rc.lookup_[idx] = int(rc.lattice_.size());
    rc.lattice_.push_back(l);
    int on_boundary = 0;
    for (int c = 0; c < d; ++c) on_boundary += (l[c] == 0 || l[c] == s - 1);
    rc.class_.push_back(on_boundary == d ? NodeClass::Corner : on_boundary > 0 ? NodeClass::Face : NodeClass::Interior);
  }

  rc.conn_.reserve(rc.voxels_.size() * rc.npe_);
  for (const auto& v : rc.voxels_)
    for (int a = 0; a < rc.npe_; ++a) {
      const Lattice l{v[0] * p + a % q, v[1] * p + (a / q) % q, d == 3 ? v[2] * p + a / (q * q) : 0};
      rc.conn_.push_back(rc.lookup_[rc.linear(l)]);
    }

  // Every vertex hosts a node; opposite faces carry the same nodes.
  for (int c : rc.corner_nodes())
    if (c < 0) throw std::logic_error("reference cell pattern misses a corner");
  for (int axis = 0; axis < d; ++axis) {
    const auto lo = rc.face_nodes(2 * axis), hi = rc.face_nodes(2 * axis + 1);
    bool ok = lo.size() == hi.size();
    for (std::size_t n = 0; ok && n < lo.size(); ++n)
      for (int c = 0; c < d; ++c)
        if (c != axis && rc.lattice_[lo[n]][c] != rc.lattice_[hi[n]][c]) ok = false;
    if (!ok) throw std::logic_error("reference cell faces do not match under translation");
  }
  return rc;
}

// ---------------------------------------------------------------------------
// Bézier mappings

namespace detail {

inline double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

inline void bernstein(int p, double t, double* b, double* db) {
  for (int i = 0; i <= p; ++i) {
    b[i] = binomial(p, i) * std::pow(t, i) * std::pow(1.0 - t, p - i);
    if (!db) continue;
    double d = 0.0;
    if (p > 0) {
      const double left = i > 0 ? binomial(p - 1, i - 1) * std::pow(t, i - 1) * std::pow(1.0 - t, p - i) : 0.0;
      const double right = i < p ? binomial(p - 1, i) * std::pow(t, i) * std::pow(1.0 - t, p - 1 - i) : 0.0;
      d = p * (left - right);
    }
    db[i] = d;
  }
}

}  // namespace detail

//! Tensor-product (rational) Bézier map [0,1]^d -> R^d. Control points are columns,
//! first parametric direction fastest.
class MacroMapping {
 public:
  struct Eval {
    Point x;
    SmallMatrix jacobian;
  };

  MacroMapping() = default;
  MacroMapping(int dim, std::array<int, 3> degree, Matrix control, Vector weights)
      : dim_(dim), degree_(degree), control_(std::move(control)), weights_(std::move(weights)) {
    if (dim != 2 && dim != 3) throw DimensionMismatch("mapping: dimension must be 2 or 3");
    if (dim == 2) degree_[2] = 0;
    Index n = 1;
    for (int k = 0; k < dim; ++k) {
      if (degree_[k] < 1 || degree_[k] > 2) throw ValidationError("macro.degree", "Bézier degree must be 1 or 2");
      n *= degree_[k] + 1;
    }
    if (control_.rows() != dim || control_.cols() != n || weights_.size() != n)
      throw DimensionMismatch("mapping: control net has wrong size");
    if (!(weights_.minCoeff() > 0.0)) throw ValidationError("macro.weights", "weights must be positive");
  }

  static MacroMapping affine(const Point& origin, const Point& size) {
    const int d = int(origin.size());
    Matrix c(d, 1 << d);
    for (int v = 0; v < (1 << d); ++v)
      for (int k = 0; k < d; ++k) c(k, v) = origin(k) + ((v >> k) & 1 ? size(k) : 0.0);
    return MacroMapping(d, {1, 1, 1}, c, Vector::Ones(1 << d));
  }

  static MacroMapping identity(int d) { return affine(Point::Zero(d), Point::Ones(d)); }

  int dim() const { return dim_; }
  const std::array<int, 3>& degree() const { return degree_; }
  const Matrix& control() const { return control_; }
  const Vector& weights() const { return weights_; }
  bool is_rational() const { return (weights_.array() != weights_(0)).any(); }

  Eval evaluate(const Point& xi) const {
    double b[3][3], db[3][3];
    for (int k = 0; k < dim_; ++k) detail::bernstein(degree_[k], xi(k), b[k], db[k]);
    const int q0 = degree_[0] + 1, q1 = degree_[1] + 1;
    Eigen::Vector3d pw = Eigen::Vector3d::Zero(), dw = Eigen::Vector3d::Zero();
    Eigen::Matrix3d dpw = Eigen::Matrix3d::Zero();
    double w = 0.0;
    for (Index c = 0; c < control_.cols(); ++c) {
      const int idx[3] = {int(c % q0), int((c / q0) % q1), int(c / (q0 * q1))};
      double val = 1.0;
      double grad[3];
      for (int k = 0; k < dim_; ++k) val *= b[k][idx[k]];
      for (int j = 0; j < dim_; ++j) {
        double g = 1.0;
        for (int k = 0; k < dim_; ++k) g *= (k == j) ? db[k][idx[k]] : b[k][idx[k]];
        grad[j] = g;
      }
      const double wc = weights_(c);
      w += wc * val;
      for (int i = 0; i < dim_; ++i) {
        pw(i) += wc * val * control_(i, c);
        for (int j = 0; j < dim_; ++j) dpw(i, j) += wc * grad[j] * control_(i, c);
      }
      for (int j = 0; j < dim_; ++j) dw(j) += wc * grad[j];
    }
    Eval e;
    e.x = pw.head(dim_) / w;
    e.jacobian.resize(dim_, dim_);
    for (int i = 0; i < dim_; ++i)
      for (int j = 0; j < dim_; ++j) e.jacobian(i, j) = (dpw(i, j) - e.x(i) * dw(j)) / w;
    return e;
  }

  //! The same geometry restricted to the box [lo, hi] and reparametrized over [0,1]^d.
  MacroMapping restrict(const Point& lo, const Point& hi) const {
    // Homogeneous control points (w·P, w), subdivided direction by direction via blossoms.
    Matrix hom(dim_ + 1, control_.cols());
    for (Index c = 0; c < control_.cols(); ++c) {
      hom.block(0, c, dim_, 1) = weights_(c) * control_.col(c);
      hom(dim_, c) = weights_(c);
    }
    const int q[3] = {degree_[0] + 1, degree_[1] + 1, degree_[2] + 1};
    for (int k = 0; k < dim_; ++k) {
      const int p = degree_[k];
      const int stride = k == 0 ? 1 : k == 1 ? q[0] : q[0] * q[1];
      Matrix out = hom;
      for (Index c = 0; c < hom.cols(); ++c) {
        const int ik = int((c / stride) % q[k]);
        if (ik != 0) continue;
        // Line of p+1 control points along direction k starting at c.
        for (int j = 0; j <= p; ++j) {
          Matrix level(dim_ + 1, p + 1);
          for (int i = 0; i <= p; ++i) level.col(i) = hom.col(c + Index(i) * stride);
          for (int l = 0; l < p; ++l) {
            const double t = l < p - j ? lo(k) : hi(k);
            for (int i = 0; i < p - l; ++i) level.col(i) = (1.0 - t) * level.col(i) + t * level.col(i + 1);
          }
          out.col(c + Index(j) * stride) = level.col(0);
        }
      }
      hom = out;
    }
    Matrix ctrl(dim_, hom.cols());
    Vector w(hom.cols());
    for (Index c = 0; c < hom.cols(); ++c) {
      w(c) = hom(dim_, c);
      ctrl.col(c) = hom.block(0, c, dim_, 1) / w(c);
    }
    return MacroMapping(dim_, degree_, ctrl, w);
  }

  //! Minimum det J over a (p_k + 2)-point-per-direction sample grid.
  double min_jacobian_det() const {
    double mn = std::numeric_limits<double>::infinity();
    const int n0 = degree_[0] + 2, n1 = degree_[1] + 2, n2 = dim_ == 3 ? degree_[2] + 2 : 1;
    for (int k = 0; k < n2; ++k)
      for (int j = 0; j < n1; ++j)
        for (int i = 0; i < n0; ++i) {
          Point xi(dim_);
          xi(0) = double(i) / (n0 - 1);
          xi(1) = double(j) / (n1 - 1);
          if (dim_ == 3) xi(2) = double(k) / (n2 - 1);
          mn = std::min(mn, evaluate(xi).jacobian.determinant());
        }
    return mn;
  }

  void check_jacobian() const {
    const double d = min_jacobian_det();
    if (!(d > 0.0)) throw DegenerateJacobian("mapping: det J = " + std::to_string(d) + " at a sample point");
  }

  //! Constant Jacobian (sampled) and uniform weights.
  bool is_affine(double tol = 1e-13) const {
    if (is_rational()) return false;
    const SmallMatrix j0 = evaluate(Point::Zero(dim_)).jacobian;
    for (int v = 1; v < (1 << dim_) * 2; ++v) {
      Point xi(dim_);
      for (int k = 0; k < dim_; ++k) xi(k) = ((v >> k) & 1) ? 1.0 : ((v >> dim_) & 1 ? 0.5 : 0.0);
      if ((evaluate(xi).jacobian - j0).norm() > tol * j0.norm()) return false;
    }
    return true;
  }

 private:
  int dim_ = 2;
  std::array<int, 3> degree_{1, 1, 0};
  Matrix control_;
  Vector weights_;
};

// ---------------------------------------------------------------------------
// Macro patch and its subdivision into cells

//! A C0 grid of Bézier elements covering the parameter box [0,1]^d.
class MacroPatch {
 public:
  MacroPatch() = default;

  //! Global control net of (elements_k·p_k + 1) points per direction, first direction fastest.
  static MacroPatch bezier_grid(int dim, std::array<int, 3> degree, std::array<int, 3> elements, const Matrix& control,
                                const Vector& weights) {
    MacroPatch mp;
    mp.dim_ = dim;
    if (dim == 2) degree[2] = 0, elements[2] = 1;
    mp.elements_ = elements;
    int n[3] = {1, 1, 1};
    Index total = 1;
    for (int k = 0; k < dim; ++k) {
      if (elements[k] < 1) throw ValidationError("macro.elements", "element counts must be positive");
      n[k] = elements[k] * degree[k] + 1;
      total *= n[k];
    }
    if (control.rows() != dim || control.cols() != total)
      throw ValidationError("macro.control_points", "expected " + std::to_string(total) + " points of dimension " +
                                                        std::to_string(dim));
    if (weights.size() != total) throw ValidationError("macro.weights", "expected " + std::to_string(total) + " weights");
    const int q0 = degree[0] + 1, q1 = degree[1] + 1, q2 = dim == 3 ? degree[2] + 1 : 1;
    for (int e2 = 0; e2 < elements[2]; ++e2)
      for (int e1 = 0; e1 < elements[1]; ++e1)
        for (int e0 = 0; e0 < elements[0]; ++e0) {
          Matrix c(dim, q0 * q1 * q2);
          Vector w(q0 * q1 * q2);
          for (int i2 = 0; i2 < q2; ++i2)
            for (int i1 = 0; i1 < q1; ++i1)
              for (int i0 = 0; i0 < q0; ++i0) {
                const Index g = (e0 * degree[0] + i0) + n[0] * ((e1 * degree[1] + i1) + Index(n[1]) * (e2 * degree[2] + i2));
                const Index l = i0 + q0 * (i1 + Index(q1) * i2);
                c.col(l) = control.col(g);
                w(l) = weights(g);
              }
          mp.pieces_.emplace_back(dim, degree, c, w);
        }
    return mp;
  }

  static MacroPatch affine_box(const Point& origin, const Point& size) {
    MacroPatch mp;
    mp.dim_ = int(origin.size());
    mp.pieces_.push_back(MacroMapping::affine(origin, size));
    return mp;
  }

  //! Quarter annulus: ξ₁ runs clockwise along the arc from (0, r) to (r, 0), ξ₂ radially
  //! outward, ξ₃ (3D) along z over [0, height].
  static MacroPatch quarter_annulus(double r_in, double r_out, int dim = 2, double height = 1.0) {
    if (!(r_in > 0.0 && r_out > r_in)) throw ValidationError("macro.params", "need 0 < inner_radius < outer_radius");
    const double s = std::sqrt(0.5);
    const int layers = dim == 3 ? 2 : 1;
    Matrix c(dim, 3 * 2 * layers);
    Vector w(3 * 2 * layers);
    for (int l = 0; l < layers; ++l)
      for (int j = 0; j < 2; ++j) {
        const double r = j == 0 ? r_in : r_out;
        const double pts[3][2] = {{0.0, r}, {r, r}, {r, 0.0}};
        for (int i = 0; i < 3; ++i) {
          const int col = i + 3 * (j + 2 * l);
          c(0, col) = pts[i][0];
          c(1, col) = pts[i][1];
          if (dim == 3) c(2, col) = l * height;
          w(col) = i == 1 ? s : 1.0;
        }
      }
    MacroPatch mp;
    mp.dim_ = dim;
    mp.pieces_.emplace_back(dim, std::array<int, 3>{2, 1, 1}, c, w);
    return mp;
  }

  int dim() const { return dim_; }
  const std::array<int, 3>& elements() const { return elements_; }
  const std::vector<MacroMapping>& pieces() const { return pieces_; }

  //! Owning element and local parameter of a global parameter u ∈ [0,1]^d.
  MacroMapping::Eval evaluate(const Point& u) const {
    Point local(dim_);
    Index e = 0, stride = 1;
    for (int k = 0; k < dim_; ++k) {
      const int ne = elements_[k];
      const int ek = std::min(ne - 1, int(std::floor(u(k) * ne)));
      local(k) = u(k) * ne - ek;
      e += ek * stride;
      stride *= ne;
    }
    auto ev = pieces_[e].evaluate(local);
    for (int k = 0; k < dim_; ++k) ev.jacobian.col(k) *= elements_[k];
    return ev;
  }

 private:
  int dim_ = 2;
  std::array<int, 3> elements_{1, 1, 1};
  std::vector<MacroMapping> pieces_;
};

struct CellAdjacency {
  Index first;   // cell whose max face along `axis` ...
  Index second;  // ... touches this cell's min face
  int axis;
};

class MacroModel {
 public:
  int dim() const { return dim_; }
  const GridDims& grid() const { return grid_; }
  Index n_cells() const { return Index(mappings_.size()); }
  const MacroMapping& mapping(Index s) const { return mappings_[s]; }
  const std::vector<MacroMapping>& mappings() const { return mappings_; }
  const std::vector<CellAdjacency>& adjacency() const { return adjacency_; }

  GridDims cell_coords(Index s) const {
    return {int(s % grid_[0]), int((s / grid_[0]) % grid_[1]), int(s / (Index(grid_[0]) * grid_[1]))};
  }
  Index cell_index(const GridDims& c) const { return c[0] + Index(grid_[0]) * (c[1] + Index(grid_[1]) * c[2]); }

  //! True if the given cell face lies on the macro patch boundary.
  bool face_on_boundary(Index s, int face) const {
    const auto c = cell_coords(s);
    const int axis = face / 2;
    return face % 2 ? c[axis] == grid_[axis] - 1 : c[axis] == 0;
  }

  friend MacroModel build_macro_model(const MacroPatch& patch, GridDims cells);

 private:
  int dim_ = 2;
  GridDims grid_{1, 1, 1};
  std::vector<MacroMapping> mappings_;
  std::vector<CellAdjacency> adjacency_;
};

//! Uniform subdivision of the patch into cells; each cell mapping is the Bézier extraction of
//! its parameter box.
inline MacroModel build_macro_model(const MacroPatch& patch, GridDims cells) {
  MacroModel mm;
  const int d = patch.dim();
  mm.dim_ = d;
  if (d == 2) cells[2] = 1;
  for (int k = 0; k < d; ++k) {
    if (cells[k] < 1) throw ValidationError("cells", "cell counts must be positive");
    if (cells[k] % patch.elements()[k] != 0)
      throw ValidationError("cells", "cell count along direction " + std::to_string(k) +
                                         " must be a multiple of the patch element count");
  }
  mm.grid_ = cells;
  const Index n = Index(cells[0]) * cells[1] * cells[2];
  mm.mappings_.reserve(n);
  for (Index s = 0; s < n; ++s) {
    const auto c = mm.cell_coords(s);
    Point lo(d), hi(d);
    Index e = 0, stride = 1;
    for (int k = 0; k < d; ++k) {
      const int ne = patch.elements()[k], nc = cells[k];
      const int ek = c[k] * ne / nc;
      lo(k) = double(c[k] * ne - ek * nc) / nc;
      hi(k) = double((c[k] + 1) * ne - ek * nc) / nc;
      e += ek * stride;
      stride *= ne;
    }
    MacroMapping m = patch.pieces()[e].restrict(lo, hi);
    if (!(m.min_jacobian_det() > 0.0))
      throw DegenerateJacobian("macro mapping of cell " + std::to_string(s) + " has non-positive det J");
    mm.mappings_.push_back(std::move(m));
  }
  for (Index s = 0; s < n; ++s) {
    const auto c = mm.cell_coords(s);
    for (int k = 0; k < d; ++k)
      if (c[k] + 1 < cells[k]) {
        auto nb = c;
        ++nb[k];
        mm.adjacency_.push_back({s, mm.cell_index(nb), k});
      }
  }
  return mm;
}

//! Node pairs (node on the max face, node on the min face) matched across `axis`.
inline std::vector<std::pair<int, int>> face_correspondence(const ReferenceCell& rc, int axis) {
  const auto hi = rc.face_nodes(2 * axis + 1), lo = rc.face_nodes(2 * axis);
  std::vector<std::pair<int, int>> out;
  out.reserve(hi.size());
  for (std::size_t i = 0; i < hi.size(); ++i) out.emplace_back(hi[i], lo[i]);
  return out;
}

//! Largest physical distance between matched nodes of adjacent cells.
inline double interface_mismatch(const MacroModel& mm, const ReferenceCell& rc) {
  double worst = 0.0;
  std::vector<std::vector<std::pair<int, int>>> corr(mm.dim());
  for (int k = 0; k < mm.dim(); ++k) corr[k] = face_correspondence(rc, k);
  for (const auto& adj : mm.adjacency())
    for (const auto& [a, b] : corr[adj.axis]) {
      const Point xa = mm.mapping(adj.first).evaluate(rc.xi(a)).x;
      const Point xb = mm.mapping(adj.second).evaluate(rc.xi(b)).x;
      worst = std::max(worst, (xa - xb).norm());
    }
  return worst;
}

// ---------------------------------------------------------------------------
// Conforming global numbering of the nodes of all cells

class GlobalNodes {
 public:
  GlobalNodes(const ReferenceCell& rc, const MacroModel& mm) : per_cell_(rc.n_nodes()) {
    const int d = rc.dim(), ext = rc.extent();
    Index span[3] = {1, 1, 1};
    for (int k = 0; k < d; ++k) span[k] = Index(mm.grid()[k]) * ext + 1;
    // Sparse key -> id map; keys are dense enough in practice to use a hash-free sort.
    std::vector<std::pair<Index, Index>> keys;
    keys.reserve(mm.n_cells() * rc.n_nodes());
    for (Index s = 0; s < mm.n_cells(); ++s) {
      const auto c = mm.cell_coords(s);
      for (Index n = 0; n < rc.n_nodes(); ++n) {
        const auto& l = rc.lattice(n);
        Index key = 0, mul = 1;
        for (int k = 0; k < d; ++k) {
          key += (Index(c[k]) * ext + l[k]) * mul;
          mul *= span[k];
        }
        keys.emplace_back(key, s * per_cell_ + n);
      }
    }
    std::stable_sort(keys.begin(), keys.end(), [](auto& a, auto& b) { return a.first < b.first; });
    map_.resize(keys.size());
    Index id = -1, last = -1;
    for (const auto& [key, slot] : keys) {
      if (key != last) {
        ++id;
        last = key;
        owner_.push_back(slot);
      }
      map_[slot] = id;
    }
    n_ = id + 1;
  }

  Index size() const { return n_; }
  Index global(Index cell, Index local_node) const { return map_[cell * per_cell_ + local_node]; }
  //! First (cell, local node) hosting the global node.
  std::pair<Index, Index> owner(Index g) const { return {owner_[g] / per_cell_, owner_[g] % per_cell_}; }

 private:
  Index per_cell_;
  Index n_ = 0;
  std::vector<Index> map_;
  std::vector<Index> owner_;
};

}  // namespace latfeti
