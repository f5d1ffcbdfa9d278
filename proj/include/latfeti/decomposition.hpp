#pragma once

// Interior / dual / primal splitting, the jump operator B with Dirichlet rows and the
// scaling weights of the Dirichlet preconditioner.

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <tuple>
#include <vector>

#include "latfeti/geometry.hpp"

namespace latfeti {

//! u_0(x) = value + gradient·x on a macro face, optionally restricted to some components.
struct DirichletBC {
  int face = 0;
  std::vector<int> components;  // empty: all
  Point value;                  // empty: zero
  SmallMatrix gradient;         // empty: zero

  bool constrains(int comp) const {
    return components.empty() || std::find(components.begin(), components.end(), comp) != components.end();
  }
  double u0(const Point& x, int comp) const {
    double v = value.size() ? value(comp) : 0.0;
    if (gradient.size()) v += gradient.row(comp).dot(x);
    return v;
  }
};

//! Per-cell DOF classes (shared by every cell) and the global primal numbering.
class DofPartition {
 public:
  int dim() const { return dim_; }
  Index n_cells() const { return n_cells_; }
  Index n_i() const { return Index(interior_.size()); }
  Index n_d() const { return Index(dual_.size()); }
  Index n_p() const { return Index(primal_.size()); }
  Index n_r() const { return n_i() + n_d(); }
  Index n_local() const { return n_r() + n_p(); }
  Index n_P() const { return n_P_; }
  Index n_R() const { return n_cells_ * n_r(); }
  Index n_U() const { return n_R() + n_P_; }

  //! Local natural DOF (node·d + comp) in each class, ascending.
  const std::vector<Index>& interior() const { return interior_; }
  const std::vector<Index>& dual() const { return dual_; }
  const std::vector<Index>& primal() const { return primal_; }

  //! Symmetric reordering natural -> (i, d, p).
  const Permutation& to_rp() const { return to_rp_; }
  //! Natural DOF at rp position.
  Index natural(Index rp) const { return rp_order_[rp]; }

  //! Global primal index of local primal k in cell s, or -1 when eliminated by Dirichlet.
  Index primal_index(Index s, Index k) const { return primal_map_[s * n_p() + k]; }
  //! Prescribed value of an eliminated primal DOF (0 otherwise).
  double primal_value(Index s, Index k) const { return primal_value_[s * n_p() + k]; }
  bool has_eliminated(Index s) const { return has_eliminated_[s]; }

  //! Local vector of eliminated primal values (size n_p).
  Vector eliminated_values(Index s) const {
    Vector v(n_p());
    for (Index k = 0; k < n_p(); ++k) v(k) = primal_value(s, k);
    return v;
  }

  //! Σ_s A_p^(s) x^(s) into a global primal vector.
  void assemble_primal(Index s, const Vector& local, Vector& global) const {
    for (Index k = 0; k < n_p(); ++k)
      if (const Index g = primal_index(s, k); g >= 0) global(g) += local(k);
  }
  //! A_p^(s)ᵀ x.
  Vector restrict_primal(Index s, const Vector& global) const {
    Vector v = Vector::Zero(n_p());
    for (Index k = 0; k < n_p(); ++k)
      if (const Index g = primal_index(s, k); g >= 0) v(k) = global(g);
    return v;
  }

  friend DofPartition partition_dofs(const ReferenceCell&, const MacroModel&, const std::vector<DirichletBC>&);

 private:
  int dim_ = 2;
  Index n_cells_ = 0, n_P_ = 0;
  std::vector<Index> interior_, dual_, primal_;
  Permutation to_rp_;
  std::vector<Index> rp_order_;
  std::vector<Index> primal_map_;
  std::vector<double> primal_value_;
  std::vector<char> has_eliminated_;
};

namespace detail {

// Dirichlet data per (global node, component): index of the first BC that applies and its value.
struct DirichletTable {
  std::vector<std::vector<std::optional<double>>> value;  // [global node][comp]

  DirichletTable(const ReferenceCell& rc, const MacroModel& mm, const GlobalNodes& gn,
                 const std::vector<DirichletBC>& bcs) {
    const int d = rc.dim();
    value.assign(gn.size(), std::vector<std::optional<double>>(d));
    for (const auto& bc : bcs) {
      if (bc.face < 0 || bc.face >= 2 * d) throw ValidationError("bcs.dirichlet.face", "invalid face");
      const auto nodes = rc.face_nodes(bc.face);
      for (Index s = 0; s < mm.n_cells(); ++s) {
        if (!mm.face_on_boundary(s, bc.face)) continue;
        for (int n : nodes) {
          const Index g = gn.global(s, n);
          const auto [os, on] = gn.owner(g);
          const Point x = mm.mapping(os).evaluate(rc.xi(on)).x;
          for (int c = 0; c < d; ++c)
            if (bc.constrains(c) && !value[g][c]) value[g][c] = bc.u0(x, c);
        }
      }
    }
  }
  const std::optional<double>& at(Index g, int c) const { return value[g][c]; }
};

}  // namespace detail

inline DofPartition partition_dofs(const ReferenceCell& rc, const MacroModel& mm,
                                   const std::vector<DirichletBC>& dirichlet) {
  DofPartition dp;
  const int d = rc.dim();
  dp.dim_ = d;
  dp.n_cells_ = mm.n_cells();
  for (Index n = 0; n < rc.n_nodes(); ++n)
    for (int c = 0; c < d; ++c) {
      const Index dof = n * d + c;
      switch (rc.node_class(n)) {
        case NodeClass::Interior: dp.interior_.push_back(dof); break;
        case NodeClass::Face: dp.dual_.push_back(dof); break;
        case NodeClass::Corner: dp.primal_.push_back(dof); break;
      }
    }
  if (dp.primal_.empty()) throw EmptyPrimalSet("reference cell has no corner DOF");

  dp.rp_order_.reserve(rc.n_dofs());
  for (const auto* set : {&dp.interior_, &dp.dual_, &dp.primal_})
    dp.rp_order_.insert(dp.rp_order_.end(), set->begin(), set->end());
  dp.to_rp_.resize(rc.n_dofs());
  for (Index k = 0; k < rc.n_dofs(); ++k) dp.to_rp_.indices()[dp.rp_order_[k]] = int(k);

  const GlobalNodes gn(rc, mm);
  const detail::DirichletTable dt(rc, mm, gn, dirichlet);
  const Index np = dp.n_p();
  dp.primal_map_.assign(mm.n_cells() * np, -1);
  dp.primal_value_.assign(mm.n_cells() * np, 0.0);
  dp.has_eliminated_.assign(mm.n_cells(), 0);
  std::map<Index, Index> numbering;  // global dof key -> primal index
  for (Index s = 0; s < mm.n_cells(); ++s)
    for (Index k = 0; k < np; ++k) {
      const Index node = dp.primal_[k] / d;
      const int c = int(dp.primal_[k] % d);
      const Index g = gn.global(s, node);
      if (const auto& v = dt.at(g, c)) {
        dp.primal_value_[s * np + k] = *v;
        dp.has_eliminated_[s] = 1;
        continue;
      }
      const Index key = g * d + c;
      auto [it, inserted] = numbering.emplace(key, Index(numbering.size()));
      dp.primal_map_[s * np + k] = it->second;
    }
  dp.n_P_ = Index(numbering.size());
  return dp;
}

// ---------------------------------------------------------------------------

enum class RowKind : std::uint8_t { Gluing, Dirichlet };

//! B = [B_R 0]: signed Boolean rows acting on dual DOF only.
class JumpOperator {
 public:
  struct Entry {
    Index dual;  // local dual index k
    Index row;
    double sign;
  };

  Index rows() const { return Index(kind_.size()); }
  const Vector& rhs() const { return rhs_; }
  RowKind kind(Index row) const { return kind_[row]; }
  Index n_cells() const { return Index(entries_.size()); }
  Index n_d() const { return n_d_; }
  //! Entries of B_d^(s), sorted by row.
  const std::vector<Entry>& entries(Index s) const { return entries_[s]; }

  //! B_d^(s)ᵀ λ (size n_d); optional per-entry weights realize B_d^(s)ᵀ D^(s) λ.
  Vector gather(Index s, const Vector& lambda, const std::vector<double>* weights = nullptr) const {
    Vector w = Vector::Zero(n_d_);
    const auto& e = entries_[s];
    for (std::size_t j = 0; j < e.size(); ++j)
      w(e[j].dual) += e[j].sign * lambda(e[j].row) * (weights ? (*weights)[j] : 1.0);
    return w;
  }
  //! out += B_d^(s) w (optionally D^(s) B_d^(s) w).
  void scatter_add(Index s, const Vector& w, Vector& out, const std::vector<double>* weights = nullptr) const {
    const auto& e = entries_[s];
    for (std::size_t j = 0; j < e.size(); ++j)
      out(e[j].row) += e[j].sign * w(e[j].dual) * (weights ? (*weights)[j] : 1.0);
  }
  //! Column-block version: B_d^(s)ᵀ applied to several multiplier vectors.
  Matrix gather(Index s, const Matrix& lambda) const {
    Matrix w = Matrix::Zero(n_d_, lambda.cols());
    for (const auto& e : entries_[s]) w.row(e.dual) += e.sign * lambda.row(e.row);
    return w;
  }

  //! Dense B_d^(s) (L × n_d), for tests.
  Matrix dense_block(Index s) const {
    Matrix b = Matrix::Zero(rows(), n_d_);
    for (const auto& e : entries_[s]) b(e.row, e.dual) += e.sign;
    return b;
  }

  friend JumpOperator build_jump_operator(const DofPartition&, const ReferenceCell&, const MacroModel&,
                                          const std::vector<DirichletBC>&);

 private:
  Index n_d_ = 0;
  Vector rhs_;
  std::vector<RowKind> kind_;
  std::vector<std::vector<Entry>> entries_;
};

//! Gluing rows for dual copies shared by two cells; copies shared by m > 2 cells (3D cell
//! edges) are tied to the lowest-index cell by m − 1 rows. Dirichlet dual DOF get one row per
//! copy and no gluing row.
inline JumpOperator build_jump_operator(const DofPartition& dp, const ReferenceCell& rc, const MacroModel& mm,
                                        const std::vector<DirichletBC>& dirichlet) {
  JumpOperator jo;
  const int d = rc.dim();
  jo.n_d_ = dp.n_d();
  jo.entries_.resize(mm.n_cells());
  const GlobalNodes gn(rc, mm);
  const detail::DirichletTable dt(rc, mm, gn, dirichlet);

  // Copies of each global dual DOF, in ascending cell order.
  std::vector<std::vector<std::pair<Index, Index>>> copies(gn.size() * d);
  for (Index s = 0; s < mm.n_cells(); ++s)
    for (Index k = 0; k < dp.n_d(); ++k) {
      const Index dof = dp.dual()[k];
      copies[gn.global(s, dof / d) * d + dof % d].emplace_back(s, k);
    }
  std::vector<double> rhs;
  for (Index key = 0; key < Index(copies.size()); ++key) {
    const auto& cp = copies[key];
    if (cp.empty()) continue;
    const auto& u0 = dt.at(key / d, int(key % d));
    if (u0) {
      for (const auto& [s, k] : cp) {
        jo.entries_[s].push_back({k, Index(rhs.size()), 1.0});
        jo.kind_.push_back(RowKind::Dirichlet);
        rhs.push_back(*u0);
      }
      continue;
    }
    for (std::size_t j = 1; j < cp.size(); ++j) {
      const Index row = Index(rhs.size());
      jo.entries_[cp[0].first].push_back({cp[0].second, row, 1.0});
      jo.entries_[cp[j].first].push_back({cp[j].second, row, -1.0});
      jo.kind_.push_back(RowKind::Gluing);
      rhs.push_back(0.0);
    }
  }
  jo.rhs_ = Eigen::Map<const Vector>(rhs.data(), Index(rhs.size()));

  // Duplicate constraints would make B rank deficient.
  std::vector<std::vector<std::tuple<Index, Index, double>>> sig(jo.rows());
  for (Index s = 0; s < mm.n_cells(); ++s)
    for (const auto& e : jo.entries_[s]) sig[e.row].emplace_back(s, e.dual, e.sign);
  for (auto& r : sig) std::sort(r.begin(), r.end());
  std::vector<Index> order(jo.rows());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](Index a, Index b) { return sig[a] < sig[b]; });
  for (std::size_t i = 1; i < order.size(); ++i)
    if (sig[order[i]] == sig[order[i - 1]]) throw RankDeficient("duplicate multiplier rows in jump operator");
  return jo;
}

//! Per-cell diagonal D^(s), stored per entry of B_d^(s).
struct ScalingWeights {
  std::vector<std::vector<double>> per_cell;
  const std::vector<double>& of(Index s) const { return per_cell[s]; }
};

//! Dirichlet rows: 1. Two-copy gluing rows: 1/2 each. Rows tying m > 2 copies to the first
//! cell: 0 on the first cell, 1 on the other, so that Σ_s B_d^(s) B_d^(s)ᵀ D^(s) = I exactly.
inline ScalingWeights build_scaling_weights(const JumpOperator& jo) {
  // Rows carried by each (cell, dual) copy.
  std::map<std::pair<Index, Index>, int> rows_per_copy;
  for (Index s = 0; s < jo.n_cells(); ++s)
    for (const auto& e : jo.entries(s))
      if (jo.kind(e.row) == RowKind::Gluing) ++rows_per_copy[{s, e.dual}];
  // A gluing row is part of a star iff one of its copies carries more than one row.
  std::vector<char> star(jo.rows(), 0);
  for (Index s = 0; s < jo.n_cells(); ++s)
    for (const auto& e : jo.entries(s))
      if (jo.kind(e.row) == RowKind::Gluing && rows_per_copy[{s, e.dual}] > 1) star[e.row] = 1;
  ScalingWeights sw;
  sw.per_cell.resize(jo.n_cells());
  for (Index s = 0; s < jo.n_cells(); ++s) {
    auto& w = sw.per_cell[s];
    for (const auto& e : jo.entries(s)) {
      if (jo.kind(e.row) == RowKind::Dirichlet)
        w.push_back(1.0);
      else if (!star[e.row])
        w.push_back(0.5);
      else
        w.push_back(e.sign > 0 ? 0.0 : 1.0);
    }
  }
  return sw;
}

}  // namespace latfeti
