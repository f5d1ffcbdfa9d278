#pragma once

// Legacy ASCII VTK export of a nodal displacement field with per-cell von Mises stress.
// Higher-degree elements are split into linear sub-cells over their lattice nodes.

#include <fstream>
#include <string>
#include <vector>

#include "latfeti/problem.hpp"

namespace latfeti {

//! Von Mises stress of σ = λ tr(ε) I + 2μ ε; in 2D ε is extended by plane strain.
inline double von_mises(const Material& m, const SmallMatrix& grad_u) {
  const int d = int(grad_u.rows());
  Eigen::Matrix3d eps = Eigen::Matrix3d::Zero();
  eps.topLeftCorner(d, d) = 0.5 * (grad_u + grad_u.transpose());
  const Eigen::Matrix3d sigma = m.lambda() * eps.trace() * Eigen::Matrix3d::Identity() + 2.0 * m.mu() * eps;
  const Eigen::Matrix3d dev = sigma - sigma.trace() / 3.0 * Eigen::Matrix3d::Identity();
  return std::sqrt(1.5 * dev.cwiseProduct(dev).sum());
}

struct FieldMesh {
  Matrix points;                        // n_points × 3
  std::vector<std::vector<Index>> cells;  // point indices, VTK_QUAD / VTK_HEXAHEDRON order
  std::vector<double> von_mises;
};

//! Linear sub-cell mesh of the lattice with von Mises stress at each sub-cell centre.
inline FieldMesh build_field_mesh(const DDProblem& pb, const Matrix& nodal) {
  const auto& rc = pb.cell();
  const auto& mm = pb.macro();
  const GlobalNodes gn(rc, mm);
  const int d = rc.dim(), p = rc.degree(), q = p + 1, npe = rc.nodes_per_element();
  if (nodal.rows() != gn.size() || nodal.cols() != d) throw DimensionMismatch("field export: nodal field size");

  FieldMesh mesh;
  mesh.points = Matrix::Zero(gn.size(), 3);
  for (Index g = 0; g < gn.size(); ++g) {
    const auto [s, n] = gn.owner(g);
    mesh.points.row(g).head(d) = mm.mapping(s).evaluate(rc.xi(n)).x.transpose();
  }

  // Sub-cell corners in tensor offsets, ordered counter-clockwise per VTK.
  const std::vector<std::array<int, 3>> corners =
      d == 2 ? std::vector<std::array<int, 3>>{{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}}
             : std::vector<std::array<int, 3>>{{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                                               {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
  std::vector<double> shp(npe), dshp(npe * d);
  const int subs_z = d == 3 ? p : 1;
  for (Index s = 0; s < pb.n_cells(); ++s) {
    Material mat = pb.spec().material;
    if (!pb.spec().cell_E_scale.empty()) mat.E *= pb.spec().cell_E_scale[s];
    for (Index e = 0; e < rc.n_elements(); ++e) {
      const int* en = rc.element_nodes(e);
      Matrix ue(npe, d);
      for (int a = 0; a < npe; ++a) ue.row(a) = nodal.row(gn.global(s, en[a]));
      for (int k = 0; k < subs_z; ++k)
        for (int j = 0; j < p; ++j)
          for (int i = 0; i < p; ++i) {
            std::vector<Index> cell;
            for (const auto& c : corners) {
              const int a = (i + c[0]) + q * ((j + c[1]) + q * (k + c[2]));
              cell.push_back(gn.global(s, en[a]));
            }
            mesh.cells.push_back(std::move(cell));
            Point eta(d);
            eta(0) = (i + 0.5) / p;
            eta(1) = (j + 0.5) / p;
            if (d == 3) eta(2) = (k + 0.5) / p;
            rc.shape(eta, shp.data(), dshp.data());
            SmallMatrix du_dxi = SmallMatrix::Zero(d, d);  // ∂u_i/∂ξ_j
            for (int a = 0; a < npe; ++a)
              for (int jj = 0; jj < d; ++jj)
                du_dxi.col(jj) += ue.row(a).transpose() * dshp[a * d + jj] * rc.resolution();
            const SmallMatrix jac = mm.mapping(s).evaluate(rc.element_xi(e, eta)).jacobian;
            mesh.von_mises.push_back(von_mises(mat, du_dxi * jac.inverse()));
          }
    }
  }
  return mesh;
}

inline void write_vtk(const std::string& path, const FieldMesh& mesh, const Matrix& nodal,
                      const std::string& title = "latfeti displacement") {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.precision(12);
  out << "# vtk DataFile Version 3.0\n" << title << "\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << mesh.points.rows() << " double\n";
  for (Index g = 0; g < mesh.points.rows(); ++g)
    out << mesh.points(g, 0) << ' ' << mesh.points(g, 1) << ' ' << mesh.points(g, 2) << '\n';
  const std::size_t nc = mesh.cells.size();
  const std::size_t per = nc ? mesh.cells[0].size() : 0;
  out << "CELLS " << nc << ' ' << nc * (per + 1) << '\n';
  for (const auto& c : mesh.cells) {
    out << c.size();
    for (Index v : c) out << ' ' << v;
    out << '\n';
  }
  out << "CELL_TYPES " << nc << '\n';
  for (std::size_t i = 0; i < nc; ++i) out << (per == 8 ? 12 : 9) << '\n';
  out << "POINT_DATA " << nodal.rows() << "\nVECTORS displacement double\n";
  for (Index g = 0; g < nodal.rows(); ++g)
    out << nodal(g, 0) << ' ' << nodal(g, 1) << ' ' << (nodal.cols() == 3 ? nodal(g, 2) : 0.0) << '\n';
  out << "CELL_DATA " << nc << "\nSCALARS von_mises double 1\nLOOKUP_TABLE default\n";
  for (double v : mesh.von_mises) out << v << '\n';
  if (!out) throw IoError("write to '" + path + "' failed");
}

inline void export_field(const DDProblem& pb, const Matrix& nodal, const std::string& path) {
  write_vtk(path, build_field_mesh(pb, nodal), nodal);
}

}  // namespace latfeti
