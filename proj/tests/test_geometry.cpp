#include <gtest/gtest.h>

#include <random>

#include "latfeti/geometry.hpp"

using namespace latfeti;

namespace {

int count_class(const ReferenceCell& rc, NodeClass c) {
  int n = 0;
  for (Index i = 0; i < rc.n_nodes(); ++i) n += rc.node_class(i) == c;
  return n;
}

Point pt(std::initializer_list<double> v) {
  Point p(Index(v.size()));
  Index i = 0;
  for (double x : v) p(i++) = x;
  return p;
}

// Two quadratic Bézier elements along x bending upwards, one element along y.
MacroPatch bent_strip() {
  const int nx = 5, ny = 3;
  Matrix c(2, nx * ny);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const double x = i * 1.0, y = j * 0.5;
      c(0, i + nx * j) = x;
      c(1, i + nx * j) = y + 0.1 * x * x / 4.0;
    }
  return MacroPatch::bezier_grid(2, {2, 2, 0}, {2, 1, 1}, c, Vector::Ones(nx * ny));
}

}  // namespace

TEST(ReferenceCell, SingleBilinearElement) {
  const auto rc = build_reference_cell({"solid2d", 1, 0});
  EXPECT_EQ(rc.n_elements(), 1);
  EXPECT_EQ(rc.n_nodes(), 4);
  EXPECT_EQ(count_class(rc, NodeClass::Corner), 4);
  EXPECT_EQ(rc.n_dofs(), 8);
}

TEST(ReferenceCell, SolidRefinedCounts) {
  const auto rc = build_reference_cell({"solid2d", 1, 2});
  EXPECT_EQ(rc.n_elements(), 16);
  EXPECT_EQ(rc.n_nodes(), 25);
  EXPECT_EQ(count_class(rc, NodeClass::Corner), 4);
  EXPECT_EQ(count_class(rc, NodeClass::Face), 12);
  EXPECT_EQ(count_class(rc, NodeClass::Interior), 9);
}

TEST(ReferenceCell, Solid3dCounts) {
  const auto rc = build_reference_cell({"solid3d", 2, 1});
  EXPECT_EQ(rc.n_nodes(), 125);
  EXPECT_EQ(count_class(rc, NodeClass::Corner), 8);
  EXPECT_EQ(count_class(rc, NodeClass::Interior), 27);
  EXPECT_EQ(rc.n_dofs(), 375);
}

TEST(ReferenceCell, UnknownPattern) {
  EXPECT_THROW(build_reference_cell({"honeycomb", 1, 0}), UnknownPattern);
}

class AllPatterns : public ::testing::TestWithParam<std::tuple<std::string, int, int>> {};

TEST_P(AllPatterns, InvariantsHold) {
  const auto [name, degree, refinement] = GetParam();
  const auto rc = build_reference_cell({name, degree, refinement});
  const int d = rc.dim();
  // Nodes in the unit box; corners exactly at the vertices.
  for (Index n = 0; n < rc.n_nodes(); ++n) {
    const Point x = rc.xi(n);
    EXPECT_TRUE((x.array() >= 0.0).all() && (x.array() <= 1.0).all());
    bool at_vertex = true;
    for (int k = 0; k < d; ++k) at_vertex &= (x(k) == 0.0 || x(k) == 1.0);
    EXPECT_EQ(at_vertex, rc.node_class(n) == NodeClass::Corner);
  }
  EXPECT_EQ(count_class(rc, NodeClass::Corner), 1 << d);
  // Opposite faces match under unit translation.
  for (int axis = 0; axis < d; ++axis) {
    const auto lo = rc.face_nodes(2 * axis), hi = rc.face_nodes(2 * axis + 1);
    ASSERT_EQ(lo.size(), hi.size());
    for (std::size_t i = 0; i < lo.size(); ++i) {
      Point shift = rc.xi(hi[i]) - rc.xi(lo[i]);
      Point unit = Point::Zero(d);
      unit(axis) = 1.0;
      EXPECT_LT((shift - unit).norm(), 1e-15);
    }
  }
  // Connected through shared element nodes (union-find over elements).
  std::vector<int> parent(rc.n_elements());
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) { return parent[x] == x ? x : parent[x] = find(parent[x]); };
  std::vector<int> owner(rc.n_nodes(), -1);
  for (Index e = 0; e < rc.n_elements(); ++e)
    for (int a = 0; a < rc.nodes_per_element(); ++a) {
      const int n = rc.element_nodes(e)[a];
      if (owner[n] < 0)
        owner[n] = int(e);
      else
        parent[find(int(e))] = find(owner[n]);
    }
  for (Index e = 0; e < rc.n_elements(); ++e) EXPECT_EQ(find(int(e)), find(0));
  for (Index n = 0; n < rc.n_nodes(); ++n) EXPECT_GE(owner[n], 0);
}

INSTANTIATE_TEST_SUITE_P(
    Patterns, AllPatterns,
    ::testing::Values(std::make_tuple("solid2d", 1, 0), std::make_tuple("solid2d", 2, 2),
                      std::make_tuple("cross-hollow-square2d", 1, 0), std::make_tuple("cross-hollow-square2d", 2, 1),
                      std::make_tuple("plus2d", 1, 0), std::make_tuple("plus2d", 2, 1),
                      std::make_tuple("solid3d", 1, 1), std::make_tuple("bcc3d", 1, 0),
                      std::make_tuple("bcc3d", 2, 0), std::make_tuple("bcc3d", 1, 1)));

TEST(ReferenceCell, ShapeFunctionsPartitionOfUnity) {
  for (int p : {1, 2}) {
    const auto rc = build_reference_cell({"solid3d", p, 0});
    std::vector<double> n(rc.nodes_per_element()), dn(rc.nodes_per_element() * 3);
    rc.shape(pt({0.3, 0.7, 0.1}), n.data(), dn.data());
    double sum = 0.0, dsum[3] = {0, 0, 0};
    for (int a = 0; a < rc.nodes_per_element(); ++a) {
      sum += n[a];
      for (int k = 0; k < 3; ++k) dsum[k] += dn[a * 3 + k];
    }
    EXPECT_NEAR(sum, 1.0, 1e-14);
    for (double v : dsum) EXPECT_NEAR(v, 0.0, 1e-13);
    // Interpolation: N_a(node_b) = δ_ab.
    const int* nodes = rc.element_nodes(0);
    for (int b = 0; b < rc.nodes_per_element(); ++b) {
      rc.shape(rc.xi(nodes[b]), n.data(), nullptr);
      for (int a = 0; a < rc.nodes_per_element(); ++a) EXPECT_NEAR(n[a], a == b ? 1.0 : 0.0, 1e-14);
    }
  }
}

TEST(MacroMapping, IdentityAndScaling) {
  const auto id = MacroMapping::identity(2);
  const auto e = id.evaluate(pt({0.25, 0.6}));
  EXPECT_LT((e.x - pt({0.25, 0.6})).norm(), 1e-15);
  EXPECT_LT((e.jacobian - SmallMatrix::Identity(2, 2)).norm(), 1e-15);
  const auto sc = MacroMapping::affine(pt({1, 2, 3}), pt({0.5, 0.5, 0.5}));
  EXPECT_LT((sc.evaluate(pt({0.1, 0.9, 0.4})).jacobian - 0.5 * SmallMatrix::Identity(3, 3)).norm(), 1e-15);
  EXPECT_TRUE(sc.is_affine());
}

TEST(MacroMapping, QuarterAnnulusMidRadius) {
  const auto patch = MacroPatch::quarter_annulus(1.0, 2.0);
  const auto& m = patch.pieces()[0];
  EXPECT_NEAR(m.evaluate(pt({0.5, 0.5})).x.norm(), 1.5, 1e-12);
  std::mt19937 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 20; ++i) {
    const double t = u(rng);
    EXPECT_NEAR(m.evaluate(pt({t, 0.0})).x.norm(), 1.0, 1e-12);
    EXPECT_NEAR(m.evaluate(pt({t, 1.0})).x.norm(), 2.0, 1e-12);
  }
  EXPECT_GT(m.min_jacobian_det(), 0.0);
  EXPECT_FALSE(m.is_affine());
}

TEST(MacroMapping, JacobianMatchesFiniteDifferences) {
  const auto patch = MacroPatch::quarter_annulus(1.0, 2.0, 3, 0.7);
  const auto& m = patch.pieces()[0];
  const Point xi = pt({0.3, 0.4, 0.8});
  const auto e = m.evaluate(xi);
  const double h = 1e-6;
  for (int k = 0; k < 3; ++k) {
    Point a = xi, b = xi;
    a(k) -= h;
    b(k) += h;
    const Point fd = (m.evaluate(b).x - m.evaluate(a).x) / (2 * h);
    EXPECT_LT((fd - e.jacobian.col(k)).norm(), 1e-8);
  }
}

TEST(MacroModel, AffineBoxTranslatedCopies) {
  const auto patch = MacroPatch::affine_box(pt({0, 0}), pt({16, 8}));
  const auto mm = build_macro_model(patch, {16, 8, 1});
  ASSERT_EQ(mm.n_cells(), 128);
  const Matrix ref = mm.mapping(0).control();
  for (Index s = 0; s < mm.n_cells(); ++s) {
    Matrix c = mm.mapping(s).control();
    const Eigen::Vector2d shift = c.col(0) - ref.col(0);
    c.colwise() -= shift;
    EXPECT_LT((c - ref).norm(), 1e-12);
    EXPECT_TRUE(mm.mapping(s).is_affine());
  }
  EXPECT_EQ(mm.adjacency().size(), std::size_t(15 * 8 + 16 * 7));
}

TEST(MacroModel, QuarterAnnulusCellsKeepExactArcs) {
  const auto patch = MacroPatch::quarter_annulus(1.0, 2.0);
  const auto mm = build_macro_model(patch, {4, 2, 1});
  ASSERT_EQ(mm.n_cells(), 8);
  for (Index s = 0; s < mm.n_cells(); ++s) {
    const auto& m = mm.mapping(s);
    EXPECT_TRUE(m.is_rational());
    const auto c = mm.cell_coords(s);
    const double r_mid = 1.0 + (c[1] + 0.5) / 2.0;
    EXPECT_NEAR(m.evaluate(pt({0.5, 0.5})).x.norm(), r_mid, 1e-12);
    EXPECT_NEAR(m.evaluate(pt({0.2, 0.0})).x.norm(), 1.0 + c[1] / 2.0, 1e-12);
  }
}

TEST(MacroModel, ExtractionIsPartitionConsistent) {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  for (const auto& [patch, grid] : {std::pair{MacroPatch::quarter_annulus(1.0, 2.0), GridDims{4, 2, 1}},
                                    std::pair{bent_strip(), GridDims{6, 3, 1}},
                                    std::pair{MacroPatch::quarter_annulus(1.0, 2.0, 3, 0.5), GridDims{4, 2, 2}}}) {
    const auto mm = build_macro_model(patch, grid);
    const int d = patch.dim();
    for (int t = 0; t < 50; ++t) {
      Point g(d), local(d);
      GridDims c{0, 0, 0};
      for (int k = 0; k < d; ++k) {
        g(k) = u(rng);
        c[k] = std::min(grid[k] - 1, int(g(k) * grid[k]));
        local(k) = g(k) * grid[k] - c[k];
      }
      const auto ref = patch.evaluate(g).x;
      const auto cell = mm.mapping(mm.cell_index(c)).evaluate(local).x;
      EXPECT_LT((ref - cell).norm(), 1e-12);
    }
  }
}

TEST(MacroModel, BezierGridTwoCellsCoincideOnSharedFace) {
  const auto patch = bent_strip();
  const auto mm = build_macro_model(patch, {2, 1, 1});
  EXPECT_EQ(mm.adjacency().size(), 1u);
  const auto rc = build_reference_cell({"cross-hollow-square2d", 2, 0});
  EXPECT_LE(interface_mismatch(mm, rc), 1e-10);
}

TEST(MacroModel, SharedFacesCoincideOnCurvedGrids) {
  const auto rc = build_reference_cell({"plus2d", 1, 0});
  EXPECT_LE(interface_mismatch(build_macro_model(MacroPatch::quarter_annulus(1.0, 2.0), {8, 4, 1}), rc), 1e-10);
  const auto rc3 = build_reference_cell({"bcc3d", 1, 0});
  EXPECT_LE(interface_mismatch(build_macro_model(MacroPatch::quarter_annulus(1.0, 2.0, 3, 0.5), {4, 2, 2}), rc3),
            1e-10);
}

TEST(MacroModel, DegenerateJacobianRejected) {
  // (0,0) (1,0) (0,1) (1,1) is the valid order; swapping the top row folds the map.
  Matrix folded(2, 4);
  folded << 0, 1, 1, 0, 0, 0, 1, 1;
  const auto patch = MacroPatch::bezier_grid(2, {1, 1, 0}, {1, 1, 1}, folded, Vector::Ones(4));
  EXPECT_THROW(build_macro_model(patch, {1, 1, 1}), DegenerateJacobian);
}

TEST(MacroModel, CellCountMustMatchPatchElements) {
  EXPECT_THROW(build_macro_model(bent_strip(), {3, 1, 1}), ValidationError);
}

TEST(GlobalNodes, MergesSharedNodes) {
  const auto rc = build_reference_cell({"solid2d", 2, 0});  // 9 nodes
  const auto mm = build_macro_model(MacroPatch::affine_box(pt({0, 0}), pt({2, 1})), {2, 1, 1});
  const GlobalNodes g(rc, mm);
  EXPECT_EQ(g.size(), 15);
  // The shared edge nodes of cell 0 (xmax) and cell 1 (xmin) map to the same global ids.
  for (const auto& [a, b] : face_correspondence(rc, 0)) EXPECT_EQ(g.global(0, a), g.global(1, b));
  const auto mm3 = build_macro_model(MacroPatch::affine_box(pt({0, 0, 0}), pt({3, 3, 3})), {3, 3, 3});
  const auto rc3 = build_reference_cell({"solid3d", 1, 0});
  EXPECT_EQ(GlobalNodes(rc3, mm3).size(), 64);
}
