#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "latfeti/assembly.hpp"

using namespace latfeti;

namespace {

Point pt(std::initializer_list<double> v) {
  Point p(Index(v.size()));
  Index i = 0;
  for (double x : v) p(i++) = x;
  return p;
}

double rel_diff(const SparseSymMatrix& a, const SparseSymMatrix& b) {
  return (a.dense() - b.dense()).norm() / b.dense().norm();
}

MacroMapping annulus_cell() {
  return build_macro_model(MacroPatch::quarter_annulus(1.0, 2.0), {4, 2, 1}).mapping(5);
}

MacroMapping sheared_box() {
  Matrix c(2, 4);
  c << 1.0, 3.0, 1.5, 3.5,  //
      -1.0, -0.5, 1.0, 1.5;
  return MacroMapping(2, {1, 1, 0}, c, Vector::Ones(4));
}

// Unit-square bilinear stiffness from closed-form 1D integrals:
// ∫φ_i'φ_j' = ±1, ∫φ_iφ_j = 1/3 or 1/6, ∫φ_i'φ_j = ∓1/2.
Matrix hand_q4_stiffness(const Material& mat) {
  auto d1 = [](int i) { return i == 0 ? -1.0 : 1.0; };
  auto mm = [](int i, int j) { return i == j ? 1.0 / 3.0 : 1.0 / 6.0; };
  auto dd = [&](int i, int j) { return d1(i) * d1(j); };
  auto dm = [&](int i, int) { return d1(i) * 0.5; };
  // ∫ ∂_a N_m ∂_b N_n for tensor nodes m = (mx,my).
  auto g = [&](int m, int a, int n, int b) {
    const int mx = m % 2, my = m / 2, nx = n % 2, ny = n / 2;
    const double ix = a == 0 && b == 0 ? dd(mx, nx) : a == 0 ? dm(mx, nx) : b == 0 ? dm(nx, mx) : mm(mx, nx);
    const double iy = a == 1 && b == 1 ? dd(my, ny) : a == 1 ? dm(my, ny) : b == 1 ? dm(ny, my) : mm(my, ny);
    return ix * iy;
  };
  const GradTensor c = mat.gradient_tensor(2);
  Matrix k = Matrix::Zero(8, 8);
  for (int m = 0; m < 4; ++m)
    for (int n = 0; n < 4; ++n)
      for (int i = 0; i < 2; ++i)
        for (int q = 0; q < 2; ++q)
          for (int j = 0; j < 2; ++j)
            for (int l = 0; l < 2; ++l) k(m * 2 + i, n * 2 + q) += c(i * 2 + j, q * 2 + l) * g(m, j, n, l);
  return k;
}

}  // namespace

TEST(Material, ValidatesAndIsSpdOnStrains) {
  EXPECT_THROW((Material{-1.0, 0.3}.validate()), ValidationError);
  EXPECT_THROW((Material{1.0, 0.5}.validate()), ValidationError);
  const Material m{5000.0, 0.4};
  for (int d : {2, 3}) {
    const GradTensor c = m.gradient_tensor(d);
    EXPECT_LT((c - c.transpose()).norm(), 1e-12);
    // Symmetric-strain projection: eigenvalues of C restricted to symmetric gradients are positive.
    std::mt19937 rng(2);
    std::normal_distribution<double> nd;
    for (int t = 0; t < 20; ++t) {
      Matrix e(d, d);
      for (int i = 0; i < d * d; ++i) e(i) = nd(rng);
      e = 0.5 * (e + e.transpose()).eval();
      Vector v(d * d);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) v(i * d + j) = e(i, j);
      EXPECT_GT(v.dot(c * v), 0.0);
    }
  }
}

TEST(PullBack, IdentityAndUniformScaling2d) {
  const Material mat;
  const GradTensor c = mat.gradient_tensor(2);
  EXPECT_LT((pulled_back_tensor(MacroMapping::identity(2), mat, pt({0.3, 0.3})) - c).norm(), 1e-12 * c.norm());
  const auto scaled = MacroMapping::affine(pt({4, 5}), pt({0.25, 0.25}));
  EXPECT_LT((pulled_back_tensor(scaled, mat, pt({0.7, 0.1})) - c).norm(), 1e-12 * c.norm());
  // Direct symbolic check at one point of an anisotropic scaling: Ĉ_{iakb} = (hx hy / (h_a h_b)) C_{iakb}.
  const auto aniso = MacroMapping::affine(pt({0, 0}), pt({2.0, 0.5}));
  const GradTensor chat = pulled_back_tensor(aniso, mat, pt({0.5, 0.5}));
  const double h[2] = {2.0, 0.5};
  for (int i = 0; i < 2; ++i)
    for (int a = 0; a < 2; ++a)
      for (int k = 0; k < 2; ++k)
        for (int b = 0; b < 2; ++b)
          EXPECT_NEAR(chat(i * 2 + a, k * 2 + b), c(i * 2 + a, k * 2 + b) * h[0] * h[1] / (h[a] * h[b]), 1e-9);
}

TEST(PolyCoeffs, IdentityCoefficientsAreConstant) {
  const auto a = fit_poly_coeffs(MacroMapping::identity(3), Material{}, 2);
  EXPECT_EQ(a.n_A(), 27);
  EXPECT_EQ(a.n_C(), 45);
  for (Index q = 1; q < a.n_A(); ++q) EXPECT_LT((a.values.row(q) - a.values.row(0)).norm(), 1e-14 * a.values.row(0).norm());
}

TEST(PolyCoeffs, InterpolatesAtNodesAndConvergesOnAnnulus) {
  const auto m = annulus_cell();
  const Material mat;
  std::mt19937 rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<Point> samples;
  for (int i = 0; i < 40; ++i) samples.push_back(pt({u(rng), u(rng)}));
  double prev = 1e300;
  for (int q : {2, 3, 4}) {
    const auto a = fit_poly_coeffs(m, mat, q);
    const FitBasis basis(2, q);
    for (int n = 0; n < basis.size(); ++n) {
      const GradTensor exact = pulled_back_tensor(m, mat, basis.node(n));
      EXPECT_LT((a.reconstruct(basis, basis.node(n)) - exact).norm(), 1e-10 * exact.norm());
    }
    double worst = 0.0;
    for (const auto& x : samples) {
      const GradTensor exact = pulled_back_tensor(m, mat, x);
      const GradTensor fit = a.reconstruct(basis, x);
      EXPECT_LT((fit - fit.transpose()).norm(), 1e-12 * fit.norm());
      worst = std::max(worst, (fit - exact).norm() / exact.norm());
    }
    if (q == 2) EXPECT_LE(worst, 0.05);
    EXPECT_LT(worst, prev);
    prev = worst;
  }
}

TEST(LookupTable, SingleElementMatchesHandIntegrals) {
  const auto rc = build_reference_cell({"solid2d", 1, 0});
  const LookupTable t(rc, 0);
  EXPECT_EQ(t.n_A(), 1);
  EXPECT_EQ(t.n_pairs(), 10);
  // Node order: (0,0) (1,0) (0,1) (1,1).
  auto d1 = [](int i) { return i == 0 ? -1.0 : 1.0; };
  for (int m = 0; m < 4; ++m)
    for (int n = 0; n < 4; ++n) {
      const int mx = m % 2, my = m / 2, nx = n % 2, ny = n / 2;
      const double mxx = mx == nx ? 1.0 / 3 : 1.0 / 6, myy = my == ny ? 1.0 / 3 : 1.0 / 6;
      EXPECT_NEAR(t.entry(0, m, 0, n, 0), d1(mx) * d1(nx) * myy, 1e-15);
      EXPECT_NEAR(t.entry(0, m, 1, n, 1), d1(my) * d1(ny) * mxx, 1e-15);
      EXPECT_NEAR(t.entry(0, m, 0, n, 1), d1(mx) * 0.5 * d1(ny) * 0.5, 1e-15);
    }
}

TEST(LookupTable, ExchangeSymmetryIsExact) {
  const auto rc = build_reference_cell({"cross-hollow-square2d", 2, 0});
  const LookupTable t(rc, 2);
  std::mt19937 rng(7);
  std::uniform_int_distribution<Index> pick(0, t.n_pairs() - 1);
  std::uniform_int_distribution<int> qd(0, t.n_A() - 1), ad(0, 1);
  for (int k = 0; k < 100; ++k) {
    const auto [i, j] = t.pairs()[pick(rng)];
    const int q = qd(rng), a = ad(rng), b = ad(rng);
    EXPECT_EQ(t.entry(q, i, a, j, b), t.entry(q, j, b, i, a));
  }
}

TEST(LocalStiffness, MatchesHandBilinearStiffness) {
  const auto rc = build_reference_cell({"solid2d", 1, 0});
  const Material mat{1.0, 0.0};
  const Matrix hand = hand_q4_stiffness(mat);
  EXPECT_NEAR(hand(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(hand(0, 1), 0.125, 1e-15);
  const auto kq = assemble_stiffness_quadrature(rc, MacroMapping::identity(2), mat);
  EXPECT_LT((kq.dense() - hand).norm(), 1e-13);
  const auto kt = assemble_local_stiffness(LookupTable(rc, 0), fit_poly_coeffs(MacroMapping::identity(2), mat, 0));
  EXPECT_LT((kt.dense() - hand).norm(), 1e-13);
}

TEST(LocalStiffness, IdentityMappingEqualsQuadratureForAnyDegree) {
  const auto rc = build_reference_cell({"cross-hollow-square2d", 2, 0});
  const Material mat;
  const auto kq = assemble_stiffness_quadrature(rc, MacroMapping::identity(2), mat);
  for (int q : {0, 2}) {
    const auto kt = assemble_local_stiffness(LookupTable(rc, q), fit_poly_coeffs(MacroMapping::identity(2), mat, q));
    EXPECT_LE(rel_diff(kt, kq), 1e-12) << "q=" << q;
  }
}

TEST(LocalStiffness, AffineMappingsEqualQuadrature) {
  const Material mat;
  {
    const auto rc = build_reference_cell({"plus2d", 1, 0});
    const auto m = sheared_box();
    const auto kq = assemble_stiffness_quadrature(rc, m, mat);
    for (int q : {0, 1, 2}) EXPECT_LE(rel_diff(assemble_local_stiffness(LookupTable(rc, q), fit_poly_coeffs(m, mat, q)), kq), 1e-12);
  }
  {
    const auto rc = build_reference_cell({"bcc3d", 1, 0});
    const auto m = MacroMapping::affine(pt({1, 2, 3}), pt({0.5, 2.0, 1.0}));
    const auto kq = assemble_stiffness_quadrature(rc, m, mat);
    EXPECT_LE(rel_diff(assemble_local_stiffness(LookupTable(rc, 1), fit_poly_coeffs(m, mat, 1)), kq), 1e-12);
  }
}

TEST(LocalStiffness, UniformScalingInvariance2d) {
  const auto rc = build_reference_cell({"cross-hollow-square2d", 1, 0});
  const Material mat;
  const LookupTable t(rc, 2);
  const auto k_id = assemble_local_stiffness(t, fit_poly_coeffs(MacroMapping::identity(2), mat, 2));
  const auto k_sc = assemble_local_stiffness(t, fit_poly_coeffs(MacroMapping::affine(pt({3, 1}), pt({7, 7})), mat, 2));
  EXPECT_LE(rel_diff(k_sc, k_id), 1e-12);
}

TEST(LocalStiffness, AnnulusDiscrepancyDecreasesWithFitDegree) {
  const auto rc = build_reference_cell({"cross-hollow-square2d", 1, 0});
  const Material mat;
  const auto m = annulus_cell();
  const auto kq = assemble_stiffness_quadrature(rc, m, mat);
  double prev = 1e300;
  for (int q : {2, 3, 4}) {
    const double e = rel_diff(assemble_local_stiffness(LookupTable(rc, q), fit_poly_coeffs(m, mat, q)), kq);
    EXPECT_LT(e, prev) << "q=" << q;
    prev = e;
  }
}

TEST(LocalStiffness, MatrixFreeProductMatchesAssembled) {
  const auto rc = build_reference_cell({"bcc3d", 1, 0});
  const LookupTable t(rc, 2);
  const auto a = fit_poly_coeffs(build_macro_model(MacroPatch::quarter_annulus(1, 2, 3, 1), {2, 2, 1}).mapping(1),
                                 Material{}, 2);
  const auto k = assemble_local_stiffness(t, a);
  const MatrixFreeStiffness mf(t, a);
  const Matrix x = Matrix::Random(k.size(), 3);
  EXPECT_LT((mf * x - k * x).norm(), 1e-12 * (k * x).norm());
}

TEST(LocalStiffness, RigidBodyModesAnnihilated) {
  const Material mat;
  struct Case {
    CellPattern pat;
    MacroMapping map;
  };
  const std::vector<Case> cases = {
      {{"solid2d", 1, 0}, MacroMapping::identity(2)},
      {{"cross-hollow-square2d", 2, 0}, sheared_box()},
      {{"bcc3d", 1, 0}, MacroMapping::affine(pt({1, 0, 2}), pt({2, 1, 1}))},
      {{"solid3d", 2, 1}, MacroMapping::affine(pt({0, 0, 0}), pt({1, 1, 1}))},
  };
  for (const auto& c : cases) {
    const auto rc = build_reference_cell(c.pat);
    const auto rbm = rigid_body_modes(rc, c.map);
    for (const auto& k : {assemble_stiffness_quadrature(rc, c.map, mat),
                          assemble_local_stiffness(LookupTable(rc, 2), fit_poly_coeffs(c.map, mat, 2))}) {
      const double kn = k.frobenius_norm();
      for (Index j = 0; j < rbm.cols(); ++j)
        EXPECT_LE((k * Vector(rbm.col(j))).norm(), 1e-10 * kn * rbm.col(j).norm()) << c.pat.name << " mode " << j;
    }
  }
}

TEST(LocalStiffness, TranslationsAnnihilatedOnCurvedCells) {
  const auto rc = build_reference_cell({"cross-hollow-square2d", 2, 0});
  const auto m = annulus_cell();
  const auto k = assemble_local_stiffness(LookupTable(rc, 2), fit_poly_coeffs(m, Material{}, 2));
  const auto rbm = rigid_body_modes(rc, m);
  for (Index j = 0; j < 2; ++j)
    EXPECT_LE((k * Vector(rbm.col(j))).norm(), 1e-10 * k.frobenius_norm() * rbm.col(j).norm());
}

TEST(LocalRhs, ZeroLoads) {
  const auto rc = build_reference_cell({"solid2d", 1, 1});
  EXPECT_EQ(assemble_local_rhs(rc, MacroMapping::identity(2), CellLoads{}).norm(), 0.0);
}

TEST(LocalRhs, BodyForceIntegratesToVolume) {
  const auto rc = build_reference_cell({"solid2d", 2, 1});
  CellLoads l;
  l.body_force = pt({2.0, -3.0});
  const Vector f = assemble_local_rhs(rc, MacroMapping::identity(2), l);
  double fx = 0, fy = 0;
  for (Index n = 0; n < rc.n_nodes(); ++n) fx += f(2 * n), fy += f(2 * n + 1);
  EXPECT_NEAR(fx, 2.0, 1e-12);
  EXPECT_NEAR(fy, -3.0, 1e-12);
  // Whole quarter annulus as one cell: area 3π/4.
  const Vector g = assemble_local_rhs(rc, MacroPatch::quarter_annulus(1, 2).pieces()[0], l);
  double gx = 0;
  for (Index n = 0; n < rc.n_nodes(); ++n) gx += g(2 * n);
  EXPECT_NEAR(gx, 2.0 * 3.0 * std::numbers::pi / 4.0, 1e-8);
}

TEST(LocalRhs, TractionIntegratesToFaceMeasure) {
  const auto rc = build_reference_cell({"cross-hollow-square2d", 2, 0});
  CellLoads l;
  l.tractions.push_back({1, pt({1.0, 0.0})});
  const Vector f = assemble_local_rhs(rc, MacroMapping::identity(2), l);
  double s = 0;
  for (int n : rc.face_nodes(1)) s += f(2 * n);
  EXPECT_NEAR(s, 1.0, 1e-12);
  EXPECT_NEAR(f.sum(), 1.0, 1e-12);
  // Outer arc of the quarter annulus (ξ₂ = 1): length π.
  CellLoads arc;
  arc.tractions.push_back({3, pt({0.0, 1.0})});
  const Vector g = assemble_local_rhs(rc, MacroPatch::quarter_annulus(1, 2).pieces()[0], arc);
  EXPECT_NEAR(g.sum(), std::numbers::pi, 1e-9);
  // 3D face area of a box.
  const auto rc3 = build_reference_cell({"solid3d", 1, 1});
  CellLoads l3;
  l3.tractions.push_back({4, pt({0.0, 0.0, -2.0})});
  const Vector f3 = assemble_local_rhs(rc3, MacroMapping::affine(pt({0, 0, 0}), pt({2, 3, 1})), l3);
  EXPECT_NEAR(f3.sum(), -2.0 * 6.0, 1e-12);
}

TEST(LocalRhs, TractionOnInteriorFaceRejected) {
  const auto rc = build_reference_cell({"solid2d", 1, 0});
  CellLoads l;
  l.tractions.push_back({0, pt({1.0, 0.0})});
  EXPECT_THROW(assemble_local_rhs(rc, MacroMapping::identity(2), l, {false, true, true, true, true, true}),
               FaceNotOnBoundary);
}
