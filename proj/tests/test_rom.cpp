#include <gtest/gtest.h>

#include <random>
#include <set>

#include "latfeti/rom.hpp"

using namespace latfeti;

namespace {

Point pt(std::initializer_list<double> v) {
  Point p(Index(v.size()));
  Index i = 0;
  for (double x : v) p(i++) = x;
  return p;
}

ProblemSpec rectangle(GridDims cells) {
  ProblemSpec s;
  s.patch = MacroPatch::affine_box(pt({0, 0}), pt({double(cells[0]), double(cells[1])}));
  s.cells = cells;
  s.cell = {"cross-hollow-square2d", 1, 0};
  s.dirichlet = {DirichletBC{0, {}, {}, {}}};
  s.neumann = {NeumannBC{1, pt({0.0, -2.0})}};
  return s;
}

ProblemSpec annulus(GridDims cells) {
  ProblemSpec s;
  s.patch = MacroPatch::quarter_annulus(1.0, 2.0);
  s.cells = cells;
  s.cell = {"cross-hollow-square2d", 1, 0};
  s.dirichlet = {DirichletBC{0, {}, {}, {}}};
  s.neumann = {NeumannBC{1, pt({1.0, 0.0})}};
  return s;
}

PolyCoeffs synthetic(const Vector& flat, Index cell) {
  PolyCoeffs c;
  c.cell = cell;
  c.values = flat.transpose();
  return c;
}

// Exact cell quantities through an independent dense LU of the remainder block.
struct DenseCell {
  Matrix krr, krp, kpp, U_rp, U_rd;
};

DenseCell dense_cell(const DDProblem& pb, Index s) {
  const auto& dp = pb.partition();
  const Index nr = dp.n_r(), np = dp.n_p(), nd = dp.n_d();
  const Matrix k = pb.stiffness_rp(s).dense();
  DenseCell c;
  c.krr = k.topLeftCorner(nr, nr);
  c.krp = k.topRightCorner(nr, np);
  c.kpp = k.bottomRightCorner(np, np);
  const Eigen::PartialPivLU<Matrix> lu(c.krr);
  c.U_rp = lu.solve(c.krp);
  Matrix t = Matrix::Zero(nr, nd);
  t.bottomRows(nd).setIdentity();
  c.U_rd = lu.solve(t);
  return c;
}

double energy(const Matrix& krr, const Matrix& e) { return (e.transpose() * krr * e).trace(); }

std::vector<Index> random_cells(Index n, int count, unsigned seed) {
  std::mt19937 gen(seed);
  std::uniform_int_distribution<Index> pick(0, n - 1);
  std::vector<Index> out;
  for (int i = 0; i < count; ++i) out.push_back(pick(gen));
  return out;
}

}  // namespace

TEST(Greedy, IdenticalCellsNeedOneBasisVector) {
  Vector a(6);
  a << 1, 2, 3, 4, 5, 6;
  const std::vector<PolyCoeffs> cs{synthetic(a, 0), synthetic(a, 1), synthetic(a, 2)};
  const auto gb = greedy_select(cs, 1e-6);
  ASSERT_EQ(gb.size(), 1);
  EXPECT_EQ(gb.sigma[0], 0);  // ties resolve to the lowest index
  EXPECT_LE(gb.residual, 1e-14);
  const Matrix alpha = change_basis(gb);
  for (Index s = 0; s < 3; ++s) EXPECT_NEAR(alpha(0, s), 1.0, 1e-14);
}

TEST(Greedy, TwoDirectionsNeedTwoBasisVectors) {
  Vector a(4), b(4);
  a << 1, 0, 2, 0;
  b << 0, 1, 1, 3;
  const std::vector<PolyCoeffs> cs{synthetic(a, 0), synthetic(3.0 * b, 1), synthetic(2.0 * a, 2),
                                   synthetic(a + b, 3)};
  const auto gb = greedy_select(cs, 1e-8);
  ASSERT_EQ(gb.size(), 2);
  EXPECT_LE(gb.residual, 1e-12);
  const Matrix alpha = change_basis(gb);
  // Expansion of cell 3 = a + b in the principal coefficients.
  Matrix basis(4, 2);
  for (int k = 0; k < 2; ++k) basis.col(k) = cs[gb.sigma[k]].flattened();
  EXPECT_LE((basis * alpha.col(3) - (a + b)).norm(), 1e-12);
}

TEST(Greedy, RejectsInvalidTolerance) {
  Vector a = Vector::Ones(3);
  const std::vector<PolyCoeffs> cs{synthetic(a, 0)};
  EXPECT_THROW(greedy_select(cs, 0.0), ValidationError);
  EXPECT_THROW(greedy_select(cs, 1.0), ValidationError);
  EXPECT_THROW(greedy_select({}, 1e-3), ValidationError);
}

TEST(Greedy, BasisIsOrthonormalAndInterpolatesPrincipalCells) {
  const DDProblem pb(annulus({8, 4, 1}));
  const auto gb = greedy_select(pb.coeffs(), 1e-6);
  ASSERT_GE(gb.size(), 2);
  const Index nrb = gb.size();
  EXPECT_LE((gb.Z.transpose() * gb.Z - Matrix::Identity(nrb, nrb)).norm(), 1e-13);
  EXPECT_EQ(std::set<Index>(gb.sigma.begin(), gb.sigma.end()).size(), gb.sigma.size());
  const Matrix alpha = change_basis(gb);
  for (int k = 0; k < nrb; ++k) {
    const Index s = gb.sigma[k];
    const Vector a = pb.coeffs()[s].flattened();
    const Vector rec = gb.norms(s) * gb.Z * gb.beta.col(s);
    EXPECT_LE((rec - a).norm(), 1e-12 * a.norm());
    EXPECT_LE((alpha.col(s) - Vector::Unit(nrb, k)).norm(), 1e-12);
  }
}

TEST(Greedy, BothReconstructionsAgree) {
  const DDProblem pb(annulus({8, 4, 1}));
  const auto gb = greedy_select(pb.coeffs(), 1e-5);
  const Matrix alpha = change_basis(gb);
  Matrix principal(gb.Z.rows(), gb.size());
  for (int k = 0; k < gb.size(); ++k) principal.col(k) = pb.coeffs()[gb.sigma[k]].flattened();
  for (Index s = 0; s < pb.n_cells(); ++s) {
    const Vector via_z = gb.norms(s) * gb.Z * gb.beta.col(s);
    EXPECT_LE((principal * alpha.col(s) - via_z).norm(), 1e-10 * via_z.norm());
    // Reconstruction error in max-norm is bounded by the greedy residual.
    const Vector a = pb.coeffs()[s].flattened();
    EXPECT_LE((a - via_z).lpNorm<Eigen::Infinity>(), gb.residual * gb.norms(s) * (1 + 1e-12));
  }
}

TEST(Greedy, SizeGrowsAsToleranceShrinks) {
  const DDProblem pb(annulus({8, 4, 1}));
  int previous = 0;
  for (double tol : {1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7}) {
    const auto gb = greedy_select(pb.coeffs(), tol);
    EXPECT_GE(gb.size(), previous);
    EXPECT_TRUE(gb.residual < tol || gb.size() == pb.n_cells());
    EXPECT_EQ(gb.residual_history.size(), std::size_t(gb.size() + 1));
    EXPECT_EQ(gb.residual_history.back(), gb.residual);
    previous = gb.size();
  }
}

TEST(ChangeBasis, SingularPrincipalMatrixIsRejected) {
  GreedyBasis gb;
  gb.sigma = {0, 1};
  gb.norms = Vector::Ones(2);
  gb.beta = Matrix::Zero(2, 2);
  gb.beta(0, 0) = 1.0;
  gb.beta(0, 1) = 1.0;  // second principal cell has no component along its own direction
  gb.Z = Matrix::Identity(2, 2);
  EXPECT_THROW(change_basis(gb), SingularBasisChange);
}

TEST(SolveGram, UsesCholeskyWhenDefinite) {
  Matrix g(2, 2);
  g << 4, 1, 1, 3;
  const Vector rhs = Vector::Ones(2);
  GramSolve how;
  const Matrix x = solve_gram(g, rhs, &how);
  EXPECT_EQ(how, GramSolve::Cholesky);
  EXPECT_LE((g * x - rhs).norm(), 1e-14);
}

TEST(SolveGram, RegularizesSemiDefiniteSystems) {
  // Two identical basis solutions: G singular, rhs in its range.
  Matrix g(2, 2);
  g << 2, 2, 2, 2;
  Vector rhs(2);
  rhs << 6, 6;
  GramSolve how;
  const Matrix x = solve_gram(g, rhs, &how);
  EXPECT_NE(how, GramSolve::Cholesky);
  EXPECT_LE((g * x - rhs).norm(), 1e-8 * rhs.norm());
  EXPECT_THROW(solve_gram(Matrix::Zero(2, 2), rhs), SingularGram);
}

TEST(RomModel, AffineGridHasOneExactPrincipalCell) {
  const DDProblem pb(rectangle({4, 2, 1}));
  const RomModel rom(pb, 1e-6);
  ASSERT_EQ(rom.n_rb(), 1);
  EXPECT_FALSE(rom.energy_coarse());
  const auto& dp = pb.partition();
  for (Index s = 0; s < pb.n_cells(); ++s) {
    const auto exact = build_local_dd_ops(pb.stiffness_rp(s), dp, s);
    const auto& r = rom.ops(s);
    EXPECT_LE((r.U_rp - exact.U_rp).norm(), 1e-8 * exact.U_rp.norm());
    EXPECT_LE((r.U_rd - exact.U_rd).norm(), 1e-8 * exact.U_rd.norm());
    EXPECT_LE((r.F_dd - exact.F_dd).norm(), 1e-8 * exact.F_dd.norm());
    EXPECT_LE((r.S_dd - exact.S_dd).norm(), 1e-8 * exact.S_dd.norm());
    EXPECT_LE((r.S_pp - exact.S_pp).norm(), 1e-8 * exact.S_pp.norm());
  }
  const FetiDP exact(pb);
  EXPECT_LE((rom.coarse().S_PP.dense() - exact.coarse().S_PP.dense()).norm(),
            1e-8 * exact.coarse().S_PP.dense().norm());
}

TEST(RomModel, PrincipalCellsReproduceExactOperators) {
  const DDProblem pb(annulus({8, 4, 1}));
  const RomModel rom(pb, 1e-3);
  const auto& dp = pb.partition();
  for (int k = 0; k < rom.n_rb(); ++k) {
    const Index s = rom.greedy().sigma[k];
    EXPECT_EQ(rom.principal_slot(s), k);
    const auto exact = build_local_dd_ops(pb.stiffness_rp(s), dp, s);
    const auto& r = rom.ops(s);
    EXPECT_LE((r.U_rp - exact.U_rp).norm(), 1e-8 * exact.U_rp.norm());
    EXPECT_LE((r.U_rd - exact.U_rd).norm(), 1e-8 * exact.U_rd.norm());
    EXPECT_LE((r.S_dd - exact.S_dd).norm(), 1e-8 * exact.S_dd.norm());
    EXPECT_LE((r.S_pp - exact.S_pp).norm(), 1e-8 * exact.S_pp.norm());
  }
}

TEST(RomModel, ProjectionsAreGalerkinOrthogonal) {
  const DDProblem pb(annulus({8, 4, 1}));
  const RomModel rom(pb, 1e-3);
  const auto& po = rom.principal();
  for (Index s : random_cells(pb.n_cells(), 20, 7)) {
    const DenseCell c = dense_cell(pb, s);
    const auto& r = rom.ops(s);
    const Matrix ep = r.U_rp - c.U_rp, ed = r.U_rd - c.U_rd;
    for (int k = 0; k < po.size(); ++k) {
      const auto& uk = po.ops[k];
      const double scale_p = std::sqrt(energy(c.krr, uk.U_rp) * energy(c.krr, c.U_rp));
      const double scale_d = std::sqrt(energy(c.krr, uk.U_rd) * energy(c.krr, c.U_rd));
      EXPECT_LE(std::abs((uk.U_rp.transpose() * c.krr * ep).trace()), 1e-9 * scale_p) << "cell " << s;
      EXPECT_LE(std::abs((uk.U_rd.transpose() * c.krr * ed).trace()), 1e-9 * scale_d) << "cell " << s;
    }
  }
}

TEST(RomModel, ProjectionBeatsEverySingleBasisSolution) {
  const DDProblem pb(annulus({8, 4, 1}));
  const RomModel rom(pb, 1e-2);
  const auto& po = rom.principal();
  for (Index s : random_cells(pb.n_cells(), 10, 11)) {
    const DenseCell c = dense_cell(pb, s);
    const double err = energy(c.krr, rom.ops(s).U_rp - c.U_rp);
    for (int k = 0; k < po.size(); ++k) {
      const Matrix& u = po.ops[k].U_rp;
      const double t = (u.transpose() * c.krr * c.U_rp).trace() / energy(c.krr, u);
      EXPECT_LE(err, energy(c.krr, t * u - c.U_rp) * (1 + 1e-10) + 1e-14);
    }
  }
}

TEST(RomModel, ReducedOperatorsApproachExactOnesAsBasisGrows) {
  const DDProblem pb(annulus({8, 4, 1}));
  const auto& dp = pb.partition();
  const Index probe = 5;
  const auto exact = build_local_dd_ops(pb.stiffness_rp(probe), dp, probe);
  const RomModel coarse_rom(pb, 1e-2), fine_rom(pb, 1e-6);
  ASSERT_LT(coarse_rom.n_rb(), fine_rom.n_rb());
  auto err = [&](const RomModel& m) { return (m.ops(probe).S_dd - exact.S_dd).norm() / exact.S_dd.norm(); };
  EXPECT_LT(err(fine_rom), err(coarse_rom));
  EXPECT_LT(err(fine_rom), 1e-4);
}

TEST(ExtensionEnergy, DominatesExactSchurComplement) {
  const DDProblem pb(annulus({8, 4, 1}));
  const RomModel rom(pb, 1e-1);
  const auto& dp = pb.partition();
  for (Index s : {Index(3), Index(17), Index(30)}) {
    const auto exact = build_local_dd_ops(pb.stiffness_rp(s), dp, s);
    const Matrix e = extension_energy(s, rom.ops(s).U_rp, pb);
    const double lo = Eigen::SelfAdjointEigenSolver<Matrix>(e - exact.S_pp).eigenvalues().minCoeff();
    EXPECT_GE(lo, -1e-10 * exact.S_pp.norm());
    // With the exact extension the energy is the Schur complement itself.
    EXPECT_LE((extension_energy(s, exact.U_rp, pb) - exact.S_pp).norm(), 1e-9 * exact.S_pp.norm());
  }
}
