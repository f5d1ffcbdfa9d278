// Curved lattice cantilever built through the library API: solve it with all three solvers,
// compare against the direct solution and write the field for ParaView.
//
//   demo_cantilever [output.vtk]

#include <cstdio>

#include "latfeti/ifetidp.hpp"
#include "latfeti/vtk.hpp"

using namespace latfeti;

int main(int argc, char** argv) {
  ProblemSpec spec;
  spec.patch = MacroPatch::quarter_annulus(1.0, 2.0);
  spec.cells = {16, 8, 1};
  spec.cell = {"cross-hollow-square2d", 1, 0};
  spec.material = {5000.0, 0.4};
  spec.dirichlet = {DirichletBC{0, {}, {}, {}}};  // clamp xmin
  Point traction(2);
  traction << 0.0, -1.0;
  spec.neumann = {NeumannBC{1, traction}};  // load xmax

  try {
    const DDProblem pb(spec);
    std::printf("%ld cells, %ld dofs\n", long(pb.n_cells()), long(pb.n_global_dofs()));

    Stopwatch t_direct;
    const auto direct = solve_direct(pb);
    std::printf("direct       %.2f s\n", t_direct.seconds());

    Stopwatch t_feti;
    const auto feti = solve_fetidp(pb);
    std::printf("fetidp       %.2f s, %d PCG iterations, %d local factorizations, error %.2e\n", t_feti.seconds(),
                feti.report.inner_iterations_total(), feti.report.local_factorizations,
                relative_l2(pb.nodal_field(feti.u), direct.nodal));

    SolverOptions opts;
    opts.tol_rb = 1e-4;
    Stopwatch t_rom;
    const auto rom = solve_ifetidp(pb, opts);
    std::printf("rom-ifetidp  %.2f s, N_rb %d, %d outer iterations, error %.2e\n", t_rom.seconds(), rom.report.n_rb,
                rom.report.outer_iterations, relative_l2(pb.nodal_field(rom.u), direct.nodal));

    const std::string path = argc > 1 ? argv[1] : "cantilever.vtk";
    export_field(pb, pb.nodal_field(rom.u), path);
    std::printf("wrote %s\n", path.c_str());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 1;
  }
  return 0;
}
