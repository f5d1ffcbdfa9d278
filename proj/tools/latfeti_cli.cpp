// latfeti_cli: run configured cases and scalability sweeps.
//
//   latfeti_cli solve --config <path> [--mode direct|fetidp|rom-ifetidp] [--tol-rb X]
//                     [--report <path>] [--export-field <path>] [--cells NX NY [NZ]]
//                     [--storage auto|cached|matrix-free]
//   latfeti_cli bench --suite 2d|3d --out <dir> [--cases <dir>]
//
// Exit codes: 0 success, 1 solver failure, 2 invalid input.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>

#include "latfeti/cli.hpp"

namespace {

void print_nested(const std::exception& e, int depth = 0) {
  std::cerr << std::string(2 * depth, ' ') << e.what() << '\n';
  try {
    std::rethrow_if_nested(e);
  } catch (const std::exception& inner) {
    print_nested(inner, depth + 1);
  }
}

// Innermost nested error decides between invalid input and solver failure.
int classify(const std::exception& e) {
  try {
    std::rethrow_if_nested(e);
  } catch (const std::exception& inner) {
    return classify(inner);
  }
  if (dynamic_cast<const latfeti::ValidationError*>(&e) || dynamic_cast<const latfeti::ParseError*>(&e) ||
      dynamic_cast<const latfeti::IoError*>(&e) || dynamic_cast<const latfeti::UnknownPattern*>(&e) ||
      dynamic_cast<const latfeti::FaceNotOnBoundary*>(&e) || dynamic_cast<const latfeti::DegenerateJacobian*>(&e))
    return 2;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Domain decomposition solver for lattice structures"};
  app.require_subcommand(1);

  auto* solve = app.add_subcommand("solve", "Solve one configured case");
  std::string config;
  latfeti::SolveOverrides ov;
  std::string mode, report, field, storage;
  double tol_rb = 0.0;
  std::vector<int> cells;
  solve->add_option("--config", config, "Case configuration (JSON)")->required()->check(CLI::ExistingFile);
  auto* mode_opt = solve->add_option("--mode", mode, "Solver mode")
                       ->check(CLI::IsMember({"direct", "fetidp", "rom-ifetidp"}));
  auto* tol_opt = solve->add_option("--tol-rb", tol_rb, "Greedy tolerance of the reduced model");
  auto* report_opt = solve->add_option("--report", report, "Report output path (JSON)");
  auto* field_opt = solve->add_option("--export-field", field, "Displacement/stress field output path (VTK)");
  auto* cells_opt = solve->add_option("--cells", cells, "Cell grid override")->expected(2, 3);
  auto* storage_opt = solve->add_option("--storage", storage, "Cell matrix storage")
                          ->check(CLI::IsMember({"auto", "cached", "matrix-free"}));

  auto* bench = app.add_subcommand("bench", "Run a scalability sweep");
  std::string suite, out_dir, cases_dir = std::string(LATFETI_SOURCE_DIR) + "/cases";
  bench->add_option("--suite", suite, "Sweep to run")->required()->check(CLI::IsMember({"2d", "3d"}));
  bench->add_option("--out", out_dir, "Output directory")->required();
  bench->add_option("--cases", cases_dir, "Directory of bundled case configurations");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*solve) {
      if (*mode_opt) ov.mode = mode;
      if (*tol_opt) ov.tol_rb = tol_rb;
      if (*report_opt) ov.report_path = report;
      if (*field_opt) ov.field_path = field;
      if (*cells_opt) ov.cells = cells;
      if (*storage_opt) ov.storage = storage;
      const auto cfg = latfeti::apply_overrides(latfeti::load_config(config), ov);
      const auto result = latfeti::run_case(cfg);
      latfeti::write_outputs(result);
      std::cout << latfeti::summary_line(result) << '\n';
      for (const auto& w : result.report.warnings) std::cout << "warning: " << w << '\n';
      return result.report.converged ? 0 : 1;
    }
    const auto rows = latfeti::run_bench(latfeti::bench_suite(suite), cases_dir, out_dir, &std::cout);
    const std::string table = latfeti::format_bench_table(rows);
    std::ofstream(out_dir + "/summary.md") << table;
    std::cout << '\n' << table;
    for (const auto& r : rows)
      if (!r.converged) return 1;
    return 0;
  } catch (const std::exception& e) {
    print_nested(e);
    return classify(e);
  }
}
