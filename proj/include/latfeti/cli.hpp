#pragma once

// Command-line level operations shared by the executable and its tests: config overrides,
// one-line summaries and the scalability benchmark sweep.

#include <filesystem>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include "latfeti/report.hpp"

namespace latfeti {

struct SolveOverrides {
  std::optional<std::string> mode;
  std::optional<double> tol_rb;
  std::optional<std::string> report_path;
  std::optional<std::string> field_path;
  std::optional<std::vector<int>> cells;
  std::optional<std::string> storage;
};

inline CaseConfig apply_overrides(CaseConfig cfg, const SolveOverrides& o) {
  if (o.mode) cfg.mode = parse_mode(*o.mode, "--mode");
  if (o.tol_rb) {
    cfg.solver.tol_rb = *o.tol_rb;
    cfg.solver.validate();
  }
  if (o.report_path) cfg.report_path = *o.report_path;
  if (o.field_path) cfg.field_path = *o.field_path;
  if (o.cells) {
    const int dim = cfg.problem.patch.dim();
    if (int(o.cells->size()) != dim) throw ValidationError("--cells", "expected " + std::to_string(dim) + " counts");
    for (int k = 0; k < dim; ++k) cfg.problem.cells[k] = (*o.cells)[k];
  }
  if (o.storage) {
    if (*o.storage == "auto") cfg.storage = Storage::Auto;
    else if (*o.storage == "cached") cfg.storage = Storage::Cached;
    else if (*o.storage == "matrix-free") cfg.storage = Storage::MatrixFree;
    else throw ValidationError("--storage", "expected auto, cached or matrix-free");
  }
  return cfg;
}

inline std::string factorization_label(const SolveReport& r, SolveMode mode) {
  if (mode == SolveMode::Direct) return "1 (global)";
  return std::to_string(r.local_factorizations) + "+" + std::to_string(r.coarse_factorizations);
}

inline std::string summary_line(const CaseResult& r) {
  std::ostringstream s;
  const auto& rep = r.report;
  s << r.config.name << ": mode " << to_string(r.config.mode) << ", " << r.n_cells << " cells, " << r.n_dofs
    << " dofs, factorizations " << factorization_label(rep, r.config.mode);
  if (r.config.mode == SolveMode::RomIFetiDP) s << ", N_rb " << rep.n_rb << ", outer its " << rep.outer_iterations;
  if (r.config.mode != SolveMode::Direct)
    s << ", inner its " << rep.inner_iterations_total() << ", residual " << std::scientific << std::setprecision(2)
      << rep.final_residual << std::defaultfloat;
  s << ", total " << std::fixed << std::setprecision(2) << r.time_total << " s";
  return s.str();
}

struct BenchRow {
  std::string case_name;
  Index cells = 0, dofs = 0;
  std::string mode;
  std::string factorizations;
  int outer_iterations = -1;  // -1: not applicable
  int inner_total = 0;
  double setup = 0.0, iterate = 0.0;
  bool converged = false;
  std::string report_file;
};

struct BenchSuite {
  std::vector<std::string> cases;
  std::vector<std::vector<int>> grids;
  std::vector<SolveMode> modes{SolveMode::FetiDP, SolveMode::RomIFetiDP};
};

inline BenchSuite bench_suite(const std::string& name) {
  if (name == "2d") return {{"rectangle", "curved-beam", "swept-patch"}, {{4, 2}, {8, 4}, {16, 8}}};
  if (name == "3d") return {{"beam3d", "curved-beam3d"}, {{2, 2, 2}, {4, 2, 2}}};
  throw ValidationError("--suite", "expected 2d or 3d");
}

//! Runs every (case, grid, mode) of the suite, writing one report per run into out_dir.
inline std::vector<BenchRow> run_bench(const BenchSuite& suite, const std::string& cases_dir,
                                       const std::string& out_dir, std::ostream* log = nullptr) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  std::vector<BenchRow> rows;
  for (const auto& name : suite.cases) {
    const CaseConfig base = load_config((fs::path(cases_dir) / (name + ".json")).string());
    for (const auto& grid : suite.grids) {
      for (SolveMode mode : suite.modes) {
        SolveOverrides o;
        o.cells = grid;
        o.mode = to_string(mode);
        std::string tag = name;
        for (std::size_t k = 0; k < grid.size(); ++k) tag += (k ? "x" : "-") + std::to_string(grid[k]);
        tag += "-" + to_string(mode);
        o.report_path = (fs::path(out_dir) / (tag + ".json")).string();
        o.field_path = std::string();
        const CaseConfig cfg = apply_overrides(base, o);
        const CaseResult r = run_case(cfg);
        write_outputs(r);
        BenchRow row;
        row.case_name = name;
        row.cells = r.n_cells;
        row.dofs = r.n_dofs;
        row.mode = to_string(mode);
        row.factorizations = factorization_label(r.report, mode);
        row.outer_iterations = mode == SolveMode::RomIFetiDP ? r.report.outer_iterations : -1;
        row.inner_total = r.report.inner_iterations_total();
        row.setup = r.report.time_setup + r.report.time_greedy + r.report.time_principal_ops;
        row.iterate = r.report.time_iterate;
        row.converged = r.report.converged;
        row.report_file = fs::path(cfg.report_path).filename().string();
        if (log) *log << summary_line(r) << std::endl;
        rows.push_back(row);
      }
    }
  }
  return rows;
}

//! Markdown table with the benchmark columns.
inline std::string format_bench_table(const std::vector<BenchRow>& rows) {
  std::ostringstream s;
  s << "| case | #cells | #DOF | mode | factorizations | Glo. It. | Loc. It. total | setup time [s] | iterate time [s] |\n";
  s << "|---|---|---|---|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    s << "| " << r.case_name << " | " << r.cells << " | " << r.dofs << " | " << r.mode << " | " << r.factorizations
      << " | " << (r.outer_iterations < 0 ? std::string("-") : std::to_string(r.outer_iterations)) << " | "
      << r.inner_total << " | " << std::fixed << std::setprecision(3) << r.setup << " | " << r.iterate << " |\n";
    s << std::defaultfloat;
  }
  return s.str();
}

}  // namespace latfeti
