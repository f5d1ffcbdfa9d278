#pragma once

// Case execution (geometry → assembly → decomposition → ROM → solve) and the schema-versioned
// JSON report.

#include <exception>
#include <fstream>
#include <memory>
#include <string>

#include "latfeti/config.hpp"
#include "latfeti/ifetidp.hpp"
#include "latfeti/vtk.hpp"

namespace latfeti {

inline constexpr const char* kReportSchema = "latfeti-report";
inline constexpr int kReportSchemaVersion = 1;

//! Failure inside one phase of run_case; the original error is nested.
class PhaseError : public Error {
 public:
  PhaseError(std::string phase, const std::string& what) : Error(phase + ": " + what), phase_(std::move(phase)) {}
  const std::string& phase() const noexcept { return phase_; }

 private:
  std::string phase_;
};

struct CaseResult {
  CaseConfig config;
  SolveReport report;  // empty for direct mode apart from timings
  Matrix nodal;        // displacement per conforming node
  double max_interface_jump = 0.0;
  Index n_cells = 0, n_dofs = 0, n_U = 0, n_L = 0, n_P = 0;
  int dim = 2;
  double time_total = 0.0;
  std::size_t direct_factor_bytes = 0;
  std::shared_ptr<const DDProblem> problem;
};

namespace detail {

template <class F>
auto in_phase(const char* phase, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const std::exception& e) {
    std::throw_with_nested(PhaseError(phase, e.what()));
  }
}

}  // namespace detail

//! Runs one configured case; outputs are written separately by write_outputs.
inline CaseResult run_case(const CaseConfig& cfg) {
  Stopwatch total;
  CaseResult r;
  r.config = cfg;
  const ProblemSpec spec = cfg.resolved_problem();
  r.problem = detail::in_phase("setup", [&] { return std::make_shared<const DDProblem>(spec); });
  const DDProblem& pb = *r.problem;
  r.n_cells = pb.n_cells();
  r.n_dofs = pb.n_global_dofs();
  r.n_U = pb.n_U();
  r.n_L = pb.n_L();
  r.n_P = pb.partition().n_P();
  r.dim = pb.dim();

  auto& rep = r.report;
  switch (cfg.mode) {
    case SolveMode::Direct: {
      const auto d = detail::in_phase("solve", [&] { return solve_direct(pb); });
      r.nodal = d.nodal;
      rep.mode = "direct";
      rep.converged = true;
      rep.time_setup = pb.setup_seconds();
      rep.time_iterate = d.seconds;
      r.direct_factor_bytes = d.factor_bytes;
      break;
    }
    case SolveMode::FetiDP: {
      const auto sol = detail::in_phase("solve", [&] { return solve_fetidp(pb, cfg.solver); });
      rep = sol.report;
      r.nodal = pb.nodal_field(sol.u, &r.max_interface_jump);
      break;
    }
    case SolveMode::RomIFetiDP: {
      const auto solver = detail::in_phase("rom", [&] { return std::make_unique<InexactFetiDP>(pb, cfg.solver); });
      const auto sol = detail::in_phase("solve", [&] { return solver->solve(); });
      rep = sol.report;
      r.nodal = pb.nodal_field(sol.u, &r.max_interface_jump);
      break;
    }
  }
  r.time_total = total.seconds();
  return r;
}

inline Json report_to_json(const CaseResult& r) {
  const auto& rep = r.report;
  const bool dd = r.config.mode != SolveMode::Direct;
  const bool rom = r.config.mode == SolveMode::RomIFetiDP;
  Json j;
  j["schema"] = kReportSchema;
  j["schema_version"] = kReportSchemaVersion;
  j["config"] = config_to_json(r.config);
  j["problem"] = {{"dim", r.dim},     {"cells", r.n_cells}, {"dofs", r.n_dofs},
                  {"n_U", r.n_U},     {"n_lambda", r.n_L},  {"n_primal", r.n_P},
                  {"matrix_free", r.config.matrix_free()}};
  Json solve;
  solve["mode"] = to_string(r.config.mode);
  solve["converged"] = rep.converged;
  solve["outer_iterations"] = rom ? Json(rep.outer_iterations) : Json();
  solve["inner_iterations_total"] = dd ? Json(rep.inner_iterations_total()) : Json();
  solve["inner_iterations_per_call"] = rep.inner_iterations_per_call;
  solve["inner_cap_hits"] = rep.inner_cap_hits;
  solve["negative_curvature_fallbacks"] = rep.negative_curvature_fallbacks;
  solve["residual_history"] = rep.residual_history;
  solve["final_residual"] = dd ? Json(rep.final_residual) : Json();
  solve["constraint_residual"] = dd ? Json(rep.constraint_residual) : Json();
  j["solve"] = solve;
  if (rom)
    j["rom"] = {{"n_rb", rep.n_rb}, {"greedy_residual", rep.greedy_residual}, {"principal_cells", rep.principal_cells}};
  else
    j["rom"] = nullptr;
  j["factorizations"] = {{"local", rep.local_factorizations},
                         {"coarse", rep.coarse_factorizations},
                         {"global", dd ? 0 : 1},
                         {"peak_held", rep.peak_held_factorizations},
                         {"peak_factor_bytes", dd ? rep.peak_local_factor_bytes : r.direct_factor_bytes}};
  double max_abs = r.nodal.size() ? r.nodal.cwiseAbs().maxCoeff() : 0.0;
  j["solution"] = {{"l2", r.nodal.norm()}, {"max_abs", max_abs}, {"max_interface_jump", r.max_interface_jump}};
  j["timings"] = {{"setup", rep.time_setup},
                  {"greedy", rep.time_greedy},
                  {"local_ops", rep.time_principal_ops},
                  {"iterate", rep.time_iterate},
                  {"total", r.time_total}};
  j["warnings"] = rep.warnings;
  return j;
}

inline void write_json(const std::string& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write to '" + path + "' failed");
}

//! Writes whatever outputs the configuration requests.
inline void write_outputs(const CaseResult& r) {
  if (!r.config.report_path.empty()) write_json(r.config.report_path, report_to_json(r));
  if (!r.config.field_path.empty()) export_field(*r.problem, r.nodal, r.config.field_path);
}

}  // namespace latfeti
