#pragma once

// JSON case configuration: strict parsing (unknown keys rejected), defaults, validation with
// field paths, and a normalized echo for reports. The schema is documented in
// docs/config-schema.md.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "latfeti/problem.hpp"

namespace latfeti {

using Json = nlohmann::ordered_json;

inline constexpr int kConfigSchemaVersion = 1;

enum class SolveMode { Direct, FetiDP, RomIFetiDP };
enum class Storage { Auto, Cached, MatrixFree };

inline std::string to_string(SolveMode m) {
  switch (m) {
    case SolveMode::Direct: return "direct";
    case SolveMode::FetiDP: return "fetidp";
    case SolveMode::RomIFetiDP: return "rom-ifetidp";
  }
  return "?";
}

inline SolveMode parse_mode(const std::string& s, const std::string& field = "solver.mode") {
  if (s == "direct") return SolveMode::Direct;
  if (s == "fetidp") return SolveMode::FetiDP;
  if (s == "rom-ifetidp") return SolveMode::RomIFetiDP;
  throw ValidationError(field, "unknown mode '" + s + "' (direct, fetidp, rom-ifetidp)");
}

inline std::string to_string(Storage s) {
  switch (s) {
    case Storage::Auto: return "auto";
    case Storage::Cached: return "cached";
    case Storage::MatrixFree: return "matrix-free";
  }
  return "?";
}

struct CaseConfig {
  std::string name = "case";
  Json macro;  // validated macro section, echoed verbatim with defaults filled
  ProblemSpec problem;
  SolveMode mode = SolveMode::RomIFetiDP;
  SolverOptions solver;
  Storage storage = Storage::Auto;
  std::string report_path;  // empty: none
  std::string field_path;   // empty: none

  //! Matrix-free products unless cached storage is requested; auto keeps only principal
  //! matrices alive in rom-ifetidp mode and caches cell matrices otherwise.
  bool matrix_free() const {
    return storage == Storage::MatrixFree || (storage == Storage::Auto && mode == SolveMode::RomIFetiDP);
  }
  ProblemSpec resolved_problem() const {
    ProblemSpec p = problem;
    p.matrix_free = matrix_free();
    return p;
  }
};

namespace detail {

// View of a JSON object that records which keys were read and rejects the rest.
class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) throw ValidationError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const Json* find(const std::string& key) {
    seen_.push_back(key);
    const auto it = j_.find(key);
    return it == j_.end() || it->is_null() ? nullptr : &*it;
  }
  const Json& require(const std::string& key) {
    const Json* v = find(key);
    if (!v) throw ValidationError(field(key), "is required");
    return *v;
  }

  double number(const std::string& key, double def) {
    const Json* v = find(key);
    return v ? as_number(*v, field(key)) : def;
  }
  int integer(const std::string& key, int def) {
    const Json* v = find(key);
    return v ? as_int(*v, field(key)) : def;
  }
  std::string string(const std::string& key, const std::string& def) {
    const Json* v = find(key);
    return v ? as_string(*v, field(key)) : def;
  }
  bool boolean(const std::string& key, bool def) {
    const Json* v = find(key);
    if (!v) return def;
    if (!v->is_boolean()) throw ValidationError(field(key), "expected true or false");
    return v->get<bool>();
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (std::find(seen_.begin(), seen_.end(), it.key()) == seen_.end())
        throw ValidationError(field(it.key()), "unknown key");
  }

  static double as_number(const Json& v, const std::string& f) {
    if (!v.is_number()) throw ValidationError(f, "expected a number");
    return v.get<double>();
  }
  static int as_int(const Json& v, const std::string& f) {
    if (!v.is_number_integer()) throw ValidationError(f, "expected an integer");
    return v.get<int>();
  }
  static std::string as_string(const Json& v, const std::string& f) {
    if (!v.is_string()) throw ValidationError(f, "expected a string");
    return v.get<std::string>();
  }

 private:
  const Json& j_;
  std::string path_;
  std::vector<std::string> seen_;
};

inline Vector number_array(const Json& v, const std::string& f, Index expected = -1) {
  if (!v.is_array()) throw ValidationError(f, "expected an array of numbers");
  if (expected >= 0 && Index(v.size()) != expected)
    throw ValidationError(f, "expected " + std::to_string(expected) + " entries");
  Vector out(Index(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i)
    out(Index(i)) = ObjectReader::as_number(v[i], f + "[" + std::to_string(i) + "]");
  return out;
}

inline Point point(const Json& v, const std::string& f, int dim) {
  const Vector a = number_array(v, f, dim);
  return Point(a);
}

inline std::vector<int> int_array(const Json& v, const std::string& f) {
  if (!v.is_array()) throw ValidationError(f, "expected an array of integers");
  std::vector<int> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(ObjectReader::as_int(v[i], f + "[" + std::to_string(i) + "]"));
  return out;
}

inline Json to_json(const Point& p) { return Json(std::vector<double>(p.data(), p.data() + p.size())); }

// Parses the macro section; returns the patch and fills `echo` with the normalized section.
inline MacroPatch parse_macro(const Json& j, Json& echo) {
  ObjectReader r(j, "macro");
  const std::string kind = r.string("kind", "");
  echo = Json::object();
  echo["kind"] = kind;
  MacroPatch patch;
  if (kind == "box") {
    const Json& origin = r.require("origin");
    const int dim = origin.is_array() ? int(origin.size()) : 0;
    if (dim != 2 && dim != 3) throw ValidationError("macro.origin", "expected 2 or 3 coordinates");
    const Point o = point(origin, "macro.origin", dim), s = point(r.require("size"), "macro.size", dim);
    for (int k = 0; k < dim; ++k)
      if (!(s(k) > 0.0)) throw ValidationError("macro.size", "extents must be positive");
    patch = MacroPatch::affine_box(o, s);
    echo["origin"] = to_json(o);
    echo["size"] = to_json(s);
  } else if (kind == "quarter-annulus") {
    const int dim = r.integer("dim", 2);
    if (dim != 2 && dim != 3) throw ValidationError("macro.dim", "must be 2 or 3");
    const double ri = r.number("inner_radius", 1.0), ro = r.number("outer_radius", 2.0);
    const double h = r.number("height", 1.0);
    if (!(h > 0.0)) throw ValidationError("macro.height", "must be positive");
    patch = MacroPatch::quarter_annulus(ri, ro, dim, h);
    echo["dim"] = dim;
    echo["inner_radius"] = ri;
    echo["outer_radius"] = ro;
    if (dim == 3) echo["height"] = h;
  } else if (kind == "bezier") {
    const int dim = r.integer("dim", 2);
    if (dim != 2 && dim != 3) throw ValidationError("macro.dim", "must be 2 or 3");
    const auto deg = int_array(r.require("degree"), "macro.degree");
    if (int(deg.size()) != dim) throw ValidationError("macro.degree", "expected one degree per direction");
    std::vector<int> el(dim, 1);
    if (const Json* e = r.find("elements")) el = int_array(*e, "macro.elements");
    if (int(el.size()) != dim) throw ValidationError("macro.elements", "expected one count per direction");
    const Json& cp = r.require("control_points");
    if (!cp.is_array()) throw ValidationError("macro.control_points", "expected an array of points");
    Matrix control(dim, Index(cp.size()));
    for (std::size_t i = 0; i < cp.size(); ++i)
      control.col(Index(i)) = number_array(cp[i], "macro.control_points[" + std::to_string(i) + "]", dim);
    Vector w = Vector::Ones(control.cols());
    if (const Json* wj = r.find("weights")) w = number_array(*wj, "macro.weights");
    std::array<int, 3> d3{1, 1, 1}, e3{1, 1, 1};
    for (int k = 0; k < dim; ++k) d3[k] = deg[k], e3[k] = el[k];
    patch = MacroPatch::bezier_grid(dim, d3, e3, control, w);
    echo["dim"] = dim;
    echo["degree"] = deg;
    echo["elements"] = el;
    echo["control_points"] = cp;
    echo["weights"] = std::vector<double>(w.data(), w.data() + w.size());
  } else {
    throw ValidationError("macro.kind", "expected box, quarter-annulus or bezier");
  }
  r.finish();
  return patch;
}

inline int parse_face(const Json& v, const std::string& f, int dim) {
  const std::string name = ObjectReader::as_string(v, f);
  const int face = face_from_name(name);
  if (face < 0 || face >= 2 * dim) throw ValidationError(f, "unknown face '" + name + "'");
  return face;
}

}  // namespace detail

//! Parses and validates a configuration document.
inline CaseConfig parse_config(const Json& j) {
  using detail::ObjectReader;
  CaseConfig cfg;
  ObjectReader root(j, "");
  if (const Json* v = root.find("schema_version"); v && ObjectReader::as_int(*v, "schema_version") != kConfigSchemaVersion)
    throw ValidationError("schema_version", "unsupported version (expected " + std::to_string(kConfigSchemaVersion) + ")");
  cfg.name = root.string("name", cfg.name);

  auto& p = cfg.problem;
  p.patch = detail::parse_macro(root.require("macro"), cfg.macro);
  const int dim = p.patch.dim();

  const auto cells = detail::int_array(root.require("cells"), "cells");
  if (int(cells.size()) != dim) throw ValidationError("cells", "expected " + std::to_string(dim) + " counts");
  p.cells = {1, 1, 1};
  for (int k = 0; k < dim; ++k) p.cells[k] = cells[k];

  {
    ObjectReader r(root.require("cell"), "cell");
    p.cell.name = r.string("pattern", "");
    if (p.cell.name.empty()) throw ValidationError("cell.pattern", "is required");
    try {
      if (detail::pattern_dim(p.cell.name) != dim)
        throw ValidationError("cell.pattern", "pattern dimension differs from the macro patch");
    } catch (const UnknownPattern& e) {
      throw ValidationError("cell.pattern", e.what());
    }
    p.cell.degree = r.integer("degree", 1);
    if (p.cell.degree < 1 || p.cell.degree > 3) throw ValidationError("cell.degree", "must be 1, 2 or 3");
    p.cell.refinement = r.integer("refinement", 0);
    if (p.cell.refinement < 0 || p.cell.refinement > 4) throw ValidationError("cell.refinement", "must lie in [0, 4]");
    p.cell.strut_thickness = r.number("strut_thickness", p.cell.strut_thickness);
    if (!(p.cell.strut_thickness > 0.0 && p.cell.strut_thickness < 1.0))
      throw ValidationError("cell.strut_thickness", "must lie in (0, 1)");
    r.finish();
  }

  if (const Json* m = root.find("material")) {
    ObjectReader r(*m, "material");
    p.material.E = r.number("E", p.material.E);
    p.material.nu = r.number("nu", p.material.nu);
    if (const Json* sc = r.find("cell_E_scale")) {
      const Vector v = detail::number_array(*sc, "material.cell_E_scale");
      p.cell_E_scale.assign(v.data(), v.data() + v.size());
      for (double x : p.cell_E_scale)
        if (!(x > 0.0)) throw ValidationError("material.cell_E_scale", "multipliers must be positive");
    }
    r.finish();
  }
  p.material.validate();

  {
    ObjectReader r(root.require("bcs"), "bcs");
    const Json* dir = r.find("dirichlet");
    if (!dir || !dir->is_array() || dir->empty())
      throw ValidationError("bcs.dirichlet", "at least one Dirichlet condition is required");
    for (std::size_t i = 0; i < dir->size(); ++i) {
      const std::string f = "bcs.dirichlet[" + std::to_string(i) + "]";
      ObjectReader b((*dir)[i], f);
      DirichletBC bc;
      bc.face = detail::parse_face(b.require("face"), f + ".face", dim);
      if (const Json* c = b.find("components")) {
        bc.components = detail::int_array(*c, f + ".components");
        for (int comp : bc.components)
          if (comp < 0 || comp >= dim) throw ValidationError(f + ".components", "component out of range");
      }
      if (const Json* v = b.find("value")) bc.value = detail::point(*v, f + ".value", dim);
      if (const Json* g = b.find("gradient")) {
        if (!g->is_array() || int(g->size()) != dim) throw ValidationError(f + ".gradient", "expected a square matrix");
        bc.gradient.resize(dim, dim);
        for (int row = 0; row < dim; ++row)
          bc.gradient.row(row) = detail::number_array((*g)[row], f + ".gradient[" + std::to_string(row) + "]", dim);
      }
      b.finish();
      p.dirichlet.push_back(std::move(bc));
    }
    if (const Json* neu = r.find("neumann")) {
      if (!neu->is_array()) throw ValidationError("bcs.neumann", "expected an array");
      for (std::size_t i = 0; i < neu->size(); ++i) {
        const std::string f = "bcs.neumann[" + std::to_string(i) + "]";
        ObjectReader b((*neu)[i], f);
        NeumannBC bc;
        bc.face = detail::parse_face(b.require("face"), f + ".face", dim);
        bc.traction = detail::point(b.require("traction"), f + ".traction", dim);
        b.finish();
        p.neumann.push_back(std::move(bc));
      }
    }
    if (const Json* bf = r.find("body_force")) p.body_force = detail::point(*bf, "bcs.body_force", dim);
    r.finish();
  }

  if (const Json* s = root.find("solver")) {
    ObjectReader r(*s, "solver");
    if (const Json* m = r.find("mode")) cfg.mode = parse_mode(ObjectReader::as_string(*m, "solver.mode"));
    auto& o = cfg.solver;
    o.tol_gmres = r.number("tol_gmres", o.tol_gmres);
    o.tol_cg = r.number("tol_cg", o.tol_cg);
    o.tol_rb = r.number("tol_rb", o.tol_rb);
    o.max_outer = r.integer("max_outer", o.max_outer);
    o.max_inner = r.integer("max_inner", o.max_inner);
    p.fit_degree = r.integer("fit_degree", p.fit_degree);
    if (p.fit_degree < 1 || p.fit_degree > 6) throw ValidationError("solver.fit_degree", "must lie in [1, 6]");
    const std::string storage = r.string("storage", "auto");
    if (storage == "auto") cfg.storage = Storage::Auto;
    else if (storage == "cached") cfg.storage = Storage::Cached;
    else if (storage == "matrix-free") cfg.storage = Storage::MatrixFree;
    else throw ValidationError("solver.storage", "expected auto, cached or matrix-free");
    r.finish();
  }
  cfg.solver.validate();

  if (const Json* o = root.find("output")) {
    ObjectReader r(*o, "output");
    cfg.report_path = r.string("report", "");
    cfg.field_path = r.string("field", "");
    r.finish();
  }
  root.finish();
  return cfg;
}

inline CaseConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
  CaseConfig cfg = parse_config(j);
  if (!j.contains("name")) cfg.name = std::filesystem::path(path).stem().string();
  return cfg;
}

//! Normalized configuration with every default spelled out.
inline Json config_to_json(const CaseConfig& cfg) {
  const auto& p = cfg.problem;
  const int dim = p.patch.dim();
  Json j;
  j["schema_version"] = kConfigSchemaVersion;
  j["name"] = cfg.name;
  j["macro"] = cfg.macro;
  j["cells"] = std::vector<int>(p.cells.begin(), p.cells.begin() + dim);
  j["cell"] = {{"pattern", p.cell.name},
               {"degree", p.cell.degree},
               {"refinement", p.cell.refinement},
               {"strut_thickness", p.cell.strut_thickness}};
  j["material"] = {{"E", p.material.E}, {"nu", p.material.nu}};
  if (!p.cell_E_scale.empty()) j["material"]["cell_E_scale"] = p.cell_E_scale;
  Json dir = Json::array();
  for (const auto& bc : p.dirichlet) {
    Json b{{"face", face_name(bc.face)}};
    if (!bc.components.empty()) b["components"] = bc.components;
    if (bc.value.size()) b["value"] = detail::to_json(bc.value);
    if (bc.gradient.size()) {
      Json g = Json::array();
      for (int r = 0; r < dim; ++r) g.push_back(detail::to_json(Point(bc.gradient.row(r).transpose())));
      b["gradient"] = g;
    }
    dir.push_back(b);
  }
  Json neu = Json::array();
  for (const auto& bc : p.neumann) neu.push_back({{"face", face_name(bc.face)}, {"traction", detail::to_json(bc.traction)}});
  j["bcs"] = {{"dirichlet", dir}, {"neumann", neu}};
  if (p.body_force.size()) j["bcs"]["body_force"] = detail::to_json(p.body_force);
  const auto& o = cfg.solver;
  j["solver"] = {{"mode", to_string(cfg.mode)}, {"tol_gmres", o.tol_gmres}, {"tol_cg", o.tol_cg},
                 {"tol_rb", o.tol_rb},          {"fit_degree", p.fit_degree}, {"max_outer", o.max_outer},
                 {"max_inner", o.max_inner},   {"storage", to_string(cfg.storage)}};
  j["output"] = {{"report", cfg.report_path.empty() ? Json() : Json(cfg.report_path)},
                 {"field", cfg.field_path.empty() ? Json() : Json(cfg.field_path)}};
  return j;
}

}  // namespace latfeti
