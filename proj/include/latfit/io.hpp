#pragma once

// File formats: atom CSV, JSON run configurations and generator specs, JSON
// fit/loop reports, field CSV tables and SVG heatmaps.

#include "latfit/fields.hpp"
#include "latfit/generators.hpp"

#include <json.hpp>

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace latfit::io {

using Json = nlohmann::ordered_json;

/// Shortest decimal text that reads back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, std::size_t line) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (!s.empty() && *first == '+') ++first;
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last || s.empty())
    throw Error("line " + std::to_string(line) + ": cannot parse number '" + std::string(s) + "'");
  return v;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

inline std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes through a sibling temporary file and renames it into place.
inline void write_file_atomic(const std::string& path, const std::string& content) {
  const std::filesystem::path target(path);
  std::filesystem::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) throw Error("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, target, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error("cannot rename onto '" + path + "': " + ec.message());
  }
}

// ---- atoms ----------------------------------------------------------------

template <int Dim>
std::string atoms_csv(const Configuration<Dim>& chi) {
  static const char* names[] = {"x", "y", "z"};
  std::string out;
  for (int k = 0; k < Dim; ++k) (out += names[k]) += ',';
  out += "kind\n";
  for (std::size_t i = 0; i < chi.size(); ++i) {
    for (int k = 0; k < Dim; ++k) (out += format_double(chi.position(i)(k))) += ',';
    out += chi.kind(i) == AtomKind::Interior ? "I\n" : "S\n";
  }
  return out;
}

/// Spatial dimension announced by an atom CSV header.
inline int atoms_dimension(const std::string& text) {
  const std::string header = strip_cr(text.substr(0, text.find('\n')));
  if (header == "x,y,kind") return 2;
  if (header == "x,y,z,kind") return 3;
  throw Error("line 1: expected header 'x,y,kind' or 'x,y,z,kind'");
}

/// Parses an atom CSV. Ω is the bounding box of the interior atoms.
template <int Dim>
Configuration<Dim> parse_atoms_csv(const std::string& text, double cell_edge) {
  if (atoms_dimension(text) != Dim) throw Error("line 1: atom file has the wrong dimension");
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  std::vector<Vec<Dim>> pos;
  std::vector<AtomKind> kinds;
  std::size_t number = 1;
  while (std::getline(in, line)) {
    ++number;
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != Dim + 1)
      throw Error("line " + std::to_string(number) + ": expected " + std::to_string(Dim + 1) + " fields");
    Vec<Dim> p;
    for (int k = 0; k < Dim; ++k) p(k) = parse_double(cells[k], number);
    if (!p.allFinite()) throw Error("line " + std::to_string(number) + ": non-finite coordinate");
    if (cells[Dim] == "I")
      kinds.push_back(AtomKind::Interior);
    else if (cells[Dim] == "S")
      kinds.push_back(AtomKind::Boundary);
    else
      throw Error("line " + std::to_string(number) + ": kind must be I or S");
    pos.push_back(p);
  }
  Box<Dim> box;
  bool any = false;
  for (std::size_t i = 0; i < pos.size(); ++i) {
    if (kinds[i] != AtomKind::Interior) continue;
    box.lo = any ? box.lo.cwiseMin(pos[i]) : pos[i];
    box.hi = any ? box.hi.cwiseMax(pos[i]) : pos[i];
    any = true;
  }
  return Configuration<Dim>(std::move(pos), std::move(kinds), box, cell_edge);
}

// ---- JSON helpers ---------------------------------------------------------

inline void require_known_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw Error(where + ": expected a JSON object");
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || item.key() == a;
    if (!ok) throw Error(where + ": unknown key '" + item.key() + "'");
  }
}

inline double get_number(const Json& j, const std::string& where) {
  if (!j.is_number()) throw Error(where + ": expected a number");
  return j.get<double>();
}

template <int Dim>
Json to_json(const Vec<Dim>& v) {
  Json a = Json::array();
  for (int k = 0; k < Dim; ++k) a.push_back(v(k));
  return a;
}

template <int Dim>
Json to_json(const IVec<Dim>& v) {
  Json a = Json::array();
  for (int k = 0; k < Dim; ++k) a.push_back(v(k));
  return a;
}

template <int Dim>
Json to_json(const Mat<Dim>& m) {
  Json a = Json::array();
  for (int r = 0; r < Dim; ++r) {
    Json row = Json::array();
    for (int c = 0; c < Dim; ++c) row.push_back(m(r, c));
    a.push_back(row);
  }
  return a;
}

template <int Dim>
Json to_json(const IMat<Dim>& m) {
  Json a = Json::array();
  for (int r = 0; r < Dim; ++r) {
    Json row = Json::array();
    for (int c = 0; c < Dim; ++c) row.push_back(m(r, c));
    a.push_back(row);
  }
  return a;
}

template <int Dim>
Vec<Dim> vec_from_json(const Json& j, const std::string& where) {
  if (!j.is_array() || j.size() != Dim) throw Error(where + ": expected " + std::to_string(Dim) + " numbers");
  Vec<Dim> v;
  for (int k = 0; k < Dim; ++k) v(k) = get_number(j[k], where);
  return v;
}

template <int Dim>
Mat<Dim> mat_from_json(const Json& j, const std::string& where) {
  if (!j.is_array() || j.size() != Dim) throw Error(where + ": expected a " + std::to_string(Dim) + "x" +
                                                    std::to_string(Dim) + " matrix");
  Mat<Dim> m;
  for (int r = 0; r < Dim; ++r) m.row(r) = vec_from_json<Dim>(j[r], where).transpose();
  return m;
}

/// Dimension implied by a square matrix entry, or `fallback` when absent.
inline int matrix_dimension(const Json& j, const char* key, int fallback) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  const Json& m = j.at(key);
  if (!m.is_array() || (m.size() != 2 && m.size() != 3)) throw Error(std::string(key) + ": expected a 2x2 or 3x3 matrix");
  return static_cast<int>(m.size());
}

inline Json parse_json(const std::string& text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(what + ": " + e.what());
  }
}

// ---- run configuration ----------------------------------------------------

/// Options of the `check` command.
struct CheckOptions {
  /// Grid as (ox, oy, h, nx, ny); empty means a grid covering Ω at spacing λ/4
  /// kept 2λ away from its edges.
  std::vector<double> grid;
  /// Relabeling used for the reparametrisation sandwich.
  IMat<2> sandwich_B = (IMat<2>() << 1, 1, 0, 1).finished();
  double tol = 1e-10;
};

template <int Dim>
struct RunConfig {
  ModelParams<Dim> model;
  double cell_edge = 0.0;  // 0: use 2λ
  CheckOptions check;

  double effective_cell_edge() const { return cell_edge > 0.0 ? cell_edge : 2.0 * model.lambda; }
};

template <int Dim>
RunConfig<Dim> run_config_from_json(const Json& j) {
  require_known_keys(j, {"lambda", "s0", "vartheta", "E", "c1", "c2", "eps_hat", "thresholds", "fc_b_range",
                         "c_nabla2_factor", "solver", "cell_edge", "check"},
                     "params");
  if (matrix_dimension(j, "E", Dim) != Dim) throw Error("params: E does not match the atom dimension");
  RunConfig<Dim> rc;
  auto& p = rc.model;
  p.lambda = j.contains("lambda") ? get_number(j["lambda"], "params.lambda") : p.lambda;
  p.s0 = j.contains("s0") ? get_number(j["s0"], "params.s0") : p.s0;
  p.vartheta = j.contains("vartheta") ? get_number(j["vartheta"], "params.vartheta") : p.vartheta;
  if (j.contains("E")) p.E = mat_from_json<Dim>(j["E"], "params.E");
  p.c1_el = j.contains("c1") ? get_number(j["c1"], "params.c1") : p.c1_el;
  p.c2_el = j.contains("c2") ? get_number(j["c2"], "params.c2") : p.c2_el;
  p.eps_hat = j.contains("eps_hat") ? get_number(j["eps_hat"], "params.eps_hat") : p.eps_hat;
  p.fc_b_range = j.contains("fc_b_range") ? static_cast<int>(get_number(j["fc_b_range"], "params.fc_b_range"))
                                          : p.fc_b_range;
  p.c_nabla2_factor = j.contains("c_nabla2_factor") ? get_number(j["c_nabla2_factor"], "params.c_nabla2_factor")
                                                    : p.c_nabla2_factor;
  p.refresh_thresholds();
  if (j.contains("thresholds")) {
    const Json& t = j["thresholds"];
    require_known_keys(t, {"eps_rho", "eps_J", "C_A"}, "params.thresholds");
    if (t.contains("eps_rho")) p.thresholds.eps_rho = get_number(t["eps_rho"], "params.thresholds.eps_rho");
    if (t.contains("eps_J")) p.thresholds.eps_J = get_number(t["eps_J"], "params.thresholds.eps_J");
    if (t.contains("C_A")) p.thresholds.C_A = get_number(t["C_A"], "params.thresholds.C_A");
  }
  if (j.contains("solver")) {
    const Json& s = j["solver"];
    require_known_keys(s, {"tol_grad", "max_iterations", "armijo", "backtrack", "delta_aff", "eps_nu",
                           "init_vectors", "max_candidates"},
                       "params.solver");
    auto& o = p.solver;
    if (s.contains("tol_grad")) o.tol_grad = get_number(s["tol_grad"], "params.solver.tol_grad");
    if (s.contains("max_iterations"))
      o.max_iterations = static_cast<int>(get_number(s["max_iterations"], "params.solver.max_iterations"));
    if (s.contains("armijo")) o.armijo = get_number(s["armijo"], "params.solver.armijo");
    if (s.contains("backtrack")) o.backtrack = get_number(s["backtrack"], "params.solver.backtrack");
    if (s.contains("delta_aff")) o.delta_aff = get_number(s["delta_aff"], "params.solver.delta_aff");
    if (s.contains("eps_nu")) o.eps_nu = get_number(s["eps_nu"], "params.solver.eps_nu");
    if (s.contains("init_vectors"))
      o.init_vectors = static_cast<int>(get_number(s["init_vectors"], "params.solver.init_vectors"));
    if (s.contains("max_candidates"))
      o.max_candidates = static_cast<int>(get_number(s["max_candidates"], "params.solver.max_candidates"));
  }
  if (j.contains("cell_edge")) rc.cell_edge = get_number(j["cell_edge"], "params.cell_edge");
  if (j.contains("check")) {
    const Json& c = j["check"];
    require_known_keys(c, {"grid", "sandwich_B", "tol"}, "params.check");
    if (c.contains("grid")) {
      const Json& g = c["grid"];
      if (!g.is_array() || g.size() != 5) throw Error("params.check.grid: expected [ox, oy, h, nx, ny]");
      for (const auto& v : g) rc.check.grid.push_back(get_number(v, "params.check.grid"));
    }
    if (c.contains("sandwich_B")) {
      const Mat<2> b = mat_from_json<2>(c["sandwich_B"], "params.check.sandwich_B");
      rc.check.sandwich_B = round_to_int<2>(b);
      if (int_det<2>(rc.check.sandwich_B) != 1) throw Error("params.check.sandwich_B: det must be 1");
    }
    if (c.contains("tol")) rc.check.tol = get_number(c["tol"], "params.check.tol");
  }
  p.validate();
  return rc;
}

// ---- generator specs ------------------------------------------------------

template <int Dim>
GeneratorSpec<Dim> generator_spec_from_json(const Json& j) {
  require_known_keys(j, {"kind", "A", "tau", "box", "band", "sigma", "vacancy_fraction", "cores", "poisson", "gamma",
                         "kappa", "amplitude", "wavelength", "angle", "s0", "seed"},
                     "spec");
  if (matrix_dimension(j, "A", 2) != Dim) throw Error("spec: A does not match the requested dimension");
  GeneratorSpec<Dim> s;
  if (!j.contains("kind") || !j["kind"].is_string()) throw Error("spec.kind: expected a string");
  s.kind = generator_kind_from_string(j["kind"].get<std::string>());
  if (j.contains("A")) s.A = mat_from_json<Dim>(j["A"], "spec.A");
  if (j.contains("tau")) s.tau = vec_from_json<Dim>(j["tau"], "spec.tau");
  if (j.contains("box")) {
    require_known_keys(j["box"], {"lo", "hi"}, "spec.box");
    s.box.lo = vec_from_json<Dim>(j["box"].at("lo"), "spec.box.lo");
    s.box.hi = vec_from_json<Dim>(j["box"].at("hi"), "spec.box.hi");
  }
  auto num = [&](const char* key, double& out) {
    if (j.contains(key)) out = get_number(j[key], std::string("spec.") + key);
  };
  num("band", s.band);
  num("sigma", s.sigma);
  num("vacancy_fraction", s.vacancy_fraction);
  num("poisson", s.poisson);
  num("gamma", s.gamma);
  num("kappa", s.kappa);
  num("amplitude", s.amplitude);
  num("wavelength", s.wavelength);
  num("angle", s.angle);
  num("s0", s.s0);
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) throw Error("spec.seed: expected a non-negative integer");
    s.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("cores")) {
    if (!j["cores"].is_array()) throw Error("spec.cores: expected an array");
    for (const auto& c : j["cores"]) {
      require_known_keys(c, {"position", "burgers"}, "spec.cores[]");
      Core<Dim> core;
      core.position = vec_from_json<Dim>(c.at("position"), "spec.cores[].position");
      if (c.contains("burgers")) core.burgers = vec_from_json<Dim>(c["burgers"], "spec.cores[].burgers");
      s.cores.push_back(core);
    }
  }
  return s;
}

template <int Dim>
Json ground_truth_json(const Generated<Dim>& g) {
  Json j;
  std::size_t interior = 0;
  for (auto k : g.config.kinds()) interior += k == AtomKind::Interior;
  j["kind"] = to_string(g.truth.spec.kind);
  j["atoms"] = g.config.size();
  j["interior"] = interior;
  j["A"] = to_json<Dim>(g.truth.spec.A);
  j["tau"] = to_json<Dim>(g.truth.spec.tau);
  j["net_burgers"] = to_json<Dim>(g.truth.net_burgers);
  Json cores = Json::array();
  for (const auto& c : g.truth.spec.cores) {
    Json cj;
    cj["position"] = to_json<Dim>(c.position);
    cj["burgers"] = to_json<Dim>(c.burgers);
    cores.push_back(cj);
  }
  j["cores"] = cores;
  return j;
}

// ---- fit and loop reports -------------------------------------------------

template <int Dim>
Json fit_json(const FitResult<Dim>& fit) {
  Json j;
  j["x"] = to_json<Dim>(fit.x);
  j["A"] = to_json<Dim>(fit.aff_hat.A);
  j["tau"] = to_json<Dim>(fit.aff_hat.tau);
  j["det_A"] = fit.aff_hat.A.determinant();
  Json e;
  e["f"] = fit.breakdown.f_term;
  e["j"] = fit.breakdown.j_term;
  e["nu"] = fit.breakdown.nu_term;
  e["total"] = fit.breakdown.total;
  j["energy"] = e;
  j["rho"] = fit.breakdown.rho;
  const auto& r = fit.regularity;
  Json reg;
  reg["regular"] = r.regular;
  reg["norm_A_inv"] = r.norm_ainv;
  reg["C_A"] = r.C_A;
  reg["density_margin"] = r.density_margin;
  reg["j_margin"] = r.j_margin;
  reg["hardcore_pairs"] = r.hardcore_count;
  j["regularity"] = reg;
  j["iterations"] = fit.iterations;
  j["converged"] = fit.converged;
  j["grad_norm"] = fit.grad_norm;
  return j;
}

template <int Dim>
Json reparam_json(const Reparam<Dim>& r) {
  Json j;
  j["B"] = to_json<Dim>(r.B);
  j["t"] = to_json<Dim>(r.t);
  return j;
}

template <int Dim>
Json loop_json(const LoopResult<Dim>& loop) {
  Json j;
  j["samples"] = loop.samples.size();
  Json steps = Json::array();
  for (const auto& s : loop.steps) {
    Json sj;
    sj["from"] = to_json<Dim>(s.y0);
    sj["to"] = to_json<Dim>(s.y1);
    sj["B"] = to_json<Dim>(s.reparam.B);
    sj["t"] = to_json<Dim>(s.reparam.t);
    sj["rounding_gap"] = s.rounding_gap;
    sj["delta_A"] = s.delta_A;
    sj["delta_tau"] = s.delta_tau;
    sj["bound_A"] = s.bound_A;
    sj["bound_tau"] = s.bound_tau;
    sj["within_bounds"] = s.within_bounds();
    steps.push_back(sj);
  }
  j["steps"] = steps;
  j["product"] = reparam_json<Dim>(loop.product);
  j["classification"] = to_string(loop.classification);
  j["max_residual_A"] = loop.max_residual_A;
  j["max_residual_tau"] = loop.max_residual_tau;
  return j;
}

/// Loop polyline from a CSV with header x,y.
inline std::vector<Vec<2>> parse_loop_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || strip_cr(line) != "x,y") throw Error("line 1: expected header 'x,y'");
  std::vector<Vec<2>> pts;
  std::size_t number = 1;
  while (std::getline(in, line)) {
    ++number;
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 2) throw Error("line " + std::to_string(number) + ": expected 2 fields");
    pts.emplace_back(parse_double(cells[0], number), parse_double(cells[1], number));
  }
  if (pts.size() < 3) throw Error("loop file needs at least three points");
  return pts;
}

// ---- field tables ---------------------------------------------------------

/// Column-named numeric table; missing entries are empty cells.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::optional<double>>> rows;

  int column(const std::string& name) const {
    for (std::size_t c = 0; c < columns.size(); ++c)
      if (columns[c] == name) return static_cast<int>(c);
    return -1;
  }
};

inline std::string table_csv(const Table& t) {
  std::string out;
  for (std::size_t c = 0; c < t.columns.size(); ++c) (out += c ? "," : "") += t.columns[c];
  out += '\n';
  for (const auto& row : t.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out += ',';
      if (row[c]) out += format_double(*row[c]);
    }
    out += '\n';
  }
  return out;
}

inline Table parse_table_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  Table t;
  if (!std::getline(in, line)) throw Error("line 1: missing header");
  for (auto c : split_csv(strip_cr(line))) t.columns.emplace_back(c);
  std::size_t number = 1;
  while (std::getline(in, line)) {
    ++number;
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != t.columns.size())
      throw Error("line " + std::to_string(number) + ": expected " + std::to_string(t.columns.size()) + " fields");
    std::vector<std::optional<double>> row;
    for (auto c : cells) row.push_back(c.empty() ? std::nullopt : std::optional<double>(parse_double(c, number)));
    t.rows.push_back(std::move(row));
  }
  return t;
}

/// Per-node table of a field grid with the lower-bound entries where the
/// stencil admits them.
inline Table field_table(const Model<2>& model, const FieldGrid& f) {
  Table t;
  t.columns = {"i",   "j",   "x",   "y",    "valid", "component", "h_hat", "J",        "nu",
               "det_A", "A00", "A01", "A10", "A11",  "tau0",  "tau1",      "rho",   "rho2", "f_c",
               "gradient_term", "slack"};
  const auto& g = f.geometry;
  for (int jj = 0; jj < g.ny; ++jj)
    for (int ii = 0; ii < g.nx; ++ii) {
      const int k = g.index(ii, jj);
      const Vec<2> x = g.node(ii, jj);
      std::vector<std::optional<double>> row(t.columns.size());
      row[0] = ii;
      row[1] = jj;
      row[2] = x(0);
      row[3] = x(1);
      row[4] = f.valid[k] ? 1.0 : 0.0;
      row[5] = f.component[k];
      row[16] = f.rho[k];
      row[17] = f.rho2[k];
      if (f.valid[k]) {
        const auto& b = f.fits[k].breakdown;
        const auto& a = f.aligned[k];
        row[6] = b.total;
        row[7] = b.j_term;
        row[8] = b.nu_term;
        row[9] = a.A.determinant();
        row[10] = a.A(0, 0);
        row[11] = a.A(0, 1);
        row[12] = a.A(1, 0);
        row[13] = a.A(1, 1);
        row[14] = a.tau(0);
        row[15] = a.tau(1);
        if (const auto e = lower_bound_check(model, f, ii, jj)) {
          row[18] = e->f_c;
          row[19] = e->gradient_term;
          row[20] = e->slack;
        }
      }
      t.rows.push_back(std::move(row));
    }
  return t;
}

// ---- SVG heatmaps ---------------------------------------------------------

namespace detail {

inline std::string rgb(double s) {
  static const int anchors[5][3] = {{68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}};
  s = std::clamp(s, 0.0, 1.0) * 4.0;
  const int lo = std::min(3, static_cast<int>(s));
  const double w = s - lo;
  char buf[16];
  int c[3];
  for (int k = 0; k < 3; ++k)
    c[k] = static_cast<int>(std::lround((1.0 - w) * anchors[lo][k] + w * anchors[lo + 1][k]));
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c[0], c[1], c[2]);
  return buf;
}

inline std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace detail

/// One heatmap band per requested column, each with a linear colour legend.
/// Nodes are placed by the integer columns i and j; empty cells are grey.
inline std::string heatmap_svg(const Table& t, const std::vector<std::string>& fields) {
  const int ci = t.column("i"), cj = t.column("j");
  if (ci < 0 || cj < 0) throw Error("field table needs columns i and j");
  if (fields.empty()) throw Error("no fields requested");
  int nx = 0, ny = 0;
  for (const auto& r : t.rows) {
    if (!r[ci] || !r[cj]) throw Error("field table has rows without grid indices");
    nx = std::max(nx, static_cast<int>(*r[ci]) + 1);
    ny = std::max(ny, static_cast<int>(*r[cj]) + 1);
  }
  const int cell = std::clamp(240 / std::max({nx, ny, 1}), 4, 24);
  const int pw = nx * cell, ph = ny * cell;
  const int margin = 20, title = 20, legend = 40;
  const int band_w = std::max(pw, 160) + 2 * margin;
  const int width = band_w * static_cast<int>(fields.size());
  const int height = title + ph + legend + 2 * margin;
  std::ostringstream s;
  s << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << width << "\" height=\"" << height
    << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n"
    << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height << "\" fill=\"#ffffff\"/>\n";
  for (std::size_t b = 0; b < fields.size(); ++b) {
    const int col = t.column(fields[b]);
    if (col < 0) throw Error("field table has no column '" + fields[b] + "'");
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& r : t.rows)
      if (r[col] && std::isfinite(*r[col])) {
        lo = std::min(lo, *r[col]);
        hi = std::max(hi, *r[col]);
      }
    const bool any = lo <= hi;
    const int x0 = static_cast<int>(b) * band_w + margin;
    const int y0 = margin + title;
    s << "<g id=\"band-" << fields[b] << "\">\n"
      << "<text x=\"" << x0 << "\" y=\"" << margin + 12 << "\" font-family=\"monospace\" font-size=\"12\">"
      << fields[b] << "</text>\n";
    for (const auto& r : t.rows) {
      const int i = static_cast<int>(*r[ci]), j = static_cast<int>(*r[cj]);
      std::string fill = "#cccccc";
      if (r[col] && std::isfinite(*r[col])) fill = detail::rgb(hi > lo ? (*r[col] - lo) / (hi - lo) : 0.5);
      s << "<rect x=\"" << x0 + i * cell << "\" y=\"" << y0 + (ny - 1 - j) * cell << "\" width=\"" << cell
        << "\" height=\"" << cell << "\" fill=\"" << fill << "\"/>\n";
    }
    const int ly = y0 + ph + 8, steps = 32, lw = 160;
    for (int k = 0; k < steps; ++k)
      s << "<rect x=\"" << x0 + k * lw / steps << "\" y=\"" << ly << "\" width=\"" << lw / steps
        << "\" height=\"10\" fill=\"" << detail::rgb((k + 0.5) / steps) << "\"/>\n";
    s << "<text x=\"" << x0 << "\" y=\"" << ly + 24 << "\" font-family=\"monospace\" font-size=\"10\">"
      << (any ? detail::fixed(lo) : "n/a") << "</text>\n"
      << "<text x=\"" << x0 + lw << "\" y=\"" << ly + 24
      << "\" font-family=\"monospace\" font-size=\"10\" text-anchor=\"end\">" << (any ? detail::fixed(hi) : "n/a")
      << "</text>\n"
      << "</g>\n";
  }
  s << "</svg>\n";
  return s.str();
}

}  // namespace latfit::io
