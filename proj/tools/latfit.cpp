// Command-line front end: generate, fit, field, loop, check and report.
// Exit codes: 0 success, 1 invariant violation or uncomputable result,
// 2 usage or input error.

#include "latfit/latfit.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

namespace {

using namespace latfit;
using io::Json;

constexpr int kOk = 0;
constexpr int kViolation = 1;
constexpr int kUsage = 2;

/// Thrown for results that parse fine but cannot be computed or fail checks.
struct Violation : Error {
  using Error::Error;
};

std::vector<double> parse_list(const std::string& s, const std::string& what) {
  std::vector<double> out;
  for (auto cell : io::split_csv(s)) {
    try {
      out.push_back(io::parse_double(cell, 1));
    } catch (const Error&) {
      throw Error(what + ": cannot parse '" + std::string(cell) + "'");
    }
  }
  return out;
}

void emit(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-")
    std::cout << content;
  else
    io::write_file_atomic(path, content);
}

template <int Dim>
struct Inputs {
  io::RunConfig<Dim> config;
  Model<Dim> model;
  Configuration<Dim> chi;
};

template <int Dim>
Inputs<Dim> load_inputs(const std::string& atoms_text, const std::string& params_path) {
  auto config = io::run_config_from_json<Dim>(io::parse_json(io::read_text(params_path), params_path));
  Model<Dim> model(config.model);
  auto chi = io::parse_atoms_csv<Dim>(atoms_text, config.effective_cell_edge());
  return {std::move(config), std::move(model), std::move(chi)};
}

GridGeometry parse_grid(const std::vector<double>& g) {
  if (g.size() != 5) throw Error("grid: expected ox,oy,h,nx,ny");
  GridGeometry geo{Vec<2>(g[0], g[1]), g[2], static_cast<int>(g[3]), static_cast<int>(g[4])};
  if (geo.nx != g[3] || geo.ny != g[4] || geo.nx <= 0 || geo.ny <= 0) throw Error("grid: nx and ny must be positive integers");
  if (!(geo.h > 0.0)) throw Error("grid: spacing must be positive");
  return geo;
}

int cmd_generate(const std::string& spec_path, const std::string& out, const std::string& truth_out) {
  const Json j = io::parse_json(io::read_text(spec_path), spec_path);
  auto run = [&](auto dim) {
    constexpr int Dim = decltype(dim)::value;
    const auto spec = io::generator_spec_from_json<Dim>(j);
    const auto g = generate(spec, 16.0);
    emit(out, io::atoms_csv(g.config));
    if (!truth_out.empty()) emit(truth_out, io::ground_truth_json(g).dump(2) + "\n");
    return kOk;
  };
  return io::matrix_dimension(j, "A", 2) == 3 ? run(std::integral_constant<int, 3>{})
                                              : run(std::integral_constant<int, 2>{});
}

int cmd_fit(const std::string& atoms, const std::string& params, const std::string& at, const std::string& out) {
  const std::string text = io::read_text(atoms);
  const auto x = parse_list(at, "--at");
  auto run = [&](auto dim) {
    constexpr int Dim = decltype(dim)::value;
    if (x.size() != Dim) throw Error("--at: expected " + std::to_string(Dim) + " coordinates");
    const auto in = load_inputs<Dim>(text, params);
    Vec<Dim> p;
    for (int k = 0; k < Dim; ++k) p(k) = x[k];
    const auto fit = fit_global(in.model, in.chi, p);
    emit(out, io::fit_json(fit).dump(2) + "\n");
    return fit.converged ? kOk : kViolation;
  };
  return io::atoms_dimension(text) == 3 ? run(std::integral_constant<int, 3>{})
                                        : run(std::integral_constant<int, 2>{});
}

const char* kPlanarOnly = "this command needs a two-dimensional atom file";

int cmd_field(const std::string& atoms, const std::string& params, const std::string& grid, const std::string& out,
              const std::string& svg) {
  const std::string text = io::read_text(atoms);
  if (io::atoms_dimension(text) != 2) throw Error(kPlanarOnly);
  const auto in = load_inputs<2>(text, params);
  const auto geo = parse_grid(parse_list(grid, "--grid"));
  const auto f = evaluate_grid(in.model, in.chi, geo);
  const auto table = io::field_table(in.model, f);
  emit(out, io::table_csv(table));
  if (!svg.empty()) emit(svg, io::heatmap_svg(table, {"h_hat", "det_A", "slack"}));
  return kOk;
}

int cmd_loop(const std::string& atoms, const std::string& params, const std::string& loop_path, double step,
             const std::string& out) {
  const std::string text = io::read_text(atoms);
  if (io::atoms_dimension(text) != 2) throw Error(kPlanarOnly);
  const auto in = load_inputs<2>(text, params);
  auto pts = io::parse_loop_csv(io::read_text(loop_path));
  if ((pts.front() - pts.back()).norm() > 1e-12) pts.push_back(pts.front());
  const double max_step = step > 0.0 ? step : in.model.lambda() / 4.0;
  if (max_step > 1.5 * in.model.lambda()) throw Error("--step: must not exceed 3*lambda/2");
  LoopResult<2> res;
  try {
    res = burgers_loop(in.model, in.chi, densify_loop(pts, max_step));
  } catch (const Error& e) {
    throw Violation(e.what());
  }
  emit(out, io::loop_json(res).dump(2) + "\n");
  return kOk;
}

Json tallies_json(const CheckReport& r) {
  Json checks = Json::array();
  for (const auto& t : r.tallies) {
    Json c;
    c["name"] = t.name;
    c["checked"] = t.checked;
    c["failed"] = t.failed;
    c["worst_margin"] = t.checked ? Json(t.worst_margin) : Json(nullptr);
    checks.push_back(c);
  }
  return checks;
}

int cmd_check(const std::string& atoms, const std::string& params, const std::string& grid, const std::string& out) {
  const std::string text = io::read_text(atoms);
  CheckReport report;
  if (io::atoms_dimension(text) == 2) {
    const auto in = load_inputs<2>(text, params);
    GridGeometry geo;
    if (!grid.empty()) {
      geo = parse_grid(parse_list(grid, "--grid"));
    } else if (!in.config.check.grid.empty()) {
      geo = parse_grid(in.config.check.grid);
    } else {
      const auto& box = in.chi.box();
      const double h = in.model.lambda() / 4.0;
      geo = {box.lo, h, static_cast<int>(std::floor((box.hi(0) - box.lo(0)) / h)) + 1,
             static_cast<int>(std::floor((box.hi(1) - box.lo(1)) / h)) + 1};
    }
    report = run_checks(in.model, in.chi, geo, in.config.check.sandwich_B, in.config.check.tol);
  } else {
    if (!grid.empty()) throw Error("--grid: only for two-dimensional atom files");
    const auto in = load_inputs<3>(text, params);
    const auto& box = in.chi.box();
    std::vector<Vec<3>> pts;
    const double h = in.model.lambda();
    for (double z = box.lo(2); z <= box.hi(2); z += h)
      for (double y = box.lo(1); y <= box.hi(1); y += h)
        for (double x = box.lo(0); x <= box.hi(0); x += h) pts.emplace_back(x, y, z);
    report = run_point_checks(in.model, in.chi, pts, in.config.check.tol);
  }
  Json j;
  j["ok"] = report.ok();
  j["points"] = report.points;
  j["valid_points"] = report.valid_points;
  j["checks"] = tallies_json(report);
  Json defects = Json::array();
  for (const auto& c : report.clusters) {
    Json d;
    d["nodes"] = c.nodes.size();
    d["ringable"] = c.ringable;
    if (c.ring) {
      d["ring"] = {c.i0, c.j0, c.i1, c.j1};
      d["product"] = io::reparam_json<2>(c.ring->product);
      d["classification"] = to_string(c.ring->classification);
    }
    defects.push_back(d);
  }
  j["defects"] = defects;
  emit(out, j.dump(2) + "\n");
  for (const auto& t : report.tallies)
    if (t.failed) std::cerr << "violation: " << t.name << " failed " << t.failed << " of " << t.checked << "\n";
  return report.ok() ? kOk : kViolation;
}

int cmd_report(const std::string& field, const std::string& svg, const std::string& fields) {
  const auto table = io::parse_table_csv(io::read_text(field));
  std::vector<std::string> names;
  for (auto f : io::split_csv(fields)) names.emplace_back(f);
  emit(svg, io::heatmap_svg(table, names));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Local lattice fits, Burgers loops and lower-bound checks for atomistic point clouds"};
  app.require_subcommand(1);

  std::string spec, atoms, params, out, truth, at, grid, svg, loop, field, fields = "h_hat,det_A,slack";
  double step = 0.0;

  auto* gen = app.add_subcommand("generate", "Generate a configuration from a JSON spec");
  gen->add_option("--spec", spec, "Generator spec (JSON)")->required();
  gen->add_option("--out", out, "Atom CSV output")->required();
  gen->add_option("--truth", truth, "Ground-truth JSON output");

  auto* fit = app.add_subcommand("fit", "Fit a lattice at one point");
  fit->add_option("--atoms", atoms, "Atom CSV")->required();
  fit->add_option("--params", params, "Run configuration (JSON)")->required();
  fit->add_option("--at", at, "Point x,y[,z]")->required();
  fit->add_option("--out", out, "Fit JSON output (default stdout)");

  auto* fld = app.add_subcommand("field", "Fit a grid and write per-node fields");
  fld->add_option("--atoms", atoms, "Atom CSV")->required();
  fld->add_option("--params", params, "Run configuration (JSON)")->required();
  fld->add_option("--grid", grid, "Grid ox,oy,h,nx,ny")->required();
  fld->add_option("--out", out, "Field CSV output")->required();
  fld->add_option("--svg", svg, "Heatmap SVG output");

  auto* lp = app.add_subcommand("loop", "Burgers loop product along a closed polyline");
  lp->add_option("--atoms", atoms, "Atom CSV")->required();
  lp->add_option("--params", params, "Run configuration (JSON)")->required();
  lp->add_option("--loop", loop, "Loop CSV with header x,y")->required();
  lp->add_option("--step", step, "Maximal sample spacing (default lambda/4)");
  lp->add_option("--out", out, "Loop JSON output (default stdout)");

  auto* chk = app.add_subcommand("check", "Run the invariant suite");
  chk->add_option("--atoms", atoms, "Atom CSV")->required();
  chk->add_option("--params", params, "Run configuration (JSON)")->required();
  chk->add_option("--grid", grid, "Grid ox,oy,h,nx,ny");
  chk->add_option("--out", out, "Check report JSON (default stdout)");

  auto* rep = app.add_subcommand("report", "Render field columns as SVG heatmaps");
  rep->add_option("--field", field, "Field CSV")->required();
  rep->add_option("--svg", svg, "SVG output")->required();
  rep->add_option("--fields", fields, "Comma-separated column names");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return cmd_generate(spec, out, truth);
    if (*fit) return cmd_fit(atoms, params, at, out);
    if (*fld) return cmd_field(atoms, params, grid, out, svg);
    if (*lp) return cmd_loop(atoms, params, loop, step, out);
    if (*chk) return cmd_check(atoms, params, grid, out);
    if (*rep) return cmd_report(field, svg, fields);
  } catch (const Violation& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kViolation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
