// ddmres command line: run experiments, dump and check meshes, dump bases.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ddmres/error.hpp"
#include "ddmres/experiments.hpp"
#include "ddmres/mesh.hpp"
#include "ddmres/optimal_test.hpp"
#include "ddmres/spaces.hpp"

using namespace ddmres;

namespace {

constexpr int kOk = 0;
constexpr int kInvalid = 2;
constexpr int kSolver = 3;

struct RunArgs {
  std::string experiment;
  std::vector<double> p;
  std::vector<std::size_t> n;
  std::vector<int> k;
  std::vector<int> level;
  int levels = -1;
  int reference_level = -1;
  long long seed = -1;
  std::string out = "results";
  std::string config;
};

int run(const RunArgs& a) {
  ExperimentSpec spec;
  spec.kind = parse_experiment(a.experiment);
  if (!a.config.empty()) {
    apply_config(a.config, spec);
    // the positional name wins over a name in the file
    spec.kind = parse_experiment(a.experiment);
  }
  if (!a.p.empty()) spec.p = a.p;
  if (!a.n.empty()) spec.n = a.n;
  if (!a.k.empty()) spec.k = a.k;
  if (!a.level.empty()) spec.level = a.level;
  if (a.levels >= 0) spec.levels = a.levels;
  if (a.reference_level >= 0) spec.reference_level = a.reference_level;
  if (a.seed >= 0) spec.seed = static_cast<std::uint64_t>(a.seed);

  const auto result = run_experiment(spec);
  const auto files = write_outputs(result, a.out);

  for (const auto& t : result.tables) {
    std::printf("%s  p=%g  slope=%.4f  R2=%.4f\n", t.label.c_str(), t.p, t.fit.slope, t.fit.r2);
    for (const auto& r : t.rows) std::printf("    h=%-12.6g error=%-14.6e rate=%.4f\n", r.h, r.error, r.rate);
  }
  for (const auto& d : result.samples)
    std::printf("%s  overshoot=%.6e  iterations=%d\n", d.label.c_str(), d.overshoot, d.diagnostics.iterations);
  for (const auto& note : result.notes) std::printf("note: %s\n", note.c_str());
  if (result.max_orthogonality > 0.0) std::printf("max orthogonality residual %.3e\n", result.max_orthogonality);
  for (const auto& f : files) std::printf("wrote %s\n", f.string().c_str());
  return kOk;
}

int mesh_dump(int strips, int rows, long long seed, int levels, const std::string& out) {
  require(strips >= 1 && rows >= 1, ErrorCode::InvalidArgument, "strips and rows must be positive");
  require(levels >= 0 && levels <= 7, ErrorCode::InvalidArgument, "levels must lie in [0, 7]");
  auto mesh = flow_aligned_channel(strips, rows, static_cast<std::uint64_t>(seed));
  for (int l = 0; l < levels; ++l) mesh = red_refine_2d(mesh);
  if (out.empty() || out == "-") {
    write_mesh(std::cout, mesh);
  } else {
    save_mesh(out, mesh);
  }
  return kOk;
}

int mesh_check(const std::string& file, bool aligned) {
  const auto mesh = load_mesh(file);
  const auto r = check_mesh(mesh, aligned);
  std::printf("triangles %zu\narea %.17g\nmax flux jump %.3e\nflow aligned %s\nflow order %s\n", r.num_triangles,
              r.total_area, r.max_flux_jump, r.flow_aligned ? "yes" : "no", r.has_order ? "yes" : "no");
  for (const auto& p : r.problems) std::fprintf(stderr, "problem: %s\n", p.c_str());
  std::printf("%s\n", r.ok() ? "ok" : "FAILED");
  return r.ok() ? kOk : kInvalid;
}

int basis_dump(const std::string& mesh_file, std::size_t n, const std::string& kind, int samples,
               const std::string& out) {
  std::ofstream file;
  std::ostream* os = &std::cout;
  if (!out.empty() && out != "-") {
    file.open(out);
    require(bool(file), ErrorCode::Io, "cannot write " + out);
    os = &file;
  }
  if (!mesh_file.empty()) {
    const auto mesh = load_mesh(mesh_file);
    const auto space = build_p1conf_basis(mesh);
    write_basis_csv(*os, space);
  } else {
    require(n >= 1, ErrorCode::InvalidArgument, "n must be positive");
    require(kind == "dual" || kind == "nodal", ErrorCode::InvalidArgument, "kind must be dual or nodal");
    const auto mesh = uniform_mesh_1d(0.0, 1.0, n);
    const auto space = optimal_basis_1d(mesh, [](double) { return 1.0; }, [](double) { return 0.0; },
                                        kind == "dual" ? OptimalBasisKind::Dual : OptimalBasisKind::Nodal);
    write_basis_csv(*os, space, samples);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ddmres: minimal-residual methods for advection-reaction in L^p"};
  app.require_subcommand(1);

  RunArgs ra;
  auto* run_cmd = app.add_subcommand("run", "run an experiment and write CSV tables");
  std::string names;
  for (auto k : all_experiments()) names += (names.empty() ? "" : ", ") + std::string(to_string(k));
  run_cmd->add_option("experiment", ra.experiment, "one of " + names)->required();
  run_cmd->add_option("--p", ra.p, "exponents p")->delimiter(',');
  run_cmd->add_option("--n", ra.n, "element counts")->delimiter(',');
  run_cmd->add_option("--k", ra.k, "test degrees")->delimiter(',');
  run_cmd->add_option("--level", ra.level, "test refinement levels")->delimiter(',');
  run_cmd->add_option("--levels", ra.levels, "red-refinement levels (2-D)");
  run_cmd->add_option("--reference-level", ra.reference_level, "reference level (level_convergence)");
  run_cmd->add_option("--seed", ra.seed, "2-D mesh seed");
  run_cmd->add_option("--out", ra.out, "output directory");
  run_cmd->add_option("--config", ra.config, "TOML file with overrides");

  auto* mesh_cmd = app.add_subcommand("mesh", "flow-aligned meshes");
  mesh_cmd->require_subcommand(1);
  int strips = 4, rows = 8, mlevels = 0;
  long long mseed = 2019;
  std::string mout;
  auto* dump_cmd = mesh_cmd->add_subcommand("dump", "write a flow-aligned channel mesh");
  dump_cmd->add_option("--strips", strips, "streamline bands");
  dump_cmd->add_option("--rows", rows, "rows per band");
  dump_cmd->add_option("--seed", mseed, "generator seed");
  dump_cmd->add_option("--levels", mlevels, "red refinements");
  dump_cmd->add_option("--out", mout, "output file (default stdout)");
  std::string check_file;
  bool no_align = false;
  auto* check_cmd = mesh_cmd->add_subcommand("check", "validate a mesh file");
  check_cmd->add_option("file", check_file, "mesh file")->required();
  check_cmd->add_flag("--no-align", no_align, "skip the flow-alignment requirement");

  auto* basis_cmd = app.add_subcommand("basis", "optimal test bases");
  basis_cmd->require_subcommand(1);
  std::string bmesh, bkind = "dual", bout;
  std::size_t bn = 4;
  int bsamples = 8;
  auto* bdump = basis_cmd->add_subcommand("dump", "CSV dump of a basis (1-D beta = 1, or 2-D from --mesh)");
  bdump->add_option("--mesh", bmesh, "2-D mesh file");
  bdump->add_option("--n", bn, "1-D element count");
  bdump->add_option("--kind", bkind, "dual or nodal (1-D)");
  bdump->add_option("--samples", bsamples, "samples per element (1-D)");
  bdump->add_option("--out", bout, "output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kInvalid;
  }

  try {
    if (run_cmd->parsed()) return run(ra);
    if (dump_cmd->parsed()) return mesh_dump(strips, rows, mseed, mlevels, mout);
    if (check_cmd->parsed()) return mesh_check(check_file, !no_align);
    if (bdump->parsed()) return basis_dump(bmesh, bn, bkind, bsamples, bout);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return is_solver_failure(e.code()) ? kSolver : kInvalid;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kSolver;
  }
  return kInvalid;
}
