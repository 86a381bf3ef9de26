#include "ddmres/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <numbers>
#include <sstream>

#include <omp.h>

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include "ddmres/error.hpp"
#include "ddmres/mesh.hpp"
#include "ddmres/optimal_test.hpp"
#include "ddmres/problem.hpp"
#include "ddmres/spaces.hpp"

namespace ddmres {

namespace {

constexpr std::string_view kNames[] = {
    "gibbs_ideal",    "gibbs_ddmres",   "jump_rates_1d", "singular_refined",
    "level_convergence", "advect2d_smooth", "advect2d_jump",
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  return fmt("%.17g", v);
}

std::string p_label(double p) { return "p" + fmt("%g", p); }

double sign_fn(double x) { return x < 0.0 ? -1.0 : (x > 0.0 ? 1.0 : 0.0); }

double overshoot_of(const Eigen::VectorXd& u) { return u.size() ? u.maxCoeff() - 1.0 : 0.0; }

// Runs body(i) for i < n on up to cell_threads() threads; the first error
// (lowest index) is rethrown with its cell named.
template <class Body, class Name>
void for_cells(std::size_t n, Body&& body, Name&& name) {
  std::vector<std::exception_ptr> errs(n);
  const long count = static_cast<long>(n);
#pragma omp parallel for schedule(dynamic, 1) num_threads(cell_threads())
  for (long i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      errs[i] = std::current_exception();
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!errs[i]) continue;
    try {
      std::rethrow_exception(errs[i]);
    } catch (const Error& e) {
      throw Error(e.code(), name(i) + ": " + e.what());
    } catch (const std::exception& e) {
      throw Error(ErrorCode::InvalidArgument, name(i) + ": " + e.what());
    }
  }
}

Problem1D gibbs_problem(double p) {
  Problem1D pr;
  pr.a = -1.0;
  pr.b = 1.0;
  pr.diracs = {{0.0, 2.0}};
  pr.inflow = [](double) { return -1.0; };
  pr.p = p;
  return pr;
}

Problem1D jump_problem() {
  Problem1D pr;
  pr.diracs = {{std::numbers::sqrt2 / 2.0, 2.0}};
  pr.inflow = [](double) { return -1.0; };
  return pr;
}

Problem1D singular_problem(double p) {
  Problem1D pr;
  pr.beta = [](double x) { return 1.0 - 12.0 * x; };
  pr.dbeta = [](double) { return -12.0; };
  pr.mu = [](double) { return -4.0; };
  pr.inflow = [](double x) { return singular_solution(x); };
  pr.p = p;
  return pr;
}

Problem1D level_problem(double p) {
  Problem1D pr;
  pr.beta = [](double x) { return 2.0 - x; };
  pr.dbeta = [](double) { return -1.0; };
  pr.source = [](double x) { return 4.0 - 2.0 * x; };
  pr.inflow = [](double) { return 1.0; };
  pr.p = p;
  return pr;
}

double inflow_smooth(Vec2 x) { return std::sin(std::numbers::pi * x.x); }
double inflow_jump(Vec2 x) { return std::sin(std::numbers::pi * x.x) * sign_fn(x.x - 1.0 / 3.0); }

SolverConfig gibbs_config(const SolverConfig& base) {
  SolverConfig c = base;
  c.norm = TestNormKind::DerivativeOnly;
  return c;
}

void finish_table(ConvergenceTable& t, std::vector<std::string>& notes) {
  std::sort(t.rows.begin(), t.rows.end(), [](const TableRow& a, const TableRow& b) { return a.h > b.h; });
  fill_rates(t.rows);
  try {
    t.fit = fit_rate(t.rows);
  } catch (const Error& e) {
    t.fit = {};
    t.fit.slope = std::numeric_limits<double>::quiet_NaN();
    notes.push_back(t.label + ": " + e.what());
  }
}

void run_gibbs_ideal(const ExperimentSpec& s, ExperimentResult& out) {
  const auto mesh = uniform_mesh_1d(-1.0, 1.0, s.n.front());
  const auto trial = PolySpace1D::p1(mesh);
  const std::vector<double> disc{0.0};
  out.samples.resize(s.p.size());
  for_cells(
      s.p.size(),
      [&](std::size_t i) {
        const auto b = best_lp_approximation(sign_fn, disc, trial, s.p[i]);
        SampleDump& d = out.samples[i];
        d.label = p_label(s.p[i]);
        d.p = s.p[i];
        d.k = 0;
        for (std::size_t j = 0; j < trial.dof_count(); ++j) d.x.push_back(trial.dof_point(j));
        d.u.assign(b.coeffs.data(), b.coeffs.data() + b.coeffs.size());
        d.overshoot = overshoot_of(b.coeffs);
        d.diagnostics.iterations = b.iterations;
        d.diagnostics.final_residual = b.decrement;
      },
      [&](std::size_t i) { return "gibbs_ideal p=" + fmt("%g", s.p[i]); });
}

void run_gibbs_ddmres(const ExperimentSpec& s, ExperimentResult& out) {
  const auto mesh = uniform_mesh_1d(-1.0, 1.0, s.n.front());
  const auto trial = PolySpace1D::p1(mesh);
  const std::vector<double> disc{0.0};
  // one cell per (p, k), plus the ideal approximation per p
  const std::size_t nk = s.k.size() + 1;
  const std::size_t cells = s.p.size() * nk;
  out.samples.resize(cells);
  std::vector<double> orth(cells, 0.0);
  for_cells(
      cells,
      [&](std::size_t c) {
        const double p = s.p[c / nk];
        const std::size_t ik = c % nk;
        SampleDump& d = out.samples[c];
        d.p = p;
        for (std::size_t j = 0; j < trial.dof_count(); ++j) d.x.push_back(trial.dof_point(j));
        Eigen::VectorXd u;
        if (ik == s.k.size()) {
          const auto b = best_lp_approximation(sign_fn, disc, trial, p);
          u = b.coeffs;
          d.k = 0;
          d.label = p_label(p) + "_ideal";
          d.diagnostics.iterations = b.iterations;
          d.diagnostics.final_residual = b.decrement;
        } else {
          const int k = s.k[ik];
          const auto pr = gibbs_problem(p);
          const auto test = PolySpace1D::pk(mesh, k, outflow_constraint(pr));
          const auto sol = solve_mixed(pr, trial, test, gibbs_config(s.solver));
          u = sol.u;
          d.k = k;
          d.label = p_label(p) + "_k" + std::to_string(k);
          d.diagnostics = sol.diagnostics;
          orth[c] = sol.diagnostics.orthogonality;
        }
        d.u.assign(u.data(), u.data() + u.size());
        d.overshoot = overshoot_of(u);
      },
      [&](std::size_t c) {
        const std::size_t ik = c % nk;
        return "gibbs_ddmres p=" + fmt("%g", s.p[c / nk]) +
               (ik == s.k.size() ? std::string(" ideal") : " k=" + std::to_string(s.k[ik]));
      });
  for (double o : orth) out.max_orthogonality = std::max(out.max_orthogonality, o);
}

void run_jump_rates(const ExperimentSpec& s, ExperimentResult& out) {
  const auto pr = jump_problem();
  const std::vector<double> disc{std::numbers::sqrt2 / 2.0};
  // the discrete solution does not depend on p
  std::vector<std::vector<double>> err(s.n.size(), std::vector<double>(s.p.size()));
  for_cells(
      s.n.size(),
      [&](std::size_t i) {
        const auto mesh = uniform_mesh_1d(0.0, 1.0, s.n[i]);
        const auto trial = PolySpace1D::p0(mesh);
        const auto test = optimal_basis_1d(mesh, pr.beta, pr.dbeta, OptimalBasisKind::Nodal);
        const auto u = solve_petrov_galerkin(pr, trial, test, Exec::Serial);
        for (std::size_t j = 0; j < s.p.size(); ++j)
          err[i][j] = error_norm(jump_solution, disc, {}, trial, {u.data(), std::size_t(u.size())}, s.p[j]);
      },
      [&](std::size_t i) { return "jump_rates_1d n=" + std::to_string(s.n[i]); });
  for (std::size_t j = 0; j < s.p.size(); ++j) {
    ConvergenceTable t;
    t.label = p_label(s.p[j]);
    t.p = s.p[j];
    for (std::size_t i = 0; i < s.n.size(); ++i) t.rows.push_back({1.0 / double(s.n[i]), err[i][j]});
    finish_table(t, out.notes);
    out.tables.push_back(std::move(t));
  }
}

void run_singular(const ExperimentSpec& s, ExperimentResult& out) {
  const std::vector<double> sing{1.0 / 12.0};
  const std::size_t np = s.p.size(), nl = s.level.size(), nn = s.n.size();
  const std::size_t cells = np * nl * nn;
  std::vector<double> err(cells), orth(cells, 0.0);
  auto split = [&](std::size_t c) { return std::array<std::size_t, 3>{c / (nl * nn), (c / nn) % nl, c % nn}; };
  for_cells(
      cells,
      [&](std::size_t c) {
        const auto [ip, il, in] = split(c);
        const auto pr = singular_problem(s.p[ip]);
        const auto mesh = uniform_mesh_1d(0.0, 1.0, s.n[in]);
        const auto trial = PolySpace1D::p0(mesh);
        const auto test = PolySpace1D::refined_p1(mesh, s.level[il], outflow_constraint(pr));
        SolverConfig cfg = s.solver;
        cfg.exec = Exec::Serial;
        const auto sol = solve_mixed(pr, trial, test, cfg);
        orth[c] = sol.diagnostics.orthogonality;
        err[c] = error_norm(singular_solution, sing, sing, trial, {sol.u.data(), std::size_t(sol.u.size())}, s.p[ip]);
      },
      [&](std::size_t c) {
        const auto [ip, il, in] = split(c);
        return "singular_refined p=" + fmt("%g", s.p[ip]) + " level=" + std::to_string(s.level[il]) +
               " n=" + std::to_string(s.n[in]);
      });
  for (double o : orth) out.max_orthogonality = std::max(out.max_orthogonality, o);
  for (std::size_t ip = 0; ip < np; ++ip)
    for (std::size_t il = 0; il < nl; ++il) {
      ConvergenceTable t;
      t.label = p_label(s.p[ip]) + "_l" + std::to_string(s.level[il]);
      t.p = s.p[ip];
      for (std::size_t in = 0; in < nn; ++in) t.rows.push_back({1.0 / double(s.n[in]), err[(ip * nl + il) * nn + in]});
      finish_table(t, out.notes);
      if (std::isfinite(t.fit.slope))
        out.notes.push_back(t.label + ": slope " + fmt("%.4f", t.fit.slope) + ", R^2 " + fmt("%.4f", t.fit.r2) +
                            ", oscillation amplitude " + fmt("%.3g", t.fit.max_deviation) + " (log e)");
      out.tables.push_back(std::move(t));
    }
}

// P0 solutions on h = 1/n for each test level, plus the references.
void run_level(const ExperimentSpec& s, ExperimentResult& out) {
  const std::size_t n = s.n.front();
  const auto mesh = uniform_mesh_1d(0.0, 1.0, n);
  const auto trial = PolySpace1D::p0(mesh);
  std::vector<int> levels = s.level;
  levels.push_back(s.reference_level - 1);
  levels.push_back(s.reference_level);
  const std::size_t np = s.p.size(), nl = levels.size();
  std::vector<Eigen::VectorXd> u(np * nl);
  std::vector<double> orth(np * nl, 0.0);
  for_cells(
      np * nl,
      [&](std::size_t c) {
        const auto pr = level_problem(s.p[c / nl]);
        const auto test = PolySpace1D::refined_p1(mesh, levels[c % nl], outflow_constraint(pr));
        SolverConfig cfg = s.solver;
        cfg.exec = Exec::Serial;
        const auto sol = solve_mixed(pr, trial, test, cfg);
        orth[c] = sol.diagnostics.orthogonality;
        u[c] = sol.u;
      },
      [&](std::size_t c) {
        return "level_convergence p=" + fmt("%g", s.p[c / nl]) + " level=" + std::to_string(levels[c % nl]);
      });
  for (double o : orth) out.max_orthogonality = std::max(out.max_orthogonality, o);
  const double h = 1.0 / double(n);
  auto dist = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b, double p) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) sum += h * std::pow(std::abs(a[i] - b[i]), p);
    return std::pow(sum, 1.0 / p);
  };
  for (std::size_t ip = 0; ip < np; ++ip) {
    const double p = s.p[ip];
    const auto& ref = u[ip * nl + nl - 1];
    ConvergenceTable t;
    t.label = p_label(p);
    t.p = p;
    for (std::size_t il = 0; il + 2 < nl; ++il)
      t.rows.push_back({h / std::ldexp(1.0, levels[il]), dist(u[ip * nl + il], ref, p)});
    finish_table(t, out.notes);
    const double d89 = dist(u[ip * nl + nl - 2], ref, p);
    const double finest = t.rows.empty() ? 0.0 : t.rows.back().error;
    out.notes.push_back(t.label + ": reference levels " + std::to_string(s.reference_level - 1) + " vs " +
                        std::to_string(s.reference_level) + " differ by " + fmt("%.3e", d89) +
                        ", finest measured error " + fmt("%.3e", finest));
    out.tables.push_back(std::move(t));
  }
}

void run_2d(const ExperimentSpec& s, ExperimentResult& out, bool jump) {
  std::vector<TriMesh2D> meshes;
  meshes.push_back(flow_aligned_channel(4, 8, s.seed));
  for (int l = 0; l < s.levels; ++l) meshes.push_back(red_refine_2d(meshes.back()));
  const std::size_t nl = meshes.size();
  std::vector<std::vector<double>> err(nl, std::vector<double>(s.p.size()));
  // the discrete solution does not depend on p
  for_cells(
      nl,
      [&](std::size_t l) {
        Problem2D pr;
        pr.mesh = &meshes[l];
        pr.source = [](Vec2) { return 0.0; };
        pr.inflow = jump ? inflow_jump : inflow_smooth;
        if (jump) pr.inflow_breaks = {{1.0 / 3.0, 0.0}};
        const P0Space2D trial(meshes[l]);
        const auto test = build_p1conf_basis(meshes[l], Exec::Serial);
        const auto u = solve_petrov_galerkin(pr, trial, test, Exec::Serial);
        for (std::size_t j = 0; j < s.p.size(); ++j)
          err[l][j] = error_norm_2d(pr, {u.data(), std::size_t(u.size())}, s.p[j]);
      },
      [&](std::size_t l) { return std::string(to_string(s.kind)) + " level=" + std::to_string(l); });
  for (std::size_t j = 0; j < s.p.size(); ++j) {
    ConvergenceTable t;
    t.label = p_label(s.p[j]);
    t.p = s.p[j];
    for (std::size_t l = 0; l < nl; ++l) t.rows.push_back({meshes[l].max_edge_length(), err[l][j]});
    finish_table(t, out.notes);
    out.tables.push_back(std::move(t));
  }
}

void write_csv_header(std::ostream& o) { o << "# ddmres v1\n"; }

std::ofstream open_out(const std::filesystem::path& f) {
  std::ofstream o(f, std::ios::binary);
  if (!o) fail(ErrorCode::Io, "cannot write " + f.string());
  return o;
}

}  // namespace

std::string_view to_string(ExperimentKind kind) noexcept { return kNames[static_cast<int>(kind)]; }

ExperimentKind parse_experiment(std::string_view name) {
  for (std::size_t i = 0; i < std::size(kNames); ++i)
    if (kNames[i] == name) return static_cast<ExperimentKind>(i);
  fail(ErrorCode::InvalidArgument, "unknown experiment '" + std::string(name) + "'");
}

std::vector<ExperimentKind> all_experiments() {
  std::vector<ExperimentKind> v;
  for (std::size_t i = 0; i < std::size(kNames); ++i) v.push_back(static_cast<ExperimentKind>(i));
  return v;
}

double jump_solution(double x) { return sign_fn(x - std::numbers::sqrt2 / 2.0); }

double singular_solution(double x) { return std::pow(std::abs(1.0 - 12.0 * x), -1.0 / 3.0); }

int cell_threads() {
  if (const char* env = std::getenv("DDMRES_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v >= 1) return static_cast<int>(v);
  }
  return std::max(1, omp_get_max_threads());
}

ExperimentSpec with_defaults(ExperimentSpec s) {
  auto pow2 = [](std::size_t lo, std::size_t hi) {
    std::vector<std::size_t> v;
    for (std::size_t n = lo; n <= hi; n *= 2) v.push_back(n);
    return v;
  };
  switch (s.kind) {
    case ExperimentKind::GibbsIdeal:
      if (s.p.empty()) s.p = {2.0, 1.5, 1.25, 1.125};
      if (s.n.empty()) s.n = {9};
      break;
    case ExperimentKind::GibbsDdmres:
      if (s.p.empty()) s.p = {1.01};
      if (s.n.empty()) s.n = {9};
      if (s.k.empty()) s.k = {2, 3, 5};
      break;
    case ExperimentKind::JumpRates1D:
      if (s.p.empty()) s.p = {1.0, 1.5, 2.0};
      if (s.n.empty()) s.n = pow2(4, 4096);
      break;
    case ExperimentKind::SingularRefined:
      if (s.p.empty()) s.p = {2.0};
      if (s.n.empty()) s.n = pow2(2, 256);
      if (s.level.empty()) s.level = {1, 2, 4};
      break;
    case ExperimentKind::LevelConvergence:
      if (s.p.empty()) s.p = {2.0};
      if (s.n.empty()) s.n = {16};
      if (s.level.empty()) s.level = {1, 2, 3, 4, 5, 6};
      break;
    case ExperimentKind::Advect2DSmooth:
    case ExperimentKind::Advect2DJump:
      if (s.p.empty()) s.p = {1.0, 1.5, 2.0, 3.0};
      break;
  }
  if (s.levels < 0) s.levels = 4;
  return s;
}

void validate(const ExperimentSpec& s) {
  const bool p_is_exponent_only = s.kind == ExperimentKind::JumpRates1D || s.kind == ExperimentKind::Advect2DSmooth ||
                                  s.kind == ExperimentKind::Advect2DJump;
  const double pmin = p_is_exponent_only ? 1.0 : 1.01;
  for (double p : s.p)
    require(std::isfinite(p) && p >= pmin && p <= 4.0, ErrorCode::InvalidArgument,
            "p = " + fmt("%g", p) + " outside [" + fmt("%g", pmin) + ", 4]");
  for (std::size_t n : s.n) require(n >= 1 && n <= (1u << 20), ErrorCode::InvalidArgument, "element count out of range");
  for (int k : s.k) require(k >= 1 && k <= 12, ErrorCode::InvalidArgument, "test degree out of range");
  for (int l : s.level) require(l >= 0 && l <= 14, ErrorCode::InvalidArgument, "refinement level out of range");
  require(s.levels <= 7, ErrorCode::InvalidArgument, "at most 7 red-refinement levels");
  if (s.kind == ExperimentKind::LevelConvergence) {
    require(s.reference_level >= 1 && s.reference_level <= 14, ErrorCode::InvalidArgument,
            "reference level out of range");
    for (int l : s.level)
      require(l < s.reference_level - 1, ErrorCode::InvalidArgument, "levels must lie below the reference level - 1");
  }
  require(s.solver.newton_tol > 0.0 && s.solver.max_iters > 0, ErrorCode::InvalidArgument, "bad solver settings");
}

void fill_rates(std::vector<TableRow>& rows) {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i].rate = std::numeric_limits<double>::quiet_NaN();
    if (i == 0) continue;
    const auto& a = rows[i - 1];
    const auto& b = rows[i];
    if (a.error > 0.0 && b.error > 0.0 && a.h > b.h)
      rows[i].rate = std::log2(a.error / b.error) / std::log2(a.h / b.h);
  }
}

RateFit fit_rate(std::span<const TableRow> rows, std::size_t first, std::size_t last) {
  last = std::min(last, rows.size());
  require(first < last && last - first >= 3, ErrorCode::DegenerateFit, "need at least 3 rows");
  const std::size_t m = last - first;
  std::vector<double> x(m), y(m);
  for (std::size_t i = 0; i < m; ++i) {
    const auto& r = rows[first + i];
    require(r.h > 0.0 && r.error > 0.0 && std::isfinite(r.error), ErrorCode::DegenerateFit,
            "non-positive h or error in row " + std::to_string(first + i));
    x[i] = std::log(r.h);
    y[i] = std::log(r.error);
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < m; ++i) mx += x[i], my += y[i];
  mx /= double(m);
  my /= double(m);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  require(sxx > 0.0, ErrorCode::DegenerateFit, "all rows share one h");
  RateFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ss = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double d = y[i] - (f.intercept + f.slope * x[i]);
    ss += d * d;
    f.max_deviation = std::max(f.max_deviation, std::abs(d));
  }
  f.r2 = syy > 0.0 ? 1.0 - ss / syy : 1.0;
  return f;
}

ExperimentResult run_experiment(const ExperimentSpec& spec_in) {
  ExperimentResult out;
  out.spec = with_defaults(spec_in);
  validate(out.spec);
  const auto& s = out.spec;
  switch (s.kind) {
    case ExperimentKind::GibbsIdeal: run_gibbs_ideal(s, out); break;
    case ExperimentKind::GibbsDdmres: run_gibbs_ddmres(s, out); break;
    case ExperimentKind::JumpRates1D: run_jump_rates(s, out); break;
    case ExperimentKind::SingularRefined: run_singular(s, out); break;
    case ExperimentKind::LevelConvergence: run_level(s, out); break;
    case ExperimentKind::Advect2DSmooth: run_2d(s, out, false); break;
    case ExperimentKind::Advect2DJump: run_2d(s, out, true); break;
  }
  return out;
}

std::vector<std::filesystem::path> write_outputs(const ExperimentResult& r, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
  const std::string name(to_string(r.spec.kind));
  std::vector<std::filesystem::path> files;

  for (const auto& t : r.tables) {
    const auto f = dir / (name + "_" + t.label + ".csv");
    auto o = open_out(f);
    write_csv_header(o);
    o << "h,error,rate\n";
    for (const auto& row : t.rows) o << num(row.h) << ',' << num(row.error) << ',' << num(row.rate) << '\n';
    files.push_back(f);
  }
  for (const auto& d : r.samples) {
    const auto f = dir / (name + "_" + d.label + ".csv");
    auto o = open_out(f);
    write_csv_header(o);
    o << "x,u\n";
    for (std::size_t i = 0; i < d.x.size(); ++i) o << num(d.x[i]) << ',' << num(d.u[i]) << '\n';
    files.push_back(f);
  }
  if (!r.tables.empty()) {
    const auto f = dir / (name + "_rates.csv");
    auto o = open_out(f);
    write_csv_header(o);
    o << "label,p,rows,slope,r2,max_deviation\n";
    for (const auto& t : r.tables)
      o << t.label << ',' << num(t.p) << ',' << t.rows.size() << ',' << num(t.fit.slope) << ',' << num(t.fit.r2)
        << ',' << num(t.fit.max_deviation) << '\n';
    files.push_back(f);
  }
  if (!r.samples.empty()) {
    const auto f = dir / (name + "_overshoot.csv");
    auto o = open_out(f);
    write_csv_header(o);
    o << "label,p,k,overshoot,iterations,residual,orthogonality\n";
    for (const auto& d : r.samples)
      o << d.label << ',' << num(d.p) << ',' << d.k << ',' << num(d.overshoot) << ',' << d.diagnostics.iterations
        << ',' << num(d.diagnostics.final_residual) << ',' << num(d.diagnostics.orthogonality) << '\n';
    files.push_back(f);
  }

  const auto gp = dir / (name + ".gp");
  auto o = open_out(gp);
  o << "set datafile separator ','\nset key left top\n";
  if (!r.tables.empty()) {
    o << "set logscale xy\nset xlabel 'h'\nset ylabel 'error'\nplot \\\n";
    for (std::size_t i = 0; i < r.tables.size(); ++i)
      o << "  '" << name << "_" << r.tables[i].label << ".csv' every ::2 using 1:2 with linespoints title '"
        << r.tables[i].label << "'" << (i + 1 < r.tables.size() ? ", \\\n" : "\n");
  } else {
    o << "set xlabel 'x'\nset ylabel 'u'\nplot \\\n";
    for (std::size_t i = 0; i < r.samples.size(); ++i)
      o << "  '" << name << "_" << r.samples[i].label << ".csv' every ::2 using 1:2 with linespoints title '"
        << r.samples[i].label << "'" << (i + 1 < r.samples.size() ? ", \\\n" : "\n");
  }
  files.push_back(gp);
  return files;
}

void apply_config(const std::filesystem::path& file, ExperimentSpec& spec) {
  toml::table tbl;
  try {
    tbl = toml::parse_file(file.string());
  } catch (const toml::parse_error& e) {
    fail(ErrorCode::InvalidArgument, "config " + file.string() + ": " + std::string(e.description()));
  }
  auto bad = [&](const std::string& key) {
    fail(ErrorCode::InvalidArgument, "config " + file.string() + ": bad value for '" + key + "'");
  };
  auto num_list = [&](const char* key, auto& dst) {
    const auto* node = tbl.get(key);
    if (!node) return;
    using T = typename std::decay_t<decltype(dst)>::value_type;
    dst.clear();
    auto push = [&](const toml::node& n) {
      if (auto v = n.value<double>()) {
        if constexpr (std::is_integral_v<T>) {
          if (*v != std::floor(*v) || (*v < 0 && std::is_unsigned_v<T>)) bad(key);
        }
        dst.push_back(static_cast<T>(*v));
      } else {
        bad(key);
      }
    };
    if (const auto* arr = node->as_array()) {
      for (const auto& n : *arr) push(n);
    } else {
      push(*node);
    }
  };
  auto integer = [&](const toml::table& t, const char* key, auto& dst) {
    if (const auto* n = t.get(key)) {
      auto v = n->value<int64_t>();
      if (!v) bad(key);
      dst = static_cast<std::decay_t<decltype(dst)>>(*v);
    }
  };
  auto real = [&](const toml::table& t, const char* key, double& dst) {
    if (const auto* n = t.get(key)) {
      auto v = n->value<double>();
      if (!v) bad(key);
      dst = *v;
    }
  };

  static const std::vector<std::string> top_keys{"experiment", "p",    "n",    "k",     "level",
                                                 "levels",     "reference_level", "seed", "solver"};
  for (const auto& [k, v] : tbl)
    if (std::find(top_keys.begin(), top_keys.end(), std::string(k.str())) == top_keys.end())
      fail(ErrorCode::InvalidArgument, "config " + file.string() + ": unknown key '" + std::string(k.str()) + "'");

  if (const auto* n = tbl.get("experiment")) {
    auto v = n->value<std::string>();
    if (!v) bad("experiment");
    spec.kind = parse_experiment(*v);
  }
  num_list("p", spec.p);
  num_list("n", spec.n);
  num_list("k", spec.k);
  num_list("level", spec.level);
  integer(tbl, "levels", spec.levels);
  integer(tbl, "reference_level", spec.reference_level);
  integer(tbl, "seed", spec.seed);

  if (const auto* sn = tbl.get("solver")) {
    const auto* st = sn->as_table();
    if (!st) bad("solver");
    auto& c = spec.solver;
    real(*st, "newton_tol", c.newton_tol);
    integer(*st, "max_iters", c.max_iters);
    real(*st, "eps_rel", c.eps_rel);
    integer(*st, "dense_threshold", c.dense_threshold);
    integer(*st, "quadrature_points", c.quadrature_points);
    if (const auto* n = st->get("full_jacobian")) {
      auto v = n->value<bool>();
      if (!v) bad("full_jacobian");
      c.full_jacobian = *v;
    }
    if (const auto* n = st->get("continuation")) {
      const auto* arr = n->as_array();
      if (!arr) bad("continuation");
      c.continuation.clear();
      for (const auto& e : *arr) {
        auto v = e.value<double>();
        if (!v) bad("continuation");
        c.continuation.push_back(*v);
      }
    }
  }
}

}  // namespace ddmres
