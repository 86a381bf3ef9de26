#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ddmres/solver.hpp"

namespace ddmres {

enum class ExperimentKind {
  GibbsIdeal,        ///< best L^p approximation of sign(x), 9 elements
  GibbsDdmres,       ///< P1-cont / Pk-cont mixed solve for sign(x)
  JumpRates1D,       ///< P0 / optimal test, u = sign(x - sqrt(2)/2)
  SingularRefined,   ///< P0 / refined P1, u = |1 - 12x|^(-1/3)
  LevelConvergence,  ///< P0 / refined P1 on h = 1/16 against a fine reference
  Advect2DSmooth,    ///< flow-aligned P0 / P1-conf, inflow sin(pi x)
  Advect2DJump,      ///< same with inflow sin(pi x) sign(x - 1/3)
};

std::string_view to_string(ExperimentKind kind) noexcept;
/// Throws InvalidArgument for unknown names.
ExperimentKind parse_experiment(std::string_view name);
std::vector<ExperimentKind> all_experiments();

/// Parameters of one run. Empty lists select the experiment's defaults.
struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::JumpRates1D;
  std::vector<double> p;
  /// 1-D element counts.
  std::vector<std::size_t> n;
  /// Test degrees (gibbs_ddmres).
  std::vector<int> k;
  /// Test refinement levels (singular_refined, level_convergence).
  std::vector<int> level;
  /// Red-refinement levels beyond the initial 2-D mesh (-1: default 4).
  int levels = -1;
  /// Reference level for level_convergence.
  int reference_level = 9;
  /// Seed of the 2-D mesh generator.
  std::uint64_t seed = 2019;
  SolverConfig solver;
};

/// Fills defaults in place of empty lists.
ExperimentSpec with_defaults(ExperimentSpec spec);

/// Throws InvalidArgument when a parameter is out of range. Trial exponents
/// must lie in [1.01, 4]; experiments whose solution does not depend on p
/// (jump_rates_1d and the 2-D runs) also accept p = 1 as error exponent.
void validate(const ExperimentSpec& spec);

struct TableRow {
  double h = 0.0;
  double error = 0.0;
  /// log2(e_{2h} / e_h) / log2(2h / h) against the previous row; NaN for the first.
  double rate = std::numeric_limits<double>::quiet_NaN();
};

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 1.0;
  /// max |log e - fit| over the fitted rows.
  double max_deviation = 0.0;
};

/// Least-squares slope of log e against log h over rows [first, last).
/// Throws DegenerateFit on non-positive data or fewer than 3 rows.
RateFit fit_rate(std::span<const TableRow> rows, std::size_t first = 0,
                 std::size_t last = std::numeric_limits<std::size_t>::max());

/// Fills the local rates of a table sorted by decreasing h.
void fill_rates(std::vector<TableRow>& rows);

struct ConvergenceTable {
  /// File-name friendly series label, e.g. "p2" or "p2_l4".
  std::string label;
  double p = 2.0;
  std::vector<TableRow> rows;
  RateFit fit;
};

/// Nodal values of a 1-D solution (Gibbs runs).
struct SampleDump {
  std::string label;
  double p = 2.0;
  int k = 0;  ///< test degree, 0 for the ideal approximation
  std::vector<double> x;
  std::vector<double> u;
  double overshoot = 0.0;  ///< max u - 1
  SolverDiagnostics diagnostics;
};

struct ExperimentResult {
  ExperimentSpec spec;
  std::vector<ConvergenceTable> tables;
  std::vector<SampleDump> samples;
  std::vector<std::string> notes;
  /// Largest orthogonality residual over all mixed solves.
  double max_orthogonality = 0.0;
};

/// Runs an experiment. Independent cells run concurrently, capped by the
/// environment variable DDMRES_THREADS; results do not depend on the thread
/// count. Solver errors are rethrown with the failing cell named.
ExperimentResult run_experiment(const ExperimentSpec& spec);

/// Writes `<name>_<label>.csv` per table or sample, `<name>_rates.csv` and
/// `<name>.gp` into dir. Returns the files written.
std::vector<std::filesystem::path> write_outputs(const ExperimentResult& result, const std::filesystem::path& dir);

/// Reads overrides from a TOML file into spec: keys experiment, p, n, k, level, levels,
/// reference_level, seed and a [solver] table (newton_tol, max_iters,
/// continuation, eps_rel, full_jacobian, dense_threshold,
/// quadrature_points).
void apply_config(const std::filesystem::path& file, ExperimentSpec& spec);

/// Thread cap from DDMRES_THREADS (>= 1), else the OpenMP default.
int cell_threads();

// Exact solutions of the 1-D experiments.
double jump_solution(double x);
double singular_solution(double x);

}  // namespace ddmres
