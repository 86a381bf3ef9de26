#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "ddmres/error.hpp"
#include "ddmres/experiments.hpp"

using namespace ddmres;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("ddmres_test_" + name);
  fs::remove_all(dir);
  return dir;
}

std::vector<TableRow> power_rows(double s) {
  std::vector<TableRow> rows;
  for (int i = 0; i < 6; ++i) {
    const double h = std::ldexp(1.0, -i);
    rows.push_back({h, 3.0 * std::pow(h, s)});
  }
  return rows;
}

}  // namespace

TEST(FitRate, ExactPowerLaws) {
  for (double s : {1.0, 0.5, 2.0}) {
    const auto rows = power_rows(s);
    const auto f = fit_rate(rows);
    EXPECT_NEAR(f.slope, s, 1e-12);
    EXPECT_NEAR(f.r2, 1.0, 1e-12);
    EXPECT_NEAR(std::exp(f.intercept), 3.0, 1e-12);
  }
}

TEST(FitRate, SubrangeAndOscillation) {
  auto rows = power_rows(1.0);
  rows[3].error *= 1.5;
  const auto all = fit_rate(rows);
  EXPECT_LT(all.r2, 1.0);
  EXPECT_GT(all.max_deviation, 0.1);
  EXPECT_NEAR(fit_rate(rows, 0, 3).slope, 1.0, 1e-12);
  EXPECT_THROW(fit_rate(rows, 4), Error);  // only rows 4, 5
}

TEST(FitRate, Degenerate) {
  auto rows = power_rows(1.0);
  EXPECT_THROW(fit_rate(std::span<const TableRow>(rows).first(2)), Error);
  rows[2].error = 0.0;
  try {
    fit_rate(rows);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateFit);
  }
}

TEST(FillRates, LocalRates) {
  auto rows = power_rows(0.5);
  fill_rates(rows);
  EXPECT_TRUE(std::isnan(rows[0].rate));
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_NEAR(rows[i].rate, 0.5, 1e-12);
}

TEST(ExperimentNames, RoundTrip) {
  EXPECT_EQ(all_experiments().size(), 7u);
  for (auto k : all_experiments()) EXPECT_EQ(parse_experiment(to_string(k)), k);
  EXPECT_THROW(parse_experiment("nope"), Error);
}

TEST(ExperimentSpec, Validation) {
  ExperimentSpec s;
  s.kind = ExperimentKind::GibbsIdeal;
  s.p = {1.0};
  EXPECT_THROW(validate(with_defaults(s)), Error);
  s.kind = ExperimentKind::JumpRates1D;
  EXPECT_NO_THROW(validate(with_defaults(s)));
  s.p = {4.5};
  EXPECT_THROW(validate(with_defaults(s)), Error);
  s.p = {2.0};
  s.kind = ExperimentKind::LevelConvergence;
  s.level = {8};
  EXPECT_THROW(validate(with_defaults(s)), Error);
}

TEST(ExperimentSpec, Defaults) {
  ExperimentSpec s;
  s.kind = ExperimentKind::Advect2DJump;
  s = with_defaults(s);
  EXPECT_EQ(s.levels, 4);
  EXPECT_EQ(s.p, (std::vector<double>{1.0, 1.5, 2.0, 3.0}));
  s = with_defaults(ExperimentSpec{.kind = ExperimentKind::GibbsDdmres});
  EXPECT_EQ(s.k, (std::vector<int>{2, 3, 5}));
  EXPECT_EQ(s.n, (std::vector<std::size_t>{9}));
}

TEST(ExactSolutions, Values) {
  EXPECT_EQ(jump_solution(0.7), -1.0);
  EXPECT_EQ(jump_solution(0.71), 1.0);
  EXPECT_NEAR(singular_solution(0.0), 1.0, 1e-15);
  EXPECT_NEAR(singular_solution(1.0), std::cbrt(1.0 / 11.0), 1e-15);
}

TEST(RunExperiment, JumpRatesSmall) {
  ExperimentSpec s;
  s.kind = ExperimentKind::JumpRates1D;
  s.n = {8, 16, 32, 64};
  s.p = {2.0};
  const auto r = run_experiment(s);
  ASSERT_EQ(r.tables.size(), 1u);
  ASSERT_EQ(r.tables[0].rows.size(), 4u);
  EXPECT_DOUBLE_EQ(r.tables[0].rows[0].h, 0.125);
  for (const auto& row : r.tables[0].rows) {
    // cell-average error for a jump of 2 at fractional position t: (4 t (1 - t) h)^(1/2) in L^2
    const double t = std::fmod(std::sqrt(0.5) / row.h, 1.0);
    EXPECT_NEAR(row.error, std::sqrt(row.h * ((1 - t) * 4 * t * t + t * 4 * (1 - t) * (1 - t))), 1e-9);
  }
}

TEST(RunExperiment, OutputsAreDeterministicAcrossThreadCounts) {
  ExperimentSpec s;
  s.kind = ExperimentKind::SingularRefined;
  s.n = {2, 4, 8, 16};
  s.level = {1, 2};
  const auto d1 = scratch("det1"), d4 = scratch("det4");
  setenv("DDMRES_THREADS", "1", 1);
  EXPECT_EQ(cell_threads(), 1);
  const auto f1 = write_outputs(run_experiment(s), d1);
  setenv("DDMRES_THREADS", "4", 1);
  EXPECT_EQ(cell_threads(), 4);
  const auto f4 = write_outputs(run_experiment(s), d4);
  unsetenv("DDMRES_THREADS");
  ASSERT_EQ(f1.size(), f4.size());
  for (std::size_t i = 0; i < f1.size(); ++i) {
    EXPECT_EQ(f1[i].filename(), f4[i].filename());
    EXPECT_EQ(slurp(f1[i]), slurp(f4[i])) << f1[i];
  }
}

TEST(WriteOutputs, CsvFormat) {
  ExperimentSpec s;
  s.kind = ExperimentKind::JumpRates1D;
  s.n = {4, 8, 16};
  s.p = {1.5, 2.0};
  const auto dir = scratch("fmt");
  const auto files = write_outputs(run_experiment(s), dir);
  EXPECT_TRUE(fs::exists(dir / "jump_rates_1d_p1.5.csv"));
  EXPECT_TRUE(fs::exists(dir / "jump_rates_1d_p2.csv"));
  EXPECT_TRUE(fs::exists(dir / "jump_rates_1d_rates.csv"));
  EXPECT_TRUE(fs::exists(dir / "jump_rates_1d.gp"));
  const std::string csv = slurp(dir / "jump_rates_1d_p2.csv");
  EXPECT_EQ(csv.rfind("# ddmres v1\nh,error,rate\n0.25,", 0), 0u);
  EXPECT_NE(csv.find(",nan\n"), std::string::npos);
  std::istringstream in(csv);
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) ++lines;
  EXPECT_EQ(lines, 5);
}

TEST(WriteOutputs, GibbsSamples) {
  ExperimentSpec s;
  s.kind = ExperimentKind::GibbsIdeal;
  s.p = {2.0};
  const auto r = run_experiment(s);
  ASSERT_EQ(r.samples.size(), 1u);
  EXPECT_NEAR(r.samples[0].overshoot, 0.18301886792, 1e-9);
  EXPECT_EQ(r.samples[0].x.size(), 10u);
  const auto dir = scratch("gibbs");
  write_outputs(r, dir);
  EXPECT_TRUE(fs::exists(dir / "gibbs_ideal_p2.csv"));
  EXPECT_EQ(slurp(dir / "gibbs_ideal_overshoot.csv").rfind("# ddmres v1\nlabel,p,k,overshoot", 0), 0u);
}

TEST(ApplyConfig, TomlOverrides) {
  const auto dir = scratch("toml");
  fs::create_directories(dir);
  const auto f = dir / "c.toml";
  std::ofstream(f) << "p = [1.5, 2.0]\nn = [4, 8]\nlevels = 2\nseed = 11\n[solver]\nnewton_tol = 1e-9\n"
                      "max_iters = 80\nfull_jacobian = false\ncontinuation = [1.8]\n";
  ExperimentSpec s;
  apply_config(f, s);
  EXPECT_EQ(s.p, (std::vector<double>{1.5, 2.0}));
  EXPECT_EQ(s.n, (std::vector<std::size_t>{4, 8}));
  EXPECT_EQ(s.levels, 2);
  EXPECT_EQ(s.seed, 11u);
  EXPECT_DOUBLE_EQ(s.solver.newton_tol, 1e-9);
  EXPECT_EQ(s.solver.max_iters, 80);
  EXPECT_FALSE(s.solver.full_jacobian);
  EXPECT_EQ(s.solver.continuation, std::vector<double>{1.8});

  std::ofstream(f) << "bogus = 1\n";
  EXPECT_THROW(apply_config(f, s), Error);
  std::ofstream(f) << "n = [1.5]\n";
  EXPECT_THROW(apply_config(f, s), Error);
  std::ofstream(f) << "p = [\n";
  EXPECT_THROW(apply_config(f, s), Error);
}

TEST(RunExperiment, ErrorsNameTheCell) {
  ExperimentSpec s;
  s.kind = ExperimentKind::GibbsDdmres;
  s.k = {2};
  s.solver.max_iters = 1;
  try {
    run_experiment(s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NewtonDiverged);
    EXPECT_NE(std::string(e.what()).find("k=2"), std::string::npos);
  }
}
