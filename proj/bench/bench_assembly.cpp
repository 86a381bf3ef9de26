// Serial vs OpenMP element loops. Arg(0) is the serial reference, Arg(1) the parallel kernel.

#include <benchmark/benchmark.h>

#include "ddmres/mesh.hpp"
#include "ddmres/optimal_test.hpp"
#include "ddmres/problem.hpp"
#include "ddmres/spaces.hpp"

using namespace ddmres;

namespace {

Exec policy(const benchmark::State& st) { return st.range(0) ? Exec::Parallel : Exec::Serial; }

Problem1D line_problem() {
  Problem1D pr;
  pr.beta = [](double x) { return 2.0 - x; };
  pr.dbeta = [](double) { return -1.0; };
  pr.source = [](double x) { return 4.0 - 2.0 * x; };
  pr.inflow = [](double) { return 1.0; };
  return pr;
}

const TriMesh2D& channel(int levels) {
  static const TriMesh2D meshes[] = {
      flow_aligned_channel(4, 8, 2019),
      red_refine_2d(flow_aligned_channel(4, 8, 2019)),
      red_refine_2d(red_refine_2d(flow_aligned_channel(4, 8, 2019))),
      red_refine_2d(red_refine_2d(red_refine_2d(flow_aligned_channel(4, 8, 2019)))),
  };
  return meshes[levels];
}

void BM_AssembleB_1D(benchmark::State& st) {
  const auto pr = line_problem();
  const auto mesh = uniform_mesh_1d(0.0, 1.0, 256);
  const auto trial = PolySpace1D::p0(mesh);
  const auto test = PolySpace1D::refined_p1(mesh, 3, outflow_constraint(pr));
  for (auto _ : st) benchmark::DoNotOptimize(assemble_B(pr, trial, test, policy(st)));
}
BENCHMARK(BM_AssembleB_1D)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_Gram_1D(benchmark::State& st) {
  const auto pr = line_problem();
  const auto mesh = uniform_mesh_1d(0.0, 1.0, 256);
  const auto test = PolySpace1D::refined_p1(mesh, 3, outflow_constraint(pr));
  for (auto _ : st) benchmark::DoNotOptimize(gram_matrix(pr, test, TestNormKind::AdjointGraph, policy(st)));
}
BENCHMARK(BM_Gram_1D)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_Sample_1D(benchmark::State& st) {
  const auto pr = line_problem();
  const auto mesh = uniform_mesh_1d(0.0, 1.0, 256);
  const auto test = PolySpace1D::pk(mesh, 3, outflow_constraint(pr));
  for (auto _ : st)
    benchmark::DoNotOptimize(sample_test_space(pr, test, TestNormKind::AdjointGraph, 0, policy(st)));
}
BENCHMARK(BM_Sample_1D)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_P1ConfBasis(benchmark::State& st) {
  const auto& mesh = channel(3);
  for (auto _ : st) benchmark::DoNotOptimize(build_p1conf_basis(mesh, policy(st)));
  st.counters["triangles"] = double(mesh.num_triangles());
}
BENCHMARK(BM_P1ConfBasis)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_AssembleB_2D(benchmark::State& st) {
  const auto& mesh = channel(3);
  const auto test = build_p1conf_basis(mesh);
  Problem2D pr;
  pr.mesh = &mesh;
  pr.source = [](Vec2) { return 0.0; };
  const P0Space2D trial(mesh);
  for (auto _ : st) benchmark::DoNotOptimize(assemble_B(pr, trial, test, policy(st)));
}
BENCHMARK(BM_AssembleB_2D)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
