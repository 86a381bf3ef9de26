#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Sparse>

namespace ddmres {

/// Execution policy of element loops. Parallel runs the element kernels under
/// OpenMP and merges their output in element order, so both policies produce
/// identical matrices.
enum class Exec { Serial, Parallel };

/// Number of OpenMP threads available to Parallel loops (1 without OpenMP).
int max_threads();

using Triplets = std::vector<Eigen::Triplet<double>>;

/// Runs kernel(e, out) for every element and concatenates the per-element
/// outputs in element order.
template <class Kernel>
Triplets gather_elements(std::size_t n, Exec exec, Kernel&& kernel) {
  std::vector<Triplets> parts(n);
  const long count = static_cast<long>(n);
  if (exec == Exec::Parallel) {
#pragma omp parallel for schedule(dynamic, 16)
    for (long e = 0; e < count; ++e) kernel(static_cast<std::size_t>(e), parts[e]);
  } else {
    for (long e = 0; e < count; ++e) kernel(static_cast<std::size_t>(e), parts[e]);
  }
  std::size_t total = 0;
  for (const auto& p : parts) total += p.size();
  Triplets out;
  out.reserve(total);
  for (auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

}  // namespace ddmres
