#ifndef MEANFIELD_ASSIGNMENT_HPP
#define MEANFIELD_ASSIGNMENT_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "meanfield/core.hpp"

namespace meanfield {

struct AssignmentResult {
  std::vector<std::size_t> column_of_row;  // row i is matched to column column_of_row[i]
  double total_cost = 0.0;
};

// Minimum-cost perfect matching on a dense n x n cost matrix (row-major),
// shortest augmenting paths with dual potentials, O(n^3). Ties resolve to the
// lowest column index. The result is certified by complementary slackness:
// reduced costs c_ij - u_i - v_j are nonnegative and vanish on the matching.
inline AssignmentResult solve_assignment(std::span<const double> cost, std::size_t n) {
  require(cost.size() == n * n, "solve_assignment: cost matrix must be n x n");
  require(n >= 1, "solve_assignment: empty problem");
  constexpr double kInf = std::numeric_limits<double>::infinity();
  auto c = [&](std::size_t i, std::size_t j) { return cost[(i - 1) * n + (j - 1)]; };

  // 1-based; column 0 and row 0 are sentinels.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = c(i0, j) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  AssignmentResult res;
  res.column_of_row.assign(n, 0);
  for (std::size_t j = 1; j <= n; ++j) res.column_of_row[p[j] - 1] = j - 1;
  std::vector<double> matched(n);
  double scale = 1.0;
  for (double x : cost) scale = std::max(scale, std::abs(x));
  for (std::size_t i = 0; i < n; ++i) matched[i] = cost[i * n + res.column_of_row[i]];
  res.total_cost = pairwise_sum(matched);

  const double tol = 1e-9 * scale;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= n; ++j) {
      const double rc = c(i, j) - u[i] - v[j];
      if (rc < -tol)
        throw NumericalError("solve_assignment: dual infeasible reduced cost " +
                                 std::to_string(rc),
                             static_cast<long>(i));
    }
    const std::size_t j = res.column_of_row[i - 1] + 1;
    if (std::abs(c(i, j) - u[i] - v[j]) > tol)
      throw NumericalError("solve_assignment: complementary slackness violated",
                           static_cast<long>(i));
  }
  return res;
}

}  // namespace meanfield

#endif  // MEANFIELD_ASSIGNMENT_HPP
