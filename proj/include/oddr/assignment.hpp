#pragma once

// Rectangular Hungarian method (Kuhn-Munkres with potentials), O(n^2 m)
// for an n x m matrix with n <= m. Maximizes total weight over
// assignments that match every row; callers that want "at most one" on both
// sides encode missing edges as zero weight and drop them afterwards.

#include <concepts>
#include <cstddef>
#include <limits>
#include <vector>

namespace oddr {

template <std::floating_point T>
struct Assignment {
  std::vector<int> row_to_col;  // -1 for unassigned rows
  T total{};
};

/// `weight(i, j)` for i < rows, j < cols. Works for rows > cols by solving
/// the transposed problem.
template <std::floating_point T, class WeightFn>
  requires std::invocable<WeightFn, std::size_t, std::size_t>
Assignment<T> max_weight_assignment(std::size_t rows, std::size_t cols, WeightFn weight) {
  Assignment<T> out;
  out.row_to_col.assign(rows, -1);
  if (rows == 0 || cols == 0) return out;

  const bool transposed = rows > cols;
  const std::size_t n = transposed ? cols : rows;
  const std::size_t m = transposed ? rows : cols;
  auto cost = [&](std::size_t i, std::size_t j) -> T {
    return transposed ? -static_cast<T>(weight(j, i)) : -static_cast<T>(weight(i, j));
  };

  const T inf = std::numeric_limits<T>::infinity();
  std::vector<T> u(n + 1, T{}), v(m + 1, T{});
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<T> minv(m + 1, inf);
    std::vector<char> used(m + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      T delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const T cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
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

  for (std::size_t j = 1; j <= m; ++j) {
    if (p[j] == 0) continue;
    const std::size_t i = p[j] - 1;
    const std::size_t c = j - 1;
    if (transposed) {
      out.row_to_col[c] = static_cast<int>(i);
    } else {
      out.row_to_col[i] = static_cast<int>(c);
    }
  }
  for (std::size_t r = 0; r < rows; ++r) {
    if (out.row_to_col[r] >= 0) out.total += static_cast<T>(weight(r, static_cast<std::size_t>(out.row_to_col[r])));
  }
  return out;
}

}  // namespace oddr
