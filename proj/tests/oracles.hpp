#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance binary. Nothing here calls into the engine.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

namespace oracle {

// Values frozen from closed forms (checked with an independent script).
inline constexpr double kExpHalf = 0.6065306597126334;        // exp(-0.5)
inline constexpr double kLogisticAt2 = 0.4508530603792838;    // 0.1 / (0.1 + 0.9 exp(-2))
inline constexpr double kLogisticIntegral = 0.49402870804417875;  // int_0^2 i(t) dt = log(0.1 e^2 + 0.9)
inline constexpr double kFournierD1Q3N100 = 0.14641588833612779;
inline constexpr double kFournierD3Q3N1000 = 0.11;

// Logistic SI curve i(t) = i0 / (i0 + (1 - i0) exp(-beta t)).
inline double logistic(double i0, double beta, double t) { return i0 / (i0 + (1.0 - i0) * std::exp(-beta * t)); }

// Minimum transport cost by enumerating every basic solution of the
// transportation polytope (spanning-tree supports of size m + n - 1).
inline double brute_force_transport(const std::vector<double>& a, const std::vector<double>& b,
                                    const std::vector<double>& cost /* a.size() x b.size() */) {
  const std::size_t m = a.size(), n = b.size(), cells = m * n, basis = m + n - 1;
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> pick(cells, 0);
  std::fill(pick.end() - static_cast<long>(basis), pick.end(), 1);
  do {
    std::vector<double> row(a), col(b), flow(cells, 0.0);
    std::vector<char> open(cells, 0);
    std::size_t remaining = 0;
    for (std::size_t c = 0; c < cells; ++c)
      if (pick[c]) open[c] = 1, ++remaining;
    bool tree = true;
    while (remaining > 0) {
      bool progressed = false;
      for (std::size_t i = 0; i < m && !progressed; ++i) {
        std::size_t cnt = 0, last = 0;
        for (std::size_t j = 0; j < n; ++j)
          if (open[i * n + j]) ++cnt, last = j;
        if (cnt == 1) {
          const std::size_t c = i * n + last;
          flow[c] = row[i];
          col[last] -= row[i];
          row[i] = 0.0;
          open[c] = 0;
          --remaining;
          progressed = true;
        }
      }
      for (std::size_t j = 0; j < n && !progressed; ++j) {
        std::size_t cnt = 0, last = 0;
        for (std::size_t i = 0; i < m; ++i)
          if (open[i * n + j]) ++cnt, last = i;
        if (cnt == 1) {
          const std::size_t c = last * n + j;
          flow[c] = col[j];
          row[last] -= col[j];
          col[j] = 0.0;
          open[c] = 0;
          --remaining;
          progressed = true;
        }
      }
      if (!progressed) {
        tree = false;
        break;
      }
    }
    if (!tree) continue;
    bool feasible = true;
    for (double r : row) feasible = feasible && std::abs(r) < 1e-12;
    for (double c : col) feasible = feasible && std::abs(c) < 1e-12;
    for (double f : flow) feasible = feasible && f > -1e-12;
    if (!feasible) continue;
    double total = 0.0;
    for (std::size_t c = 0; c < cells; ++c) total += flow[c] * cost[c];
    best = std::min(best, total);
  } while (std::next_permutation(pick.begin(), pick.end()));
  return best;
}

}  // namespace oracle
