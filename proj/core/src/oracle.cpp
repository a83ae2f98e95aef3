#include "dial/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace dial::oracle {

double w1_exact_1d(std::vector<double> a, std::vector<double> b) {
  if (a.size() != b.size() || a.empty()) {
    throw std::invalid_argument("w1_exact_1d: sizes " + std::to_string(a.size()) +
                                " and " + std::to_string(b.size()) +
                                " must match and be >= 1");
  }
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(a[i] - b[i]);
  return acc / static_cast<double>(a.size());
}

// Jonker-Volgenant style shortest augmenting path formulation with
// potentials; row/col 0 are sentinels.
std::vector<std::size_t> solve_assignment(
    const std::vector<std::vector<double>>& cost) {
  const std::size_t n = cost.size();
  if (n == 0) throw std::invalid_argument("solve_assignment: empty matrix");
  for (const auto& row : cost) {
    if (row.size() != n) {
      throw std::invalid_argument("solve_assignment: matrix not square");
    }
  }
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
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
  std::vector<std::size_t> assignment(n, 0);
  for (std::size_t j = 1; j <= n; ++j) assignment[p[j] - 1] = j - 1;
  return assignment;
}

namespace {

double euclidean(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    acc += d * d;
  }
  return std::sqrt(acc);
}

}  // namespace

double w1_exact_assignment(const EmpiricalDistribution& p,
                           const EmpiricalDistribution& q) {
  const std::size_t n = p.points.size();
  if (n != q.points.size() || n == 0) {
    throw std::invalid_argument("w1_exact_assignment: sizes " +
                                std::to_string(n) + " and " +
                                std::to_string(q.points.size()) +
                                " must match and be >= 1");
  }
  if (n > kAssignmentCap) {
    throw std::invalid_argument(
        "w1_exact_assignment: n=" + std::to_string(n) + " exceeds cap " +
        std::to_string(kAssignmentCap) + "; subsample the inputs");
  }
  const std::size_t dim = p.points[0].size();
  for (const auto& pt : p.points) {
    if (pt.size() != dim) {
      throw std::invalid_argument("w1_exact_assignment: ragged P");
    }
  }
  for (const auto& pt : q.points) {
    if (pt.size() != dim) {
      throw std::invalid_argument("w1_exact_assignment: ragged Q");
    }
  }
  std::vector<std::vector<double>> cost(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      cost[i][j] = euclidean(p.points[i], q.points[j]);
  const auto assignment = solve_assignment(cost);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += cost[i][assignment[i]];
  return total / static_cast<double>(n);
}

std::vector<double> finite_diff_grad(
    const std::function<double(const std::vector<double>&)>& fn,
    std::vector<double> point, double h) {
  std::vector<double> grad(point.size(), 0.0);
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double saved = point[i];
    point[i] = saved + h;
    const double fp = fn(point);
    point[i] = saved - h;
    const double fm = fn(point);
    point[i] = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw std::runtime_error("finite_diff_grad: non-finite evaluation at coordinate " +
                               std::to_string(i));
    }
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

}  // namespace dial::oracle
