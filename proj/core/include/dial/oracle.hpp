#pragma once

#include <functional>
#include <vector>

#include "dial/tensor.hpp"

namespace dial::oracle {

// Exact W1 between equal-size 1-D empiricals: mean |a_(i) - b_(i)| over
// sorted order.
double w1_exact_1d(std::vector<double> a, std::vector<double> b);

// Equal-size empirical distributions with uniform weights and Euclidean
// ground metric.
struct EmpiricalDistribution {
  std::vector<std::vector<double>> points;
};

inline constexpr std::size_t kAssignmentCap = 512;

// Exact W1 via the minimum-cost assignment: (1/n) min over bijections of
// the summed pairwise Euclidean distances. Hungarian algorithm, O(n^3).
double w1_exact_assignment(const EmpiricalDistribution& p,
                           const EmpiricalDistribution& q);

// Minimum-cost assignment on a square cost matrix. Returns per-row column
// indices.
std::vector<std::size_t> solve_assignment(
    const std::vector<std::vector<double>>& cost);

// Central finite differences per coordinate.
std::vector<double> finite_diff_grad(
    const std::function<double(const std::vector<double>&)>& fn,
    std::vector<double> point, double h = 1e-5);

}  // namespace dial::oracle
