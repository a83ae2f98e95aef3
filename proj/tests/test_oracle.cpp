#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "dial/oracle.hpp"
#include "dial/rng.hpp"

using namespace dial;
using oracle::EmpiricalDistribution;

namespace {

EmpiricalDistribution random_cloud(std::size_t n, std::size_t dim, Rng& rng,
                                   double scale = 2.0) {
  EmpiricalDistribution d;
  d.points.resize(n);
  for (auto& p : d.points) {
    p.resize(dim);
    for (auto& v : p) v = rng.uniform(-scale, scale);
  }
  return d;
}

double euclid(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    acc += (a[i] - b[i]) * (a[i] - b[i]);
  }
  return std::sqrt(acc);
}

// Factorial brute force over all bijections.
double w1_brute_force(const EmpiricalDistribution& p,
                      const EmpiricalDistribution& q) {
  const std::size_t n = p.points.size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      total += euclid(p.points[i], q.points[perm[i]]);
    }
    best = std::min(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / static_cast<double>(n);
}

}  // namespace

TEST_CASE("1-D exact W1: identity, sorted matching, translation") {
  CHECK(oracle::w1_exact_1d({3.0, -1.0, 2.0}, {3.0, -1.0, 2.0}) == 0.0);
  CHECK(oracle::w1_exact_1d({0.0, 2.0}, {1.0, 3.0}) == doctest::Approx(1.0));

  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> a(9), b;
    for (auto& v : a) v = rng.uniform(-5.0, 5.0);
    const double c = rng.uniform(-3.0, 3.0);
    b = a;
    for (auto& v : b) v += c;
    CHECK(oracle::w1_exact_1d(a, b) == doctest::Approx(std::abs(c)).epsilon(1e-12));
  }
}

TEST_CASE("1-D exact W1 rejects mismatched sizes") {
  CHECK_THROWS_AS(oracle::w1_exact_1d({1.0}, {1.0, 2.0}), std::invalid_argument);
  CHECK_THROWS_AS(oracle::w1_exact_1d({}, {}), std::invalid_argument);
}

TEST_CASE("assignment W1 equals factorial brute force for n <= 7") {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + trial % 6;
    const std::size_t dim = 1 + trial % 3;
    const auto p = random_cloud(n, dim, rng);
    const auto q = random_cloud(n, dim, rng);
    const double exact = oracle::w1_exact_assignment(p, q);
    const double brute = w1_brute_force(p, q);
    CHECK(exact == doctest::Approx(brute).epsilon(1e-12));
  }
}

TEST_CASE("assignment W1 agrees with the 1-D solver") {
  Rng rng(22);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 3 + trial % 10;
    std::vector<double> a(n), b(n);
    for (auto& v : a) v = rng.uniform(-4.0, 4.0);
    for (auto& v : b) v = rng.uniform(-4.0, 4.0);
    EmpiricalDistribution p, q;
    for (const double v : a) p.points.push_back({v});
    for (const double v : b) q.points.push_back({v});
    CHECK(oracle::w1_exact_assignment(p, q) ==
          doctest::Approx(oracle::w1_exact_1d(a, b)).epsilon(1e-12));
  }
}

TEST_CASE("metric axioms hold on sampled triples") {
  Rng rng(23);
  for (int trial = 0; trial < 15; ++trial) {
    const std::size_t n = 4 + trial % 5;
    const auto p = random_cloud(n, 2, rng);
    const auto q = random_cloud(n, 2, rng);
    const auto r = random_cloud(n, 2, rng);
    CHECK(oracle::w1_exact_assignment(p, p) == doctest::Approx(0.0));
    const double pq = oracle::w1_exact_assignment(p, q);
    const double qp = oracle::w1_exact_assignment(q, p);
    const double qr = oracle::w1_exact_assignment(q, r);
    const double pr = oracle::w1_exact_assignment(p, r);
    CHECK(pq == doctest::Approx(qp).epsilon(1e-12));
    CHECK(pr <= pq + qr + 1e-9);
  }
}

TEST_CASE("assignment W1 is invariant to permuting the input points") {
  Rng rng(24);
  auto p = random_cloud(12, 3, rng);
  auto q = random_cloud(12, 3, rng);
  const double base = oracle::w1_exact_assignment(p, q);
  rng.shuffle(p.points);
  rng.shuffle(q.points);
  CHECK(oracle::w1_exact_assignment(p, q) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("assignment W1 enforces equal sizes and the n cap") {
  EmpiricalDistribution p, q;
  p.points = {{0.0}, {1.0}};
  q.points = {{0.0}};
  CHECK_THROWS_AS(oracle::w1_exact_assignment(p, q), std::invalid_argument);

  EmpiricalDistribution big_p, big_q;
  big_p.points.assign(513, {0.0});
  big_q.points.assign(513, {1.0});
  CHECK_THROWS_WITH_AS(
      oracle::w1_exact_assignment(big_p, big_q),
      "w1_exact_assignment: n=513 exceeds cap 512; subsample the inputs",
      std::invalid_argument);
}

TEST_CASE("1-D shift property is exact for the assignment solver") {
  Rng rng(25);
  auto p = random_cloud(16, 1, rng);
  const double c = 1.75;
  EmpiricalDistribution q = p;
  for (auto& pt : q.points) pt[0] += c;
  CHECK(oracle::w1_exact_assignment(p, q) == doctest::Approx(c).epsilon(1e-12));
}

TEST_CASE("finite differences recover analytic gradients of simple maps") {
  const auto half_norm2 = [](const std::vector<double>& v) {
    double acc = 0.0;
    for (const double x : v) acc += x * x;
    return 0.5 * acc;
  };
  const std::vector<double> point = {1.0, -2.0, 0.5};
  const auto g = oracle::finite_diff_grad(half_norm2, point);
  for (std::size_t i = 0; i < point.size(); ++i) {
    CHECK(g[i] == doctest::Approx(point[i]).epsilon(1e-8));
  }

  const std::vector<double> w = {0.3, 0.7, -1.1};
  const auto linear = [&w](const std::vector<double>& v) {
    double acc = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) acc += w[i] * v[i];
    return acc;
  };
  const auto gl = oracle::finite_diff_grad(linear, point);
  for (std::size_t i = 0; i < point.size(); ++i) {
    CHECK(gl[i] == doctest::Approx(w[i]).epsilon(1e-9));
  }
}

TEST_CASE("finite differences report non-finite evaluations") {
  const auto bad = [](const std::vector<double>& v) {
    return v[0] > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
  };
  CHECK_THROWS_AS(oracle::finite_diff_grad(bad, {0.0}), std::runtime_error);
}
