#include <doctest.h>

#include <cmath>
#include <cstring>
#include <functional>
#include <vector>

#include "dial/autodiff.hpp"
#include "dial/oracle.hpp"
#include "dial/rng.hpp"

using namespace dial;
namespace ad = dial::ad;

namespace {

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data) v = rng.uniform(-scale, scale);
  return t;
}

using BuildFn =
    std::function<ad::Value(ad::Graph&, const std::vector<ad::Value>&)>;

// Compares backward() against the central finite-difference oracle on every
// leaf coordinate.
void gradcheck_impl(const BuildFn& build, const std::vector<Tensor>& leaves,
                    double tol) {
  std::vector<double> flat;
  for (const auto& t : leaves) {
    flat.insert(flat.end(), t.data.begin(), t.data.end());
  }
  const auto eval = [&](const std::vector<double>& point) {
    ad::Graph g;
    std::vector<ad::Value> vals;
    std::size_t pos = 0;
    for (const auto& t : leaves) {
      Tensor copy = t;
      for (std::size_t i = 0; i < copy.size(); ++i) copy.data[i] = point[pos++];
      vals.push_back(g.leaf(std::move(copy), true));
    }
    return build(g, vals).scalar();
  };
  const std::vector<double> numeric = oracle::finite_diff_grad(eval, flat);

  ad::Graph g;
  std::vector<ad::Value> vals;
  for (const auto& t : leaves) vals.push_back(g.leaf(t, true));
  const ad::Value loss = build(g, vals);
  const ad::Gradients grads = g.backward(loss);
  std::size_t pos = 0;
  for (const auto& v : vals) {
    const Tensor grad = grads.at(v);
    for (std::size_t i = 0; i < grad.size(); ++i) {
      CAPTURE(pos);
      CHECK(rel_err(grad.data[i], numeric[pos]) <= tol);
      ++pos;
    }
  }
}

}  // namespace

TEST_CASE("identity matmul and fixed points of activations") {
  ad::Graph g;
  Tensor eye = Tensor::zeros({3, 3});
  for (int i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
  const ad::Value v = g.constant(Tensor::vector({1.5, -2.0, 0.25}));
  const ad::Value mv = ad::matmul(g.constant(eye), v);
  CHECK(mv.val().data == std::vector<double>{1.5, -2.0, 0.25});

  CHECK(ad::sigmoid(g.constant(Tensor::scalar(0.0))).scalar() == 0.5);
  CHECK(ad::gelu(g.constant(Tensor::scalar(0.0))).scalar() == 0.0);
  CHECK(ad::log_sigmoid(g.constant(Tensor::scalar(0.0))).scalar() ==
        doctest::Approx(std::log(0.5)));
}

TEST_CASE("shape mismatch errors name the operation and both shapes") {
  ad::Graph g;
  const ad::Value a = g.constant(Tensor::zeros({2, 3}));
  const ad::Value b = g.constant(Tensor::zeros({4}));
  CHECK_THROWS_WITH_AS(ad::matmul(a, b),
                       "matmul: shapes {2,3} and {4} do not conform",
                       ShapeError);
  const ad::Value c = g.constant(Tensor::zeros({2}));
  CHECK_THROWS_AS(ad::add(b, c), ShapeError);
  CHECK_THROWS_AS(ad::concat(a, a), ShapeError);
  CHECK_THROWS_AS(ad::slice(b, 2, 4), ShapeError);
}

TEST_CASE("backward of sum is all-ones; backward of half squared norm is v") {
  ad::Graph g;
  const Tensor v = Tensor::vector({0.3, -1.2, 2.0, 0.0, 5.5});
  const ad::Value leaf = g.leaf(v, true);
  const ad::Gradients grads = g.backward(ad::sum(leaf));
  CHECK(grads.at(leaf).data == std::vector<double>(5, 1.0));

  ad::Graph g2;
  const ad::Value leaf2 = g2.leaf(v, true);
  const ad::Value loss = ad::scalar_mul(ad::sum(ad::square(leaf2)), 0.5);
  const Tensor grad = g2.backward(loss).at(leaf2);
  for (std::size_t i = 0; i < v.size(); ++i) {
    CHECK(grad.data[i] == doctest::Approx(v.data[i]).epsilon(1e-12));
  }
}

TEST_CASE("backward requires a scalar loss") {
  ad::Graph g;
  const ad::Value leaf = g.leaf(Tensor::vector({1.0, 2.0}), true);
  CHECK_THROWS_AS(g.backward(ad::square(leaf)), ShapeError);
}

TEST_CASE("unreached leaves read back as zero gradients") {
  ad::Graph g;
  const ad::Value used = g.leaf(Tensor::vector({1.0, 2.0}), true);
  const ad::Value unused = g.leaf(Tensor::vector({3.0, 4.0}), true);
  const ad::Gradients grads = g.backward(ad::sum(used));
  CHECK_FALSE(grads.reached(unused));
  CHECK(grads.at(unused).data == std::vector<double>{0.0, 0.0});
}

TEST_CASE("every primitive matches the finite-difference oracle") {
  Rng rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + trial % 4;

    gradcheck_impl(
        [](ad::Graph&, const std::vector<ad::Value>& v) {
          return ad::sum(ad::matmul(v[0], v[1]));
        },
        {random_tensor({3, n}, rng), random_tensor({n}, rng)}, 1e-6);

    gradcheck_impl(
        [](ad::Graph&, const std::vector<ad::Value>& v) {
          return ad::sum(ad::matmul(v[0], v[1]));
        },
        {random_tensor({2, n}, rng), random_tensor({n, 3}, rng)}, 1e-6);

    gradcheck_impl(
        [](ad::Graph&, const std::vector<ad::Value>& v) {
          return ad::mean(ad::mul(ad::add(v[0], v[1]), ad::sub(v[0], v[1])));
        },
        {random_tensor({n}, rng), random_tensor({n}, rng)}, 1e-6);

    gradcheck_impl(
        [](ad::Graph&, const std::vector<ad::Value>& v) {
          return ad::sum(ad::square(ad::concat(v[0], v[1])));
        },
        {random_tensor({n}, rng), random_tensor({3}, rng)}, 1e-6);

    gradcheck_impl(
        [](ad::Graph&, const std::vector<ad::Value>& v) {
          return ad::sum(ad::gelu(ad::scalar_mul(v[0], 1.7)));
        },
        {random_tensor({n}, rng, 2.0)}, 1e-6);

    gradcheck_impl(
        [](ad::Graph&, const std::vector<ad::Value>& v) {
          return ad::mean(ad::gelu_prime(v[0]));
        },
        {random_tensor({n}, rng, 2.0)}, 1e-6);

    gradcheck_impl(
        [](ad::Graph&, const std::vector<ad::Value>& v) {
          return ad::sum(ad::sigmoid(v[0]));
        },
        {random_tensor({n}, rng, 3.0)}, 1e-6);

    gradcheck_impl(
        [](ad::Graph&, const std::vector<ad::Value>& v) {
          return ad::sum(ad::log_sigmoid(v[0]));
        },
        {random_tensor({n}, rng, 3.0)}, 1e-6);

    gradcheck_impl(
        [](ad::Graph&, const std::vector<ad::Value>& v) {
          return ad::norm(v[0]);
        },
        {random_tensor({n}, rng)}, 1e-6);

    gradcheck_impl(
        [n](ad::Graph&, const std::vector<ad::Value>& v) {
          return ad::sum(ad::square(ad::slice(v[0], 1, n - 1)));
        },
        {random_tensor({n}, rng)}, 1e-6);

    gradcheck_impl(
        [](ad::Graph&, const std::vector<ad::Value>& v) {
          return ad::sum(ad::matmul(ad::transpose(v[0]), v[1]));
        },
        {random_tensor({3, n}, rng), random_tensor({3}, rng)}, 1e-6);
  }
}

TEST_CASE("random 2-layer network gradients match finite differences") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t in = 3, h = 5;
    const auto build = [](ad::Graph& g, const std::vector<ad::Value>& v) {
      const ad::Value h1 = ad::gelu(ad::add(ad::matmul(v[0], v[4]), v[1]));
      const ad::Value h2 = ad::gelu(ad::add(ad::matmul(v[2], h1), v[3]));
      return ad::scalar_mul(ad::sum(ad::square(h2)), 0.5);
    };
    gradcheck_impl(build,
                   {random_tensor({h, in}, rng), random_tensor({h}, rng),
                    random_tensor({4, h}, rng), random_tensor({4}, rng),
                    random_tensor({in}, rng)},
                   1e-6);
  }
}

TEST_CASE("gradient of a sum equals the sum of gradients") {
  Rng rng(99);
  for (int trial = 0; trial < 25; ++trial) {
    const Tensor x = random_tensor({6}, rng);
    ad::Graph g;
    const ad::Value leaf = g.leaf(x, true);
    const ad::Value f1 = ad::sum(ad::gelu(leaf));
    const ad::Value f2 = ad::norm(leaf);
    const Tensor g_sum = g.backward(ad::add(f1, f2)).at(leaf);
    const Tensor g1 = g.backward(f1).at(leaf);
    const Tensor g2 = g.backward(f2).at(leaf);
    for (std::size_t i = 0; i < x.size(); ++i) {
      CHECK(g_sum.data[i] ==
            doctest::Approx(g1.data[i] + g2.data[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("backward is bit-deterministic for identical graphs") {
  Rng rng(5);
  const Tensor w = random_tensor({4, 4}, rng);
  const Tensor x = random_tensor({4}, rng);
  auto run = [&] {
    ad::Graph g;
    const ad::Value wl = g.leaf(w, true);
    const ad::Value xl = g.leaf(x, true);
    const ad::Value loss =
        ad::norm(ad::gelu(ad::matmul(wl, ad::sigmoid(xl))));
    const ad::Gradients grads = g.backward(loss);
    std::vector<double> flat = grads.at(wl).data;
    const auto gx = grads.at(xl).data;
    flat.insert(flat.end(), gx.begin(), gx.end());
    return flat;
  };
  const auto a = run();
  const auto b = run();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(std::memcmp(&a[i], &b[i], sizeof(double)) == 0);
  }
}

TEST_CASE("norm rejects non-positive eps") {
  ad::Graph g;
  const ad::Value v = g.constant(Tensor::vector({1.0}));
  CHECK_THROWS_AS(ad::norm(v, 0.0), std::invalid_argument);
}

namespace {

// Builds a random gelu-MLP critic bound to a fresh graph.
struct TestMlp {
  std::vector<Tensor> tensors;  // w1,b1,w2,b2,out_w,out_b

  static TestMlp random(std::size_t in, std::size_t h1, std::size_t h2,
                        Rng& rng) {
    TestMlp m;
    m.tensors = {random_tensor({h1, in}, rng), random_tensor({h1}, rng),
                 random_tensor({h2, h1}, rng), random_tensor({h2}, rng),
                 random_tensor({h2}, rng), Tensor::scalar(0.1)};
    return m;
  }

  ad::MlpRef bind(ad::Graph& g, bool trainable) const {
    ad::MlpRef mlp;
    mlp.hidden.push_back({g.leaf(tensors[0], trainable),
                          g.leaf(tensors[1], trainable), ad::Activation::Gelu});
    mlp.hidden.push_back({g.leaf(tensors[2], trainable),
                          g.leaf(tensors[3], trainable), ad::Activation::Gelu});
    mlp.out_weight = g.leaf(tensors[4], trainable);
    mlp.out_bias = g.leaf(tensors[5], trainable);
    return mlp;
  }

  double score(const std::vector<double>& z) const {
    ad::Graph g;
    return ad::mlp_forward(bind(g, false),
                           g.constant(Tensor::vector(std::vector<double>(z))))
        .score.scalar();
  }
};

}  // namespace

TEST_CASE("input gradient of a linear critic is the weight vector") {
  ad::Graph g;
  ad::MlpRef mlp;
  mlp.out_weight = g.leaf(Tensor::vector({0.5, -1.0, 2.0}), false);
  mlp.out_bias = g.leaf(Tensor::scalar(0.3), false);
  const ad::Value z = g.constant(Tensor::vector({7.0, 8.0, 9.0}));
  const ad::Value grad = ad::input_gradient_graph(mlp, z);
  CHECK(grad.val().data == std::vector<double>{0.5, -1.0, 2.0});
}

TEST_CASE("input gradient of a gelu MLP matches finite differences in z") {
  Rng rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    const TestMlp m = TestMlp::random(4, 6, 5, rng);
    std::vector<double> z(4);
    for (auto& v : z) v = rng.uniform(-1.5, 1.5);

    ad::Graph g;
    const ad::Value grad = ad::input_gradient_graph(
        m.bind(g, false), g.constant(Tensor::vector(std::vector<double>(z))));
    const auto numeric = oracle::finite_diff_grad(
        [&m](const std::vector<double>& p) { return m.score(p); }, z);
    for (std::size_t i = 0; i < z.size(); ++i) {
      CHECK(rel_err(grad.val().data[i], numeric[i]) <= 1e-6);
    }
  }
}

TEST_CASE("parameter gradients through the input-gradient norm match "
          "finite differences") {
  Rng rng(47);
  const TestMlp m = TestMlp::random(3, 5, 4, rng);
  std::vector<double> z(3);
  for (auto& v : z) v = rng.uniform(-1.0, 1.0);

  // ||grad_z d(z)|| as a function of the flattened MLP parameters.
  const auto eval = [&](const std::vector<double>& flat) {
    TestMlp pert = m;
    std::size_t pos = 0;
    for (auto& t : pert.tensors) {
      for (auto& v : t.data) v = flat[pos++];
    }
    ad::Graph g;
    return ad::norm(ad::input_gradient_graph(
                        pert.bind(g, false),
                        g.constant(Tensor::vector(std::vector<double>(z)))))
        .scalar();
  };
  std::vector<double> flat;
  for (const auto& t : m.tensors) {
    flat.insert(flat.end(), t.data.begin(), t.data.end());
  }
  const auto numeric = oracle::finite_diff_grad(eval, flat);

  ad::Graph g;
  const ad::MlpRef mlp = m.bind(g, true);
  const ad::Value loss = ad::norm(ad::input_gradient_graph(
      mlp, g.constant(Tensor::vector(std::vector<double>(z)))));
  const ad::Gradients grads = g.backward(loss);
  std::vector<double> analytic;
  for (const auto& layer : mlp.hidden) {
    const auto gw = grads.at(layer.weight).data;
    analytic.insert(analytic.end(), gw.begin(), gw.end());
    const auto gb = grads.at(layer.bias).data;
    analytic.insert(analytic.end(), gb.begin(), gb.end());
  }
  const auto gow = grads.at(mlp.out_weight).data;
  analytic.insert(analytic.end(), gow.begin(), gow.end());
  const auto gob = grads.at(mlp.out_bias).data;
  analytic.insert(analytic.end(), gob.begin(), gob.end());

  REQUIRE(analytic.size() == numeric.size());
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    CHECK(rel_err(analytic[i], numeric[i]) <= 1e-4);
  }
}

TEST_CASE("activations without a second derivative are rejected") {
  ad::Graph g;
  ad::MlpRef mlp;
  mlp.hidden.push_back({g.leaf(Tensor::zeros({2, 2}), false),
                        g.leaf(Tensor::zeros({2}), false),
                        ad::Activation::Sigmoid});
  mlp.out_weight = g.leaf(Tensor::vector({1.0, 1.0}), false);
  mlp.out_bias = g.leaf(Tensor::scalar(0.0), false);
  const ad::Value z = g.constant(Tensor::vector({0.0, 0.0}));
  CHECK_THROWS_AS(ad::input_gradient_graph(mlp, z), std::invalid_argument);
}

TEST_CASE("gelu derivative formulas agree with finite differences") {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const double x = rng.uniform(-5.0, 5.0);
    const double h = 1e-6;
    const double fd1 = (ad::gelu_scalar(x + h) - ad::gelu_scalar(x - h)) / (2 * h);
    const double fd2 =
        (ad::gelu_prime_scalar(x + h) - ad::gelu_prime_scalar(x - h)) / (2 * h);
    CHECK(rel_err(ad::gelu_prime_scalar(x), fd1) <= 1e-8);
    CHECK(rel_err(ad::gelu_second_scalar(x), fd2) <= 1e-8);
  }
}
