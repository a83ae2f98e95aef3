#include "dial/autodiff.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace dial::ad {

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

double gelu_scalar(double x) {
  const double u = kGeluC * (x + kGeluA * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_prime_scalar(double x) {
  const double u = kGeluC * (x + kGeluA * x * x * x);
  const double up = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
  const double t = std::tanh(u);
  const double s2 = 1.0 - t * t;
  return 0.5 * (1.0 + t) + 0.5 * x * s2 * up;
}

double gelu_second_scalar(double x) {
  const double u = kGeluC * (x + kGeluA * x * x * x);
  const double up = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
  const double upp = 6.0 * kGeluA * kGeluC * x;
  const double t = std::tanh(u);
  const double s2 = 1.0 - t * t;
  return s2 * up + 0.5 * x * s2 * (upp - 2.0 * t * up * up);
}

double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log_sigmoid_scalar(double x) {
  if (x >= 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

double activation_scalar(Activation act, double x) {
  switch (act) {
    case Activation::Identity: return x;
    case Activation::Gelu: return gelu_scalar(x);
    case Activation::Sigmoid: return sigmoid_scalar(x);
  }
  throw std::logic_error("unknown activation");
}

const Tensor& Value::val() const { return graph->node(id).value; }
bool Value::requires_grad() const { return graph->node(id).requires_grad; }

Value Graph::push(Node n) {
  if (nodes_.size() >= kNoInput) {
    throw std::length_error("graph node limit exceeded");
  }
  nodes_.push_back(std::move(n));
  return Value{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Value Graph::leaf(Tensor t, bool requires_grad) {
  Node n;
  n.op = Op::Leaf;
  n.value = std::move(t);
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

namespace {

void check_same_graph(Value a, Value b, const char* op) {
  if (a.graph != b.graph) {
    throw std::logic_error(std::string(op) + ": operands on distinct graphs");
  }
}

Value unary(Op op, Value a, Tensor value, double aux = 0.0) {
  Node n;
  n.op = op;
  n.value = std::move(value);
  n.in0 = a.id;
  n.requires_grad = a.requires_grad();
  n.aux = aux;
  return a.graph->push(std::move(n));
}

Value binary(Op op, Value a, Value b, Tensor value) {
  Node n;
  n.op = op;
  n.value = std::move(value);
  n.in0 = a.id;
  n.in1 = b.id;
  n.requires_grad = a.requires_grad() || b.requires_grad();
  return a.graph->push(std::move(n));
}

[[noreturn]] void shape_fail(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape) +
                   " and " + shape_str(b.shape) + " do not conform");
}

}  // namespace

Value matmul(Value a, Value b) {
  check_same_graph(a, b, "matmul");
  const Tensor& A = a.val();
  const Tensor& B = b.val();
  if (A.rank() != 2) shape_fail("matmul", A, B);
  const std::size_t r = A.rows(), c = A.cols();
  if (B.rank() == 1) {
    if (B.shape[0] != c) shape_fail("matmul", A, B);
    Tensor out = Tensor::zeros({r});
    for (std::size_t i = 0; i < r; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < c; ++j) acc += A.at(i, j) * B.at(j);
      out.at(i) = acc;
    }
    return binary(Op::MatMul, a, b, std::move(out));
  }
  if (B.rank() == 2) {
    if (B.rows() != c) shape_fail("matmul", A, B);
    const std::size_t k = B.cols();
    Tensor out = Tensor::zeros({r, k});
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        const double aij = A.at(i, j);
        for (std::size_t l = 0; l < k; ++l) out.at(i, l) += aij * B.at(j, l);
      }
    }
    return binary(Op::MatMul, a, b, std::move(out));
  }
  shape_fail("matmul", A, B);
}

Value add(Value a, Value b) {
  check_same_graph(a, b, "add");
  const Tensor& A = a.val();
  const Tensor& B = b.val();
  if (!same_shape(A, B)) shape_fail("add", A, B);
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += B.data[i];
  return binary(Op::Add, a, b, std::move(out));
}

Value sub(Value a, Value b) {
  check_same_graph(a, b, "sub");
  const Tensor& A = a.val();
  const Tensor& B = b.val();
  if (!same_shape(A, B)) shape_fail("sub", A, B);
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= B.data[i];
  return binary(Op::Sub, a, b, std::move(out));
}

Value mul(Value a, Value b) {
  check_same_graph(a, b, "mul");
  const Tensor& A = a.val();
  const Tensor& B = b.val();
  if (!same_shape(A, B)) shape_fail("mul", A, B);
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= B.data[i];
  return binary(Op::Mul, a, b, std::move(out));
}

Value scalar_mul(Value a, double s) {
  Tensor out = a.val();
  for (double& v : out.data) v *= s;
  return unary(Op::ScalarMul, a, std::move(out), s);
}

Value concat(Value a, Value b) {
  check_same_graph(a, b, "concat");
  const Tensor& A = a.val();
  const Tensor& B = b.val();
  if (A.rank() != 1 || B.rank() != 1) shape_fail("concat", A, B);
  Tensor out = Tensor::zeros({A.size() + B.size()});
  for (std::size_t i = 0; i < A.size(); ++i) out.at(i) = A.at(i);
  for (std::size_t i = 0; i < B.size(); ++i) out.at(A.size() + i) = B.at(i);
  return binary(Op::Concat, a, b, std::move(out));
}

Value gelu(Value a) {
  Tensor out = a.val();
  for (double& v : out.data) v = gelu_scalar(v);
  return unary(Op::Gelu, a, std::move(out));
}

Value gelu_prime(Value a) {
  Tensor out = a.val();
  for (double& v : out.data) v = gelu_prime_scalar(v);
  return unary(Op::GeluPrime, a, std::move(out));
}

Value sigmoid(Value a) {
  Tensor out = a.val();
  for (double& v : out.data) v = sigmoid_scalar(v);
  return unary(Op::Sigmoid, a, std::move(out));
}

Value log_sigmoid(Value a) {
  Tensor out = a.val();
  for (double& v : out.data) v = log_sigmoid_scalar(v);
  return unary(Op::LogSigmoid, a, std::move(out));
}

Value mean(Value a) {
  const Tensor& A = a.val();
  if (A.size() == 0) throw ShapeError("mean: empty tensor");
  double acc = 0.0;
  for (const double v : A.data) acc += v;
  return unary(Op::Mean, a, Tensor::scalar(acc / static_cast<double>(A.size())));
}

Value sum(Value a) {
  double acc = 0.0;
  for (const double v : a.val().data) acc += v;
  return unary(Op::Sum, a, Tensor::scalar(acc));
}

Value square(Value a) {
  Tensor out = a.val();
  for (double& v : out.data) v *= v;
  return unary(Op::Square, a, std::move(out));
}

Value norm(Value a, double eps) {
  if (!(eps > 0.0)) {
    throw std::invalid_argument("norm: eps must be > 0");
  }
  double acc = eps;
  for (const double v : a.val().data) acc += v * v;
  return unary(Op::Norm, a, Tensor::scalar(std::sqrt(acc)), eps);
}

Value slice(Value a, std::size_t offset, std::size_t len) {
  const Tensor& A = a.val();
  if (A.rank() != 1 || offset + len > A.size()) {
    throw ShapeError("slice: [" + std::to_string(offset) + "," +
                     std::to_string(offset + len) + ") out of shape " +
                     shape_str(A.shape));
  }
  Tensor out = Tensor::zeros({len});
  for (std::size_t i = 0; i < len; ++i) out.at(i) = A.at(offset + i);
  Node n;
  n.op = Op::Slice;
  n.value = std::move(out);
  n.in0 = a.id;
  n.requires_grad = a.requires_grad();
  n.a0 = offset;
  n.a1 = len;
  return a.graph->push(std::move(n));
}

Value transpose(Value a) {
  const Tensor& A = a.val();
  if (A.rank() != 2) {
    throw ShapeError("transpose: needs a matrix, got " + shape_str(A.shape));
  }
  Tensor out = Tensor::zeros({A.cols(), A.rows()});
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (std::size_t j = 0; j < A.cols(); ++j) out.at(j, i) = A.at(i, j);
  return unary(Op::Transpose, a, std::move(out));
}

Value dot(Value a, Value b) { return sum(mul(a, b)); }

Tensor Gradients::at(Value v) const {
  if (v.id < by_node_.size() && !by_node_[v.id].data.empty()) {
    return by_node_[v.id];
  }
  return Tensor::zeros(v.val().shape);
}

bool Gradients::reached(Value v) const {
  return v.id < by_node_.size() && !by_node_[v.id].data.empty();
}

namespace {

void accumulate(std::vector<Tensor>& grads, std::uint32_t id, Tensor g) {
  Tensor& slot = grads[id];
  if (slot.data.empty()) {
    slot = std::move(g);
    return;
  }
  for (std::size_t i = 0; i < slot.size(); ++i) slot.data[i] += g.data[i];
}

}  // namespace

Gradients Graph::backward(Value loss) const {
  if (loss.graph != this) {
    throw std::logic_error("backward: loss from another graph");
  }
  if (!node(loss.id).value.is_scalar()) {
    throw ShapeError("backward: loss must be scalar, got " +
                     shape_str(node(loss.id).value.shape));
  }
  Gradients out;
  out.by_node_.resize(nodes_.size());
  auto& grads = out.by_node_;
  grads[loss.id] = Tensor::scalar(1.0);

  for (std::uint32_t id = loss.id + 1; id-- > 0;) {
    const Node& n = nodes_[id];
    if (!n.requires_grad || grads[id].data.empty()) continue;
    const Tensor g = grads[id];  // copy: accumulation below may reallocate

    auto wants = [&](std::uint32_t in) {
      return in != kNoInput && nodes_[in].requires_grad;
    };

    switch (n.op) {
      case Op::Leaf:
        break;
      case Op::MatMul: {
        const Tensor& A = nodes_[n.in0].value;
        const Tensor& B = nodes_[n.in1].value;
        if (B.rank() == 1) {
          if (wants(n.in0)) {
            Tensor da = Tensor::zeros(A.shape);
            for (std::size_t i = 0; i < A.rows(); ++i)
              for (std::size_t j = 0; j < A.cols(); ++j)
                da.at(i, j) = g.at(i) * B.at(j);
            accumulate(grads, n.in0, std::move(da));
          }
          if (wants(n.in1)) {
            Tensor db = Tensor::zeros(B.shape);
            for (std::size_t i = 0; i < A.rows(); ++i)
              for (std::size_t j = 0; j < A.cols(); ++j)
                db.at(j) += A.at(i, j) * g.at(i);
            accumulate(grads, n.in1, std::move(db));
          }
        } else {
          if (wants(n.in0)) {
            Tensor da = Tensor::zeros(A.shape);  // g {r,k} x B^T {k,c}
            for (std::size_t i = 0; i < A.rows(); ++i)
              for (std::size_t l = 0; l < B.cols(); ++l) {
                const double gil = g.at(i, l);
                for (std::size_t j = 0; j < A.cols(); ++j)
                  da.at(i, j) += gil * B.at(j, l);
              }
            accumulate(grads, n.in0, std::move(da));
          }
          if (wants(n.in1)) {
            Tensor db = Tensor::zeros(B.shape);  // A^T {c,r} x g {r,k}
            for (std::size_t i = 0; i < A.rows(); ++i)
              for (std::size_t j = 0; j < A.cols(); ++j) {
                const double aij = A.at(i, j);
                for (std::size_t l = 0; l < B.cols(); ++l)
                  db.at(j, l) += aij * g.at(i, l);
              }
            accumulate(grads, n.in1, std::move(db));
          }
        }
        break;
      }
      case Op::Add:
        if (wants(n.in0)) accumulate(grads, n.in0, g);
        if (wants(n.in1)) accumulate(grads, n.in1, g);
        break;
      case Op::Sub:
        if (wants(n.in0)) accumulate(grads, n.in0, g);
        if (wants(n.in1)) {
          Tensor neg = g;
          for (double& v : neg.data) v = -v;
          accumulate(grads, n.in1, std::move(neg));
        }
        break;
      case Op::Mul: {
        if (wants(n.in0)) {
          Tensor da = g;
          const Tensor& B = nodes_[n.in1].value;
          for (std::size_t i = 0; i < da.size(); ++i) da.data[i] *= B.data[i];
          accumulate(grads, n.in0, std::move(da));
        }
        if (wants(n.in1)) {
          Tensor db = g;
          const Tensor& A = nodes_[n.in0].value;
          for (std::size_t i = 0; i < db.size(); ++i) db.data[i] *= A.data[i];
          accumulate(grads, n.in1, std::move(db));
        }
        break;
      }
      case Op::ScalarMul:
        if (wants(n.in0)) {
          Tensor da = g;
          for (double& v : da.data) v *= n.aux;
          accumulate(grads, n.in0, std::move(da));
        }
        break;
      case Op::Concat: {
        const std::size_t na = nodes_[n.in0].value.size();
        if (wants(n.in0)) {
          Tensor da = Tensor::zeros({na});
          for (std::size_t i = 0; i < na; ++i) da.at(i) = g.at(i);
          accumulate(grads, n.in0, std::move(da));
        }
        if (wants(n.in1)) {
          const std::size_t nb = nodes_[n.in1].value.size();
          Tensor db = Tensor::zeros({nb});
          for (std::size_t i = 0; i < nb; ++i) db.at(i) = g.at(na + i);
          accumulate(grads, n.in1, std::move(db));
        }
        break;
      }
      case Op::Gelu:
        if (wants(n.in0)) {
          const Tensor& X = nodes_[n.in0].value;
          Tensor da = g;
          for (std::size_t i = 0; i < da.size(); ++i)
            da.data[i] *= gelu_prime_scalar(X.data[i]);
          accumulate(grads, n.in0, std::move(da));
        }
        break;
      case Op::GeluPrime:
        if (wants(n.in0)) {
          const Tensor& X = nodes_[n.in0].value;
          Tensor da = g;
          for (std::size_t i = 0; i < da.size(); ++i)
            da.data[i] *= gelu_second_scalar(X.data[i]);
          accumulate(grads, n.in0, std::move(da));
        }
        break;
      case Op::Sigmoid:
        if (wants(n.in0)) {
          Tensor da = g;
          for (std::size_t i = 0; i < da.size(); ++i) {
            const double s = n.value.data[i];
            da.data[i] *= s * (1.0 - s);
          }
          accumulate(grads, n.in0, std::move(da));
        }
        break;
      case Op::LogSigmoid:
        if (wants(n.in0)) {
          const Tensor& X = nodes_[n.in0].value;
          Tensor da = g;
          for (std::size_t i = 0; i < da.size(); ++i)
            da.data[i] *= sigmoid_scalar(-X.data[i]);
          accumulate(grads, n.in0, std::move(da));
        }
        break;
      case Op::Mean:
        if (wants(n.in0)) {
          const Tensor& X = nodes_[n.in0].value;
          const double s = g.scalar_value() / static_cast<double>(X.size());
          Tensor da = Tensor::zeros(X.shape);
          for (double& v : da.data) v = s;
          accumulate(grads, n.in0, std::move(da));
        }
        break;
      case Op::Sum:
        if (wants(n.in0)) {
          const Tensor& X = nodes_[n.in0].value;
          Tensor da = Tensor::zeros(X.shape);
          for (double& v : da.data) v = g.scalar_value();
          accumulate(grads, n.in0, std::move(da));
        }
        break;
      case Op::Square:
        if (wants(n.in0)) {
          const Tensor& X = nodes_[n.in0].value;
          Tensor da = g;
          for (std::size_t i = 0; i < da.size(); ++i)
            da.data[i] *= 2.0 * X.data[i];
          accumulate(grads, n.in0, std::move(da));
        }
        break;
      case Op::Norm:
        if (wants(n.in0)) {
          const Tensor& X = nodes_[n.in0].value;
          const double s = g.scalar_value() / n.value.scalar_value();
          Tensor da = X;
          for (double& v : da.data) v *= s;
          accumulate(grads, n.in0, std::move(da));
        }
        break;
      case Op::Slice:
        if (wants(n.in0)) {
          const Tensor& X = nodes_[n.in0].value;
          Tensor da = Tensor::zeros(X.shape);
          for (std::size_t i = 0; i < n.a1; ++i) da.at(n.a0 + i) = g.at(i);
          accumulate(grads, n.in0, std::move(da));
        }
        break;
      case Op::Transpose:
        if (wants(n.in0)) {
          const Tensor& X = nodes_[n.in0].value;
          Tensor da = Tensor::zeros(X.shape);
          for (std::size_t i = 0; i < X.rows(); ++i)
            for (std::size_t j = 0; j < X.cols(); ++j) da.at(i, j) = g.at(j, i);
          accumulate(grads, n.in0, std::move(da));
        }
        break;
    }
  }
  return out;
}

Value apply_activation(Activation act, Value preact) {
  switch (act) {
    case Activation::Identity: return preact;
    case Activation::Gelu: return gelu(preact);
    case Activation::Sigmoid: return sigmoid(preact);
  }
  throw std::logic_error("unknown activation");
}

MlpForwardResult mlp_forward(const MlpRef& mlp, Value input) {
  MlpForwardResult r;
  Value a = input;
  for (const auto& layer : mlp.hidden) {
    Value h = add(matmul(layer.weight, a), layer.bias);
    r.preacts.push_back(h);
    a = apply_activation(layer.act, h);
    r.activations.push_back(a);
  }
  r.score = add(dot(mlp.out_weight, a), mlp.out_bias);
  return r;
}

Value input_gradient_graph(const MlpRef& mlp, Value z) {
  for (const auto& layer : mlp.hidden) {
    if (layer.act != Activation::Gelu && layer.act != Activation::Identity) {
      throw std::invalid_argument(
          "input_gradient_graph: activation has no registered second "
          "derivative");
    }
  }
  const MlpForwardResult fw = mlp_forward(mlp, z);
  Value v = mlp.out_weight;
  for (std::size_t i = mlp.hidden.size(); i-- > 0;) {
    const auto& layer = mlp.hidden[i];
    if (layer.act == Activation::Gelu) {
      v = mul(gelu_prime(fw.preacts[i]), v);
    }
    v = matmul(transpose(layer.weight), v);
  }
  return v;
}

}  // namespace dial::ad
