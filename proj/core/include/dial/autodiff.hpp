#pragma once

#include <cstdint>
#include <vector>

#include "dial/tensor.hpp"

namespace dial::ad {

// Scalar math shared by the graph ops, the plain (graph-free) model forward
// and the tests. GELU is the tanh approximation
//   gelu(x) = 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
// which has closed-form first and second derivatives.
double gelu_scalar(double x);
double gelu_prime_scalar(double x);
double gelu_second_scalar(double x);
double sigmoid_scalar(double x);
double log_sigmoid_scalar(double x);

enum class Op : std::uint8_t {
  Leaf,
  MatMul,
  Add,
  Sub,
  Mul,
  ScalarMul,
  Concat,
  Gelu,
  GeluPrime,
  Sigmoid,
  LogSigmoid,
  Mean,
  Sum,
  Square,
  Norm,
  Slice,
  Transpose,
};

constexpr std::uint32_t kNoInput = 0xffffffffu;

struct Node {
  Op op = Op::Leaf;
  Tensor value;
  std::uint32_t in0 = kNoInput;
  std::uint32_t in1 = kNoInput;
  bool requires_grad = false;
  double aux = 0.0;    // ScalarMul factor / Norm eps
  std::size_t a0 = 0;  // Slice offset
  std::size_t a1 = 0;  // Slice length
};

class Graph;

// Lightweight handle to a node on a graph.
struct Value {
  Graph* graph = nullptr;
  std::uint32_t id = kNoInput;

  const Tensor& val() const;
  double scalar() const { return val().scalar_value(); }
  bool requires_grad() const;
};

// Gradients per node after a backward pass. Leaves the pass never reached
// read back as zero tensors.
class Gradients {
 public:
  Tensor at(Value v) const;
  bool reached(Value v) const;

 private:
  friend class Graph;
  std::vector<Tensor> by_node_;
};

// Tape of eagerly evaluated nodes. Construction order is topological by
// definition; backward walks it once in reverse.
class Graph {
 public:
  Value leaf(Tensor t, bool requires_grad);
  Value constant(Tensor t) { return leaf(std::move(t), false); }
  Value constant(double v) { return leaf(Tensor::scalar(v), false); }

  // Reverse-mode pass from a scalar loss; accumulates over all paths.
  Gradients backward(Value loss) const;

  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::uint32_t id) const { return nodes_[id]; }
  void reserve(std::size_t n) { nodes_.reserve(n); }

  Value push(Node n);

 private:
  std::vector<Node> nodes_;
};

Value matmul(Value a, Value b);
Value add(Value a, Value b);
Value sub(Value a, Value b);
Value mul(Value a, Value b);  // elementwise
Value scalar_mul(Value a, double s);
Value concat(Value a, Value b);  // vectors
Value gelu(Value a);
Value gelu_prime(Value a);
Value sigmoid(Value a);
Value log_sigmoid(Value a);
Value mean(Value a);
Value sum(Value a);
Value square(Value a);
Value norm(Value a, double eps = 1e-12);  // sqrt(sum x^2 + eps), eps > 0
Value slice(Value a, std::size_t offset, std::size_t len);
Value transpose(Value a);
Value dot(Value a, Value b);  // sum(mul(a, b))

inline Value operator+(Value a, Value b) { return add(a, b); }
inline Value operator-(Value a, Value b) { return sub(a, b); }
inline Value operator*(Value a, Value b) { return mul(a, b); }
inline Value operator*(double s, Value a) { return scalar_mul(a, s); }

enum class Activation : std::uint8_t { Identity, Gelu, Sigmoid };

double activation_scalar(Activation act, double x);
Value apply_activation(Activation act, Value preact);

// A feed-forward chain bound onto a graph: hidden affine+activation layers
// followed by an affine map to a scalar.
struct MlpLayerRef {
  Value weight;  // {out, in}
  Value bias;    // {out}
  Activation act = Activation::Gelu;
};

struct MlpRef {
  std::vector<MlpLayerRef> hidden;
  Value out_weight;  // {h}
  Value out_bias;    // scalar
};

struct MlpForwardResult {
  Value score;                  // scalar
  std::vector<Value> preacts;   // per hidden layer
  std::vector<Value> activations;
};

MlpForwardResult mlp_forward(const MlpRef& mlp, Value input);

// Builds grad_z d(z) symbolically: the chain of transposed weight products
// and activation-derivative scalings. The result is an ordinary graph node,
// so a later backward differentiates through it w.r.t. the MLP parameters.
// Activations must have first AND second derivatives registered (gelu,
// identity); sigmoid has none and is rejected at construction time.
Value input_gradient_graph(const MlpRef& mlp, Value z);

}  // namespace dial::ad
