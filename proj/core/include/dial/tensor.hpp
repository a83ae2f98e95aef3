#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace dial {

// Raised by tensor ops whose operand shapes do not conform. The message
// names the operation and both shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

// Dense row-major tensor of 64-bit reals. Rank 0 is a scalar, rank 1 a
// vector, rank 2 a matrix; nothing higher is needed.
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(Shape s, std::vector<double> d);

  static Tensor scalar(double v);
  static Tensor zeros(Shape s);
  static Tensor vector(std::vector<double> d);

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  bool is_scalar() const { return shape.empty(); }

  std::size_t rows() const { return shape.at(0); }
  std::size_t cols() const { return shape.at(1); }

  double& at(std::size_t i) { return data[i]; }
  double at(std::size_t i) const { return data[i]; }
  double& at(std::size_t i, std::size_t j) { return data[i * cols() + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * cols() + j]; }

  double scalar_value() const;
  bool all_finite() const;
};

bool same_shape(const Tensor& a, const Tensor& b);

}  // namespace dial
