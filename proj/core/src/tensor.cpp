#include "dial/tensor.hpp"

#include <cmath>
#include <numeric>

namespace dial {

std::string shape_str(const Shape& s) {
  std::string out = "{";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "}";
}

static std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (const auto d : s) n *= d;
  return n;
}

Tensor::Tensor(Shape s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("tensor: shape " + shape_str(shape) + " wants " +
                     std::to_string(shape_numel(shape)) + " entries, got " +
                     std::to_string(data.size()));
  }
}

Tensor Tensor::scalar(double v) { return Tensor({}, {v}); }

Tensor Tensor::zeros(Shape s) {
  const std::size_t n = shape_numel(s);
  return Tensor(std::move(s), std::vector<double>(n, 0.0));
}

Tensor Tensor::vector(std::vector<double> d) {
  const std::size_t n = d.size();
  return Tensor({n}, std::move(d));
}

double Tensor::scalar_value() const {
  if (!is_scalar()) {
    throw ShapeError("scalar_value: tensor has shape " + shape_str(shape));
  }
  return data[0];
}

bool Tensor::all_finite() const {
  for (const double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

}  // namespace dial
