#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dial/tensor.hpp"

namespace dial {

// AdamW over a flat parameter vector: bias-corrected adaptive moments with
// decoupled weight decay applied directly to the parameters.
class AdamW {
 public:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  AdamW(std::size_t n, double lr, double weight_decay)
      : m_(n, 0.0), v_(n, 0.0), lr_(lr), weight_decay_(weight_decay) {}

  void step(std::span<double> params, std::span<const double> grad);

  std::uint64_t steps_taken() const { return t_; }

 private:
  std::vector<double> m_;
  std::vector<double> v_;
  std::uint64_t t_ = 0;
  double lr_;
  double weight_decay_;
};

}  // namespace dial
