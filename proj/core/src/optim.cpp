#include "dial/optim.hpp"

#include <cmath>

namespace dial {

void AdamW::step(std::span<double> params, std::span<const double> grad) {
  if (params.size() != m_.size() || grad.size() != m_.size()) {
    throw ShapeError("adamw: parameter vector size " +
                     std::to_string(params.size()) + ", gradient " +
                     std::to_string(grad.size()) + ", state " +
                     std::to_string(m_.size()));
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * grad[i];
    v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * grad[i] * grad[i];
    const double m_hat = m_[i] / bc1;
    const double v_hat = v_[i] / bc2;
    params[i] -= lr_ * (m_hat / (std::sqrt(v_hat) + kEps) +
                        weight_decay_ * params[i]);
  }
}

}  // namespace dial
