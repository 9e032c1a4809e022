#include "capsnews/optimizer.hpp"

#include <cmath>

#include "capsnews/errors.hpp"

namespace capsnews {

Adam::Adam(std::vector<Tensor> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  if (!(options_.learning_rate > 0.0)) throw InvalidArgument("learning rate must be positive");
  if (!(options_.beta1 >= 0.0 && options_.beta1 < 1.0) || !(options_.beta2 >= 0.0 && options_.beta2 < 1.0)) {
    throw InvalidArgument("moment decay rates must lie in [0, 1)");
  }
  for (const auto& p : params_) {
    if (!p.defined() || !p.is_leaf()) throw InvalidArgument("optimizer parameters must be leaf tensors");
    first_moment_.emplace_back(p.numel(), 0.0);
    second_moment_.emplace_back(p.numel(), 0.0);
  }
}

void Adam::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].has_grad()) {
      const auto& name = params_[i].name();
      throw UninitializedGradientError("parameter '" + (name.empty() ? "#" + std::to_string(i) : name) +
                                       "' has no gradient");
    }
  }
  ++step_count_;
  const Real t = static_cast<Real>(step_count_);
  const Real correction1 = 1.0 - std::pow(options_.beta1, t);
  const Real correction2 = 1.0 - std::pow(options_.beta2, t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto values = params_[i].mutable_data();
    auto grad = params_[i].mutable_grad();
    auto& m = first_moment_[i];
    auto& v = second_moment_[i];
    for (std::size_t k = 0; k < values.size(); ++k) {
      const Real g = grad[k];
      m[k] = options_.beta1 * m[k] + (1.0 - options_.beta1) * g;
      v[k] = options_.beta2 * v[k] + (1.0 - options_.beta2) * g * g;
      const Real m_hat = m[k] / correction1;
      const Real v_hat = v[k] / correction2;
      values[k] -= options_.learning_rate * m_hat / (std::sqrt(v_hat) + options_.epsilon);
    }
  }
  zero_grad();
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace capsnews
