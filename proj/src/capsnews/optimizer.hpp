#pragma once

#include <cstdint>
#include <vector>

#include "capsnews/tensor.hpp"

namespace capsnews {

struct AdamOptions {
  Real learning_rate = 1e-3;
  Real beta1 = 0.9;
  Real beta2 = 0.999;
  Real epsilon = 1e-8;
};

/// Bias-corrected adaptive-moment optimizer. Holds first/second moment
/// buffers shaped like each parameter.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamOptions options = {});

  /// Applies one update from the accumulated grads, then zeroes them.
  /// Throws UninitializedGradientError if any parameter has no grad.
  void step();
  void zero_grad();

  std::uint64_t step_count() const noexcept { return step_count_; }
  const AdamOptions& options() const noexcept { return options_; }
  const std::vector<Tensor>& params() const noexcept { return params_; }

 private:
  std::vector<Tensor> params_;
  AdamOptions options_;
  std::vector<std::vector<Real>> first_moment_;
  std::vector<std::vector<Real>> second_moment_;
  std::uint64_t step_count_ = 0;
};

}  // namespace capsnews
