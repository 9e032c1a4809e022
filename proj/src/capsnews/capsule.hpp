#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "capsnews/checkpoint.hpp"
#include "capsnews/tensor.hpp"

namespace capsnews {

// ---------------------------------------------------------------------------
// Routing-by-agreement.

struct RoutingOptions {
  std::size_t iterations = 3;
  /// Treat the routing logits as constants when computing couplings.
  bool stop_gradient = false;
  /// Keep every iteration's couplings in RoutingResult::history.
  bool record_history = false;
};

struct RoutingResult {
  Tensor outputs;    // [P x J x D]
  Tensor couplings;  // [P x I x J], final iteration
  std::vector<Tensor> history;
};

/// predictions [P x I x J x D] (or [I x J x D] for a single routing instance,
/// in which case outputs are [J x D] and couplings [I x J]).
///
/// Logits start at zero; each iteration takes couplings = softmax over J,
/// s_j = sum_i c_ij u_j|i, v_j = squash(s_j), and, except after the last
/// iteration, adds u_j|i . v_j to the logits.
RoutingResult route(const Tensor& predictions, const RoutingOptions& options);
/// Routing for every length-`window` window of predictions [T x M x J x D]:
/// position p routes the w * M capsules of rows p .. p+w-1 (window offset
/// major), giving outputs [(T-w+1) x J x D] without replicating the votes.
RoutingResult route_windows(const Tensor& predictions, std::size_t window, const RoutingOptions& options);

// ---------------------------------------------------------------------------
// Margin loss.

struct MarginLossParams {
  Real m_plus = 0.9;
  Real m_minus = 0.1;
  Real lambda_down = 0.5;

  void validate() const;
};

/// Builds a one-hot [C] tensor.
Tensor one_hot(std::size_t label, std::size_t num_classes);

/// sum_k T_k max(0, m+ - |v_k|)^2 + lambda (1 - T_k) max(0, |v_k| - m-)^2
Tensor margin_loss(const Tensor& lengths, const Tensor& target, const MarginLossParams& params);

// ---------------------------------------------------------------------------
// Layers. Each owns its parameters as named leaf tensors.

using Rng = std::mt19937_64;

class Parameterized {
 public:
  virtual ~Parameterized() = default;
  const std::vector<Tensor>& parameters() const noexcept { return params_; }

 protected:
  Tensor& register_parameter(std::string name, Tensor value);
  std::vector<Tensor> params_;
};

/// Word-window feature extractor: valid convolution followed by ReLU.
class NGramConv : public Parameterized {
 public:
  NGramConv(std::string prefix, std::size_t width, std::size_t embed_dim, std::size_t channels, Rng& rng);

  /// One input per embedding channel; pre-activation maps are summed, bias applied once.
  Tensor forward(std::span<const Tensor> embedded) const;

  std::size_t width() const noexcept { return width_; }
  std::size_t channels() const noexcept { return channels_; }

 private:
  std::size_t width_;
  std::size_t channels_;
  Tensor filters_;
  Tensor bias_;
};

class PrimaryCapsuleLayer : public Parameterized {
 public:
  PrimaryCapsuleLayer(std::string prefix, std::size_t in_channels, std::size_t maps, std::size_t capsule_dim,
                      Rng& rng);

  /// features [T x F] -> squashed capsules [T x M x d1].
  Tensor forward(const Tensor& features) const;

  std::size_t maps() const noexcept { return maps_; }
  std::size_t capsule_dim() const noexcept { return capsule_dim_; }

 private:
  std::size_t in_channels_;
  std::size_t maps_;
  std::size_t capsule_dim_;
  Tensor weight_;  // [M*d1 x 1 x F], a window-1 convolution
  Tensor bias_;
};

class ConvCapsuleLayer : public Parameterized {
 public:
  ConvCapsuleLayer(std::string prefix, std::size_t window, std::size_t in_maps, std::size_t in_dim,
                   std::size_t out_maps, std::size_t out_dim, RoutingOptions routing, Rng& rng);

  /// capsules [T x M x d1] -> [(T-w+1) x M2 x d2].
  Tensor forward(const Tensor& capsules) const;
  RoutingResult forward_with_routing(const Tensor& capsules) const;

  std::size_t window() const noexcept { return window_; }
  std::size_t out_maps() const noexcept { return out_maps_; }
  std::size_t out_dim() const noexcept { return out_dim_; }

 private:
  std::size_t window_;
  std::size_t in_maps_;
  std::size_t in_dim_;
  std::size_t out_maps_;
  std::size_t out_dim_;
  RoutingOptions routing_;
  Tensor weight_;  // [M x M2 x d2 x d1], shared across window offsets and positions
};

/// Fully connected capsule layer over the flattened capsule list. Transforms
/// are per (input map, class) and shared across positions, so any sequence
/// length is accepted. An optional auxiliary vector enters as one extra
/// input capsule with its own transforms.
class ClassCapsuleLayer : public Parameterized {
 public:
  ClassCapsuleLayer(std::string prefix, std::size_t in_maps, std::size_t in_dim, std::size_t num_classes,
                    std::size_t out_dim, std::size_t aux_dim, RoutingOptions routing, Rng& rng);

  /// capsules [N x M2 x d2] (N >= 1), aux [aux_dim] or undefined -> [C x d3].
  Tensor forward(const Tensor& capsules, const Tensor& aux = {}) const;
  RoutingResult forward_with_routing(const Tensor& capsules, const Tensor& aux = {}) const;

  std::size_t num_classes() const noexcept { return num_classes_; }
  std::size_t aux_dim() const noexcept { return aux_dim_; }

 private:
  std::size_t in_maps_;
  std::size_t in_dim_;
  std::size_t num_classes_;
  std::size_t out_dim_;
  std::size_t aux_dim_;
  RoutingOptions routing_;
  Tensor weight_;      // [M2 x C x d3 x d2]
  Tensor aux_weight_;  // [1 x C x d3 x aux_dim]
};

}  // namespace capsnews
