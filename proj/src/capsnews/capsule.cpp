#include "capsnews/capsule.hpp"

#include <cmath>

#include "capsnews/errors.hpp"

namespace capsnews {

namespace {

RoutingResult route_rows(const Tensor& rows, std::size_t np, std::size_t ni, std::size_t stride,
                         const RoutingOptions& options) {
  const std::size_t nj = rows.dim(rows.rank() - 2);
  RoutingResult result;
  Tensor logits = Tensor::zeros({np, ni, nj});
  for (std::size_t it = 0; it < options.iterations; ++it) {
    const Tensor couplings = softmax(options.stop_gradient ? logits.detach() : logits);
    const Tensor outputs = squash(coupled_sum(couplings, rows, stride));
    if (options.record_history) result.history.push_back(couplings);
    if (it + 1 == options.iterations) {
      result.outputs = outputs;
      result.couplings = couplings;
      break;
    }
    logits = add(logits, agreement(rows, outputs, ni, stride));
  }
  return result;
}

}  // namespace

RoutingResult route(const Tensor& predictions, const RoutingOptions& options) {
  if (options.iterations < 1) throw InvalidArgument("routing needs at least one iteration");
  if (!predictions.defined()) throw InvalidArgument("route: undefined predictions");
  const bool single = predictions.rank() == 3;
  if (!single && predictions.rank() != 4) {
    throw DimensionError("route: predictions must be [P x I x J x D] or [I x J x D], got " +
                         shape_str(predictions.shape()));
  }
  const std::size_t np = single ? 1 : predictions.dim(0);
  const std::size_t ni = single ? predictions.dim(0) : predictions.dim(1);
  auto result = route_rows(predictions, np, ni, ni, options);
  if (single) {
    const std::size_t nj = predictions.dim(1), d = predictions.dim(2);
    result.outputs = reshape(result.outputs, {nj, d});
    result.couplings = reshape(result.couplings, {ni, nj});
    for (auto& h : result.history) h = reshape(h, {ni, nj});
  }
  return result;
}

RoutingResult route_windows(const Tensor& predictions, std::size_t window, const RoutingOptions& options) {
  if (options.iterations < 1) throw InvalidArgument("routing needs at least one iteration");
  if (!predictions.defined() || predictions.rank() != 4) {
    throw DimensionError("route_windows: predictions must be [T x M x J x D]");
  }
  if (window == 0) throw InvalidArgument("route_windows: window must be positive");
  const std::size_t len = predictions.dim(0), maps = predictions.dim(1);
  if (len < window) throw SequenceTooShortError(len, window);
  return route_rows(predictions, len - window + 1, window * maps, maps, options);
}

void MarginLossParams::validate() const {
  if (!(m_plus > 0.0 && m_plus < 1.0)) throw ConfigError("m_plus must lie in (0, 1)");
  if (!(m_minus > 0.0 && m_minus < m_plus)) throw ConfigError("m_minus must lie in (0, m_plus)");
  if (!(lambda_down > 0.0)) throw ConfigError("lambda must be positive");
}

Tensor one_hot(std::size_t label, std::size_t num_classes) {
  if (label >= num_classes) {
    throw LabelError("label " + std::to_string(label) + " outside " + std::to_string(num_classes) + " classes");
  }
  auto t = Tensor::zeros({num_classes});
  t.mutable_data()[label] = 1.0;
  return t;
}

Tensor margin_loss(const Tensor& lengths, const Tensor& target, const MarginLossParams& params) {
  if (!lengths.defined() || !target.defined() || lengths.rank() != 1 || lengths.shape() != target.shape()) {
    throw DimensionError("margin_loss: lengths and target must be matching [C] vectors");
  }
  std::size_t hot = 0;
  for (auto v : target.data()) {
    if (v == 1.0) {
      ++hot;
    } else if (v != 0.0) {
      throw LabelError("margin_loss: target must be one-hot");
    }
  }
  if (hot != 1) throw LabelError("margin_loss: target has " + std::to_string(hot) + " hot entries");

  const std::size_t c = lengths.numel();
  std::vector<Real> off(c);
  for (std::size_t k = 0; k < c; ++k) off[k] = params.lambda_down * (1.0 - target[k]);
  const Tensor off_weight = Tensor::from({c}, std::move(off));

  const Tensor below = relu(scale(add_scalar(lengths, -params.m_plus), -1.0));  // max(0, m+ - |v|)
  const Tensor above = relu(add_scalar(lengths, -params.m_minus));              // max(0, |v| - m-)
  const Tensor present = mul(target, mul(below, below));
  const Tensor absent = mul(off_weight, mul(above, above));
  return sum(add(present, absent));
}

Tensor& Parameterized::register_parameter(std::string name, Tensor value) {
  value.set_name(std::move(name));
  value.set_requires_grad(true);
  params_.push_back(value);
  return params_.back();
}

namespace {

Tensor uniform_tensor(Shape shape, Real bound, Rng& rng) {
  std::uniform_real_distribution<Real> dist(-bound, bound);
  std::vector<Real> values(shape_numel(shape));
  for (auto& v : values) v = dist(rng);
  return Tensor::from(std::move(shape), std::move(values));
}

Real glorot(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<Real>(fan_in + fan_out));
}

}  // namespace

NGramConv::NGramConv(std::string prefix, std::size_t width, std::size_t embed_dim, std::size_t channels, Rng& rng)
    : width_(width), channels_(channels) {
  if (width == 0 || embed_dim == 0 || channels == 0) throw ConfigError("n-gram convolution sizes must be positive");
  filters_ = register_parameter(prefix + ".filters",
                                uniform_tensor({channels, width, embed_dim}, glorot(width * embed_dim, channels), rng));
  bias_ = register_parameter(prefix + ".bias", Tensor::zeros({channels}));
}

Tensor NGramConv::forward(std::span<const Tensor> embedded) const {
  if (embedded.empty()) throw EmptyInputError("n-gram convolution: no embedding channels");
  Tensor pre = conv1d_valid(embedded.front(), filters_, bias_);
  for (std::size_t i = 1; i < embedded.size(); ++i) pre = add(pre, conv1d_valid(embedded[i], filters_, Tensor{}));
  return relu(pre);
}

PrimaryCapsuleLayer::PrimaryCapsuleLayer(std::string prefix, std::size_t in_channels, std::size_t maps,
                                         std::size_t capsule_dim, Rng& rng)
    : in_channels_(in_channels), maps_(maps), capsule_dim_(capsule_dim) {
  if (in_channels == 0 || maps == 0 || capsule_dim == 0) throw ConfigError("primary capsule sizes must be positive");
  const std::size_t out = maps * capsule_dim;
  weight_ = register_parameter(prefix + ".weight", uniform_tensor({out, 1, in_channels}, glorot(in_channels, out), rng));
  bias_ = register_parameter(prefix + ".bias", Tensor::zeros({out}));
}

Tensor PrimaryCapsuleLayer::forward(const Tensor& features) const {
  if (!features.defined() || features.rank() != 2 || features.dim(1) != in_channels_) {
    throw DimensionError("primary capsules expect [T x " + std::to_string(in_channels_) + "] features, got " +
                         (features.defined() ? shape_str(features.shape()) : std::string("undefined")));
  }
  const Tensor projected = conv1d_valid(features, weight_, bias_);
  return squash(reshape(projected, {features.dim(0), maps_, capsule_dim_}));
}

ConvCapsuleLayer::ConvCapsuleLayer(std::string prefix, std::size_t window, std::size_t in_maps, std::size_t in_dim,
                                   std::size_t out_maps, std::size_t out_dim, RoutingOptions routing, Rng& rng)
    : window_(window), in_maps_(in_maps), in_dim_(in_dim), out_maps_(out_maps), out_dim_(out_dim), routing_(routing) {
  if (window == 0 || in_maps == 0 || in_dim == 0 || out_maps == 0 || out_dim == 0) {
    throw ConfigError("convolutional capsule sizes must be positive");
  }
  if (routing.iterations < 1) throw ConfigError("routing iterations must be at least 1");
  weight_ = register_parameter(prefix + ".weight",
                               uniform_tensor({in_maps, out_maps, out_dim, in_dim}, glorot(in_dim, out_dim), rng));
}

RoutingResult ConvCapsuleLayer::forward_with_routing(const Tensor& capsules) const {
  if (!capsules.defined() || capsules.rank() != 3 || capsules.dim(1) != in_maps_ || capsules.dim(2) != in_dim_) {
    throw DimensionError("convolutional capsules expect [T x " + std::to_string(in_maps_) + " x " +
                         std::to_string(in_dim_) + "], got " +
                         (capsules.defined() ? shape_str(capsules.shape()) : std::string("undefined")));
  }
  const std::size_t len = capsules.dim(0);
  if (len < window_) throw SequenceTooShortError(len, window_);
  // Votes are shared by every window that covers a position.
  return route_windows(capsule_transform(capsules, weight_), window_, routing_);
}

Tensor ConvCapsuleLayer::forward(const Tensor& capsules) const { return forward_with_routing(capsules).outputs; }

ClassCapsuleLayer::ClassCapsuleLayer(std::string prefix, std::size_t in_maps, std::size_t in_dim,
                                     std::size_t num_classes, std::size_t out_dim, std::size_t aux_dim,
                                     RoutingOptions routing, Rng& rng)
    : in_maps_(in_maps),
      in_dim_(in_dim),
      num_classes_(num_classes),
      out_dim_(out_dim),
      aux_dim_(aux_dim),
      routing_(routing) {
  if (in_maps == 0 || in_dim == 0 || out_dim == 0) throw ConfigError("class capsule sizes must be positive");
  if (num_classes < 2) throw ConfigError("class capsules need at least two classes");
  if (routing.iterations < 1) throw ConfigError("routing iterations must be at least 1");
  weight_ = register_parameter(prefix + ".weight",
                               uniform_tensor({in_maps, num_classes, out_dim, in_dim}, glorot(in_dim, out_dim), rng));
  if (aux_dim > 0) {
    aux_weight_ = register_parameter(prefix + ".aux_weight",
                                     uniform_tensor({1, num_classes, out_dim, aux_dim}, glorot(aux_dim, out_dim), rng));
  }
}

RoutingResult ClassCapsuleLayer::forward_with_routing(const Tensor& capsules, const Tensor& aux) const {
  if (!capsules.defined()) throw EmptyInputError("class capsules: empty input");
  if (capsules.rank() != 3 || capsules.dim(1) != in_maps_ || capsules.dim(2) != in_dim_) {
    throw DimensionError("class capsules expect [N x " + std::to_string(in_maps_) + " x " + std::to_string(in_dim_) +
                         "], got " + shape_str(capsules.shape()));
  }
  const std::size_t inputs = capsules.dim(0) * in_maps_;
  Tensor votes = reshape(capsule_transform(capsules, weight_), {inputs, num_classes_, out_dim_});
  if (aux_dim_ > 0) {
    if (!aux.defined() || aux.numel() != aux_dim_) {
      throw DimensionError("class capsules expect an auxiliary vector of size " + std::to_string(aux_dim_));
    }
    const Tensor aux_votes = reshape(capsule_transform(reshape(aux, {1, 1, aux_dim_}), aux_weight_),
                                     {1, num_classes_, out_dim_});
    const std::vector<Tensor> parts{votes, aux_votes};
    votes = concat_rows(parts);
  } else if (aux.defined()) {
    throw DimensionError("class capsules were built without an auxiliary input");
  }
  RoutingResult r = route(votes, routing_);
  return r;
}

Tensor ClassCapsuleLayer::forward(const Tensor& capsules, const Tensor& aux) const {
  return forward_with_routing(capsules, aux).outputs;
}

}  // namespace capsnews
