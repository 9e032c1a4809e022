#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace capsnews {

using Real = double;
using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<Real> data;
  std::vector<Real> grad;  // empty == absent
  bool requires_grad = false;
  bool leaf = true;
  std::string name;
  std::vector<std::shared_ptr<Node>> parents;
  // Adds d(loss)/d(parent) into each parent's grad, given this node's grad.
  std::function<void(Node&)> backward;

  std::vector<Real>& grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

/// Shared handle to a dense row-major array that may participate in the
/// gradient tape. Copies alias the same storage.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, Real value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<Real> values, bool requires_grad = false);
  static Tensor scalar(Real value);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<const Real> data() const { return node_->data; }
  /// Direct write access; only for leaves (parameters, optimizer updates).
  std::span<Real> mutable_data();
  Real item() const;
  Real operator[](std::size_t flat_index) const { return node_->data[flat_index]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on);
  bool is_leaf() const { return node_->leaf; }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const Real> grad() const { return node_->grad; }
  std::span<Real> mutable_grad() { return node_->grad_buffer(); }
  /// Sets the grad to zeros, allocating it when absent.
  void zero_grad();
  void clear_grad() { node_->grad.clear(); }

  const std::string& name() const { return node_->name; }
  void set_name(std::string name) { node_->name = std::move(name); }

  /// Value copy cut off from the tape.
  Tensor detach() const;
  Tensor clone() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Runs reverse-mode accumulation from a scalar loss. Leaf grads accumulate
/// across calls; intermediate grads are released afterwards.
void backward(const Tensor& loss);

/// Recording switch for inference. Thread-local.
bool grad_enabled();
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// ---------------------------------------------------------------------------
// Differentiable operations.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, Real factor);
Tensor add_scalar(const Tensor& a, Real value);
Tensor relu(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Elementwise mean of equally shaped tensors.
Tensor average(std::span<const Tensor> tensors);
Tensor reshape(const Tensor& a, Shape shape);
/// Concatenation along axis 0; trailing dimensions must agree.
Tensor concat_rows(std::span<const Tensor> parts);

Tensor matmul(const Tensor& a, const Tensor& b);

/// Valid 1-D cross-correlation over the token axis.
/// input [L x D], filters [F x K x D], bias [F] or undefined -> [(L-K+1) x F].
Tensor conv1d_valid(const Tensor& input, const Tensor& filters, const Tensor& bias);

/// Row gather from table [V x D] -> [ids.size() x D]. Rows equal to
/// `pinned_row` receive no gradient.
Tensor gather_rows(const Tensor& table, std::span<const std::int32_t> ids,
                   std::optional<std::size_t> pinned_row = std::nullopt);

inline constexpr Real kSquashEpsilon = 1e-9;

/// Capsule nonlinearity over the last axis:
/// (|s|^2 / (1 + |s|^2)) * s / (|s| + eps).
Tensor squash(const Tensor& s, Real epsilon = kSquashEpsilon);
/// Euclidean norm over the last axis; drops that axis.
Tensor vector_length(const Tensor& a);
/// Softmax over the last axis.
Tensor softmax(const Tensor& a);

/// u [N x M x Din], weights [M x J x Dout x Din] -> [N x M x J x Dout],
/// out[n,m,j] = weights[m,j] * u[n,m].
Tensor capsule_transform(const Tensor& u, const Tensor& weights);
/// x [T x ...] -> [(T-w+1) x w x ...], sliding windows along axis 0.
Tensor unfold_windows(const Tensor& x, std::size_t window);
/// couplings [P x I x J], predictions [P x I x J x D] -> [P x J x D],
/// out[p,j] = sum_i couplings[p,i,j] * predictions[p,i,j].
Tensor coupled_sum(const Tensor& couplings, const Tensor& predictions);
/// predictions [P x I x J x D], outputs [P x J x D] -> [P x I x J] dot products.
Tensor agreement(const Tensor& predictions, const Tensor& outputs);

/// Strided forms over predictions viewed as rows of [J x D]: input i of
/// position p reads row p * stride + i, so windows may overlap. With
/// predictions [T x M x J x D] and stride M, position p sees the I = w * M
/// capsules of rows p .. p+w-1 without copying them.
Tensor coupled_sum(const Tensor& couplings, const Tensor& predictions, std::size_t stride);
Tensor agreement(const Tensor& predictions, const Tensor& outputs, std::size_t inputs, std::size_t stride);

}  // namespace capsnews
