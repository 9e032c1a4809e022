#include <algorithm>
#include <cmath>

#include <cblas.h>

#include "capsnews/errors.hpp"
#include "capsnews/tensor.hpp"

namespace capsnews {

namespace {

using detail::Node;

Tensor make_result(Shape shape, std::vector<Real> data, std::initializer_list<const Tensor*> parents,
                   std::function<void(Node&)> bw) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  bool needs = false;
  if (grad_enabled()) {
    for (const auto* p : parents) needs = needs || p->requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    node->leaf = false;
    for (const auto* p : parents) node->parents.push_back(p->node());
    node->backward = std::move(bw);
  }
  return Tensor(std::move(node));
}

Tensor make_result(Shape shape, std::vector<Real> data, std::span<const Tensor> parents,
                   std::function<void(Node&)> bw) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  bool needs = false;
  if (grad_enabled()) {
    for (const auto& p : parents) needs = needs || p.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    node->leaf = false;
    for (const auto& p : parents) node->parents.push_back(p.node());
    node->backward = std::move(bw);
  }
  return Tensor(std::move(node));
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw InvalidArgument(std::string(op) + ": undefined tensor argument");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require_defined(a, op);
  require_defined(b, op);
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* arg) {
  require_defined(t, op);
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": " + arg + " must have rank " + std::to_string(rank) +
                         ", got " + shape_str(t.shape()));
  }
}

Shape drop_last(const Shape& s) { return Shape(s.begin(), s.end() - 1); }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<Real> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  Node* pa = a.node().get();
  Node* pb = b.node().get();
  return make_result(a.shape(), std::move(out), {&a, &b}, [pa, pb](Node& self) {
    for (Node* p : {pa, pb}) {
      if (!p->requires_grad) continue;
      auto& g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<Real> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  Node* pa = a.node().get();
  Node* pb = b.node().get();
  return make_result(a.shape(), std::move(out), {&a, &b}, [pa, pb](Node& self) {
    if (pa->requires_grad) {
      auto& g = pa->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (pb->requires_grad) {
      auto& g = pb->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<Real> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  Node* pa = a.node().get();
  Node* pb = b.node().get();
  return make_result(a.shape(), std::move(out), {&a, &b}, [pa, pb](Node& self) {
    if (pa->requires_grad) {
      auto& g = pa->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb->data[i];
    }
    if (pb->requires_grad) {
      auto& g = pb->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa->data[i];
    }
  });
}

Tensor scale(const Tensor& a, Real factor) {
  require_defined(a, "scale");
  std::vector<Real> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * factor;
  Node* pa = a.node().get();
  return make_result(a.shape(), std::move(out), {&a}, [pa, factor](Node& self) {
    auto& g = pa->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
  });
}

Tensor add_scalar(const Tensor& a, Real value) {
  require_defined(a, "add_scalar");
  std::vector<Real> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + value;
  Node* pa = a.node().get();
  return make_result(a.shape(), std::move(out), {&a}, [pa](Node& self) {
    auto& g = pa->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor relu(const Tensor& a) {
  require_defined(a, "relu");
  std::vector<Real> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] < 0.0 ? 0.0 : a[i];  // NaN passes through
  Node* pa = a.node().get();
  return make_result(a.shape(), std::move(out), {&a}, [pa](Node& self) {
    auto& g = pa->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (pa->data[i] > 0.0) g[i] += self.grad[i];
    }
  });
}

Tensor sum(const Tensor& a) {
  require_defined(a, "sum");
  Real total = 0.0;
  for (auto v : a.data()) total += v;
  Node* pa = a.node().get();
  return make_result({}, {total}, {&a}, [pa](Node& self) {
    auto& g = pa->grad_buffer();
    for (auto& v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<Real>(a.numel())); }

Tensor average(std::span<const Tensor> tensors) {
  if (tensors.empty()) throw EmptyInputError("average: no tensors");
  for (const auto& t : tensors) require_same_shape(tensors.front(), t, "average");
  const Real inv = 1.0 / static_cast<Real>(tensors.size());
  std::vector<Real> out(tensors.front().numel(), 0.0);
  for (const auto& t : tensors) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += t[i];
  }
  for (auto& v : out) v *= inv;
  std::vector<Node*> ps;
  for (const auto& t : tensors) ps.push_back(t.node().get());
  return make_result(tensors.front().shape(), std::move(out), tensors, [ps, inv](Node& self) {
    for (Node* p : ps) {
      if (!p->requires_grad) continue;
      auto& g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * inv;
    }
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  require_defined(a, "reshape");
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  std::vector<Real> out(a.data().begin(), a.data().end());
  Node* pa = a.node().get();
  auto t = make_result(std::move(shape), std::move(out), {&a}, [pa](Node& self) {
    auto& g = pa->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
  for (auto d : t.shape()) {
    if (d == 0) throw DimensionError("reshape: zero-sized dimension");
  }
  return t;
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw EmptyInputError("concat_rows: no tensors");
  const auto& first = parts.front();
  require_defined(first, "concat_rows");
  if (first.rank() == 0) throw DimensionError("concat_rows: scalars cannot be concatenated");
  Shape tail(first.shape().begin() + 1, first.shape().end());
  std::size_t rows = 0;
  for (const auto& p : parts) {
    require_defined(p, "concat_rows");
    if (p.rank() != first.rank() || !std::equal(tail.begin(), tail.end(), p.shape().begin() + 1)) {
      throw DimensionError("concat_rows: shape mismatch " + shape_str(first.shape()) + " vs " +
                           shape_str(p.shape()));
    }
    rows += p.dim(0);
  }
  std::vector<Real> out;
  out.reserve(rows * shape_numel(tail));
  std::vector<Node*> ps;
  for (const auto& p : parts) {
    out.insert(out.end(), p.data().begin(), p.data().end());
    ps.push_back(p.node().get());
  }
  Shape shape{rows};
  shape.insert(shape.end(), tail.begin(), tail.end());
  return make_result(std::move(shape), std::move(out), parts, [ps](Node& self) {
    std::size_t offset = 0;
    for (Node* p : ps) {
      const auto n = p->data.size();
      if (p->requires_grad) {
        auto& g = p->grad_buffer();
        for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[offset + i];
      }
      offset += n;
    }
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<Real> out(m * n, 0.0);
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, int(m), int(n), int(k), 1.0, a.data().data(), int(k),
              b.data().data(), int(n), 0.0, out.data(), int(n));
  Node* pa = a.node().get();
  Node* pb = b.node().get();
  return make_result({m, n}, std::move(out), {&a, &b}, [pa, pb, m, k, n](Node& self) {
    const Real* G = self.grad.data();
    if (pa->requires_grad) {
      cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, int(m), int(k), int(n), 1.0, G, int(n), pb->data.data(),
                  int(n), 1.0, pa->grad_buffer().data(), int(k));
    }
    if (pb->requires_grad) {
      cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, int(k), int(n), int(m), 1.0, pa->data.data(), int(k), G,
                  int(n), 1.0, pb->grad_buffer().data(), int(n));
    }
  });
}

Tensor conv1d_valid(const Tensor& input, const Tensor& filters, const Tensor& bias) {
  require_rank(input, 2, "conv1d_valid", "input");
  require_rank(filters, 3, "conv1d_valid", "filters");
  const std::size_t len = input.dim(0), depth = input.dim(1);
  const std::size_t nf = filters.dim(0), width = filters.dim(1);
  if (filters.dim(2) != depth) {
    throw DimensionError("conv1d_valid: input " + shape_str(input.shape()) + " vs filters " +
                         shape_str(filters.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != nf)) {
    throw DimensionError("conv1d_valid: bias " + shape_str(bias.shape()) + " for " +
                         std::to_string(nf) + " filters");
  }
  if (len < width) throw SequenceTooShortError(len, width);

  // out[t] = sum_k input[t+k] . filters[:, k]^T, one [steps x depth] by [depth x nf] product per offset k.
  const std::size_t steps = len - width + 1;
  const std::size_t span_len = width * depth;
  std::vector<Real> out(steps * nf, 0.0);
  if (bias.defined()) {
    for (std::size_t t = 0; t < steps; ++t) std::copy(bias.data().begin(), bias.data().end(), out.begin() + t * nf);
  }
  for (std::size_t k = 0; k < width; ++k) {
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, int(steps), int(nf), int(depth), 1.0,
                input.data().data() + k * depth, int(depth), filters.data().data() + k * depth, int(span_len), 1.0,
                out.data(), int(nf));
  }

  Node* px = input.node().get();
  Node* pw = filters.node().get();
  Node* pb = bias.defined() ? bias.node().get() : nullptr;
  auto bw = [px, pw, pb, steps, nf, depth, width, span_len](Node& self) {
    const Real* G = self.grad.data();
    if (px->requires_grad) {
      Real* gx = px->grad_buffer().data();
      for (std::size_t k = 0; k < width; ++k) {
        cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, int(steps), int(depth), int(nf), 1.0, G, int(nf),
                    pw->data.data() + k * depth, int(span_len), 1.0, gx + k * depth, int(depth));
      }
    }
    if (pw->requires_grad) {
      Real* gw = pw->grad_buffer().data();
      for (std::size_t k = 0; k < width; ++k) {
        cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, int(nf), int(depth), int(steps), 1.0, G, int(nf),
                    px->data.data() + k * depth, int(depth), 1.0, gw + k * depth, int(span_len));
      }
    }
    if (pb && pb->requires_grad) {
      auto& gb = pb->grad_buffer();
      for (std::size_t t = 0; t < steps; ++t) {
        for (std::size_t f = 0; f < nf; ++f) gb[f] += G[t * nf + f];
      }
    }
  };
  if (bias.defined()) return make_result({steps, nf}, std::move(out), {&input, &filters, &bias}, bw);
  return make_result({steps, nf}, std::move(out), {&input, &filters}, bw);
}

Tensor gather_rows(const Tensor& table, std::span<const std::int32_t> ids,
                   std::optional<std::size_t> pinned_row) {
  require_rank(table, 2, "gather_rows", "table");
  if (ids.empty()) throw EmptyInputError("gather_rows: empty id list");
  const std::size_t vocab = table.dim(0), width = table.dim(1);
  std::vector<Real> out(ids.size() * width);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const auto id = ids[r];
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw OutOfVocabularyError("token id " + std::to_string(id) + " outside vocabulary of size " +
                                 std::to_string(vocab));
    }
    std::copy_n(table.data().data() + static_cast<std::size_t>(id) * width, width,
                out.data() + r * width);
  }
  Node* pt = table.node().get();
  std::vector<std::int32_t> rows(ids.begin(), ids.end());
  return make_result({ids.size(), width}, std::move(out), {&table},
                     [pt, rows = std::move(rows), width, pinned_row](Node& self) {
                       auto& g = pt->grad_buffer();
                       for (std::size_t r = 0; r < rows.size(); ++r) {
                         const auto id = static_cast<std::size_t>(rows[r]);
                         if (pinned_row && *pinned_row == id) continue;
                         for (std::size_t d = 0; d < width; ++d) {
                           g[id * width + d] += self.grad[r * width + d];
                         }
                       }
                     });
}

Tensor squash(const Tensor& s, Real epsilon) {
  require_defined(s, "squash");
  if (s.rank() == 0) throw DimensionError("squash: needs at least one axis");
  const std::size_t d = s.shape().back();
  const std::size_t rows = s.numel() / d;
  std::vector<Real> out(s.numel());
  std::vector<Real> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* x = s.data().data() + r * d;
    Real n2 = 0.0;
    for (std::size_t i = 0; i < d; ++i) n2 += x[i] * x[i];
    const Real n = std::sqrt(n2);
    norms[r] = n;
    const Real factor = n2 / (1.0 + n2) / (n + epsilon);
    for (std::size_t i = 0; i < d; ++i) out[r * d + i] = factor * x[i];
  }
  Node* ps = s.node().get();
  return make_result(s.shape(), std::move(out), {&s},
                     [ps, d, rows, epsilon, norms = std::move(norms)](Node& self) {
                       auto& g = ps->grad_buffer();
                       for (std::size_t r = 0; r < rows; ++r) {
                         const Real* x = ps->data.data() + r * d;
                         const Real* go = self.grad.data() + r * d;
                         const Real n = norms[r];
                         const Real n2 = n * n;
                         const Real a = 1.0 / ((1.0 + n2) * (n + epsilon));
                         const Real factor = n2 * a;
                         // d(factor)/dn divided by n, finite at n = 0.
                         const Real dfactor_over_n = a * (2.0 / (1.0 + n2) - n / (n + epsilon));
                         Real proj = 0.0;
                         for (std::size_t i = 0; i < d; ++i) proj += go[i] * x[i];
                         for (std::size_t i = 0; i < d; ++i) {
                           g[r * d + i] += factor * go[i] + proj * dfactor_over_n * x[i];
                         }
                       }
                     });
}

Tensor vector_length(const Tensor& a) {
  require_defined(a, "vector_length");
  if (a.rank() == 0) throw DimensionError("vector_length: needs at least one axis");
  const std::size_t d = a.shape().back();
  const std::size_t rows = a.numel() / d;
  std::vector<Real> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    Real n2 = 0.0;
    for (std::size_t i = 0; i < d; ++i) n2 += a[r * d + i] * a[r * d + i];
    out[r] = std::sqrt(n2);
  }
  Node* pa = a.node().get();
  return make_result(drop_last(a.shape()), std::move(out), {&a}, [pa, d, rows](Node& self) {
    auto& g = pa->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      const Real len = self.data[r];
      if (len == 0.0) continue;
      const Real k = self.grad[r] / len;
      for (std::size_t i = 0; i < d; ++i) g[r * d + i] += k * pa->data[r * d + i];
    }
  });
}

Tensor softmax(const Tensor& a) {
  require_defined(a, "softmax");
  if (a.rank() == 0) throw DimensionError("softmax: needs at least one axis");
  const std::size_t d = a.shape().back();
  const std::size_t rows = a.numel() / d;
  std::vector<Real> out(a.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* x = a.data().data() + r * d;
    Real* y = out.data() + r * d;
    const Real mx = *std::max_element(x, x + d);
    Real total = 0.0;
    for (std::size_t i = 0; i < d; ++i) total += (y[i] = std::exp(x[i] - mx));
    for (std::size_t i = 0; i < d; ++i) y[i] /= total;
  }
  Node* pa = a.node().get();
  return make_result(a.shape(), std::move(out), {&a}, [pa, d, rows](Node& self) {
    auto& g = pa->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      const Real* y = self.data.data() + r * d;
      const Real* go = self.grad.data() + r * d;
      Real dot = 0.0;
      for (std::size_t i = 0; i < d; ++i) dot += go[i] * y[i];
      for (std::size_t i = 0; i < d; ++i) g[r * d + i] += y[i] * (go[i] - dot);
    }
  });
}

Tensor capsule_transform(const Tensor& u, const Tensor& weights) {
  require_rank(u, 3, "capsule_transform", "capsules");
  require_rank(weights, 4, "capsule_transform", "weights");
  const std::size_t n = u.dim(0), m = u.dim(1), din = u.dim(2);
  const std::size_t j_count = weights.dim(1), dout = weights.dim(2);
  if (weights.dim(0) != m || weights.dim(3) != din) {
    throw DimensionError("capsule_transform: capsules " + shape_str(u.shape()) + " vs weights " +
                         shape_str(weights.shape()));
  }
  // Per input map b: out[:, b] = u[:, b] . W[b]^T, a strided [n x din] by [din x J*dout] product.
  const std::size_t rows = j_count * dout;
  std::vector<Real> out(n * m * rows);
  for (std::size_t b = 0; b < m; ++b) {
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, int(n), int(rows), int(din), 1.0, u.data().data() + b * din,
                int(m * din), weights.data().data() + b * rows * din, int(din), 0.0, out.data() + b * rows,
                int(m * rows));
  }
  Node* pu = u.node().get();
  Node* pw = weights.node().get();
  return make_result({n, m, j_count, dout}, std::move(out), {&u, &weights}, [pu, pw, n, m, din, rows](Node& self) {
    const Real* G = self.grad.data();
    for (std::size_t b = 0; b < m; ++b) {
      if (pu->requires_grad) {
        cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, int(n), int(din), int(rows), 1.0, G + b * rows,
                    int(m * rows), pw->data.data() + b * rows * din, int(din), 1.0, pu->grad_buffer().data() + b * din,
                    int(m * din));
      }
      if (pw->requires_grad) {
        cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, int(rows), int(din), int(n), 1.0, G + b * rows,
                    int(m * rows), pu->data.data() + b * din, int(m * din), 1.0, pw->grad_buffer().data() + b * rows * din,
                    int(din));
      }
    }
  });
}

Tensor unfold_windows(const Tensor& x, std::size_t window) {
  require_defined(x, "unfold_windows");
  if (x.rank() == 0) throw DimensionError("unfold_windows: needs at least one axis");
  if (window == 0) throw InvalidArgument("unfold_windows: window must be positive");
  const std::size_t len = x.dim(0);
  if (len < window) throw SequenceTooShortError(len, window);
  const std::size_t row = x.numel() / len;
  const std::size_t steps = len - window + 1;
  std::vector<Real> out(steps * window * row);
  for (std::size_t p = 0; p < steps; ++p) {
    std::copy_n(x.data().data() + p * row, window * row, out.data() + p * window * row);
  }
  Shape shape{steps, window};
  shape.insert(shape.end(), x.shape().begin() + 1, x.shape().end());
  Node* px = x.node().get();
  return make_result(std::move(shape), std::move(out), {&x}, [px, steps, window, row](Node& self) {
    auto& g = px->grad_buffer();
    for (std::size_t p = 0; p < steps; ++p) {
      const Real* go = self.grad.data() + p * window * row;
      Real* gx = g.data() + p * row;
      for (std::size_t i = 0; i < window * row; ++i) gx[i] += go[i];
    }
  });
}

namespace {

// Rows of [J x D] predictions; input i of position p reads row p * stride + i.
struct PredictionRows {
  std::size_t rows, nj, d;
};

PredictionRows prediction_rows(const Tensor& predictions, const char* op) {
  require_defined(predictions, op);
  if (predictions.rank() < 3) {
    throw DimensionError(std::string(op) + ": predictions need at least 3 axes, got " +
                         shape_str(predictions.shape()));
  }
  const std::size_t r = predictions.rank();
  const std::size_t nj = predictions.dim(r - 2), d = predictions.dim(r - 1);
  return {predictions.numel() / (nj * d), nj, d};
}

void check_stride(const PredictionRows& rows, std::size_t np, std::size_t ni, std::size_t stride, const char* op) {
  if (stride == 0 || (np - 1) * stride + ni > rows.rows) {
    throw DimensionError(std::string(op) + ": " + std::to_string(np) + " positions of " + std::to_string(ni) +
                         " inputs at stride " + std::to_string(stride) + " overrun " + std::to_string(rows.rows) +
                         " prediction rows");
  }
}

}  // namespace

// Row kernels for the routing ops; d is the capsule dimension.
inline void axpy_row(Real a, const Real* __restrict x, Real* __restrict y, std::size_t d) {
  for (std::size_t k = 0; k < d; ++k) y[k] += a * x[k];
}

inline Real dot_row(const Real* __restrict x, const Real* __restrict y, std::size_t d) {
  Real acc = 0.0;
  for (std::size_t k = 0; k < d; ++k) acc += x[k] * y[k];
  return acc;
}

Tensor coupled_sum(const Tensor& couplings, const Tensor& predictions, std::size_t stride) {
  require_rank(couplings, 3, "coupled_sum", "couplings");
  const auto rows = prediction_rows(predictions, "coupled_sum");
  const std::size_t np = couplings.dim(0), ni = couplings.dim(1), nj = rows.nj, d = rows.d;
  if (couplings.dim(2) != nj) {
    throw DimensionError("coupled_sum: couplings " + shape_str(couplings.shape()) + " vs predictions " +
                         shape_str(predictions.shape()));
  }
  check_stride(rows, np, ni, stride, "coupled_sum");
  std::vector<Real> out(np * nj * d, 0.0);
  const Real* C = couplings.data().data();
  const Real* U = predictions.data().data();
  for (std::size_t p = 0; p < np; ++p) {
    Real* __restrict op = out.data() + p * nj * d;
    for (std::size_t i = 0; i < ni; ++i) {
      const Real* __restrict c = C + (p * ni + i) * nj;
      const Real* __restrict u = U + (p * stride + i) * nj * d;
      for (std::size_t j = 0; j < nj; ++j) axpy_row(c[j], u + j * d, op + j * d, d);
    }
  }
  Node* pc = couplings.node().get();
  Node* pu = predictions.node().get();
  return make_result({np, nj, d}, std::move(out), {&couplings, &predictions},
                     [pc, pu, np, ni, nj, d, stride](Node& self) {
                       Real* gc = pc->requires_grad ? pc->grad_buffer().data() : nullptr;
                       Real* gu = pu->requires_grad ? pu->grad_buffer().data() : nullptr;
                       const Real* C = pc->data.data();
                       const Real* U = pu->data.data();
                       for (std::size_t p = 0; p < np; ++p) {
                         const Real* go = self.grad.data() + p * nj * d;
                         for (std::size_t i = 0; i < ni; ++i) {
                           const std::size_t cbase = (p * ni + i) * nj;
                           const std::size_t ubase = (p * stride + i) * nj * d;
                           if (gc) {
                             for (std::size_t j = 0; j < nj; ++j) gc[cbase + j] += dot_row(go + j * d, U + ubase + j * d, d);
                           }
                           if (gu) {
                             for (std::size_t j = 0; j < nj; ++j) axpy_row(C[cbase + j], go + j * d, gu + ubase + j * d, d);
                           }
                         }
                       }
                     });
}

Tensor coupled_sum(const Tensor& couplings, const Tensor& predictions) {
  require_rank(predictions, 4, "coupled_sum", "predictions");
  if (couplings.shape() != Shape{predictions.dim(0), predictions.dim(1), predictions.dim(2)}) {
    throw DimensionError("coupled_sum: couplings " + shape_str(couplings.shape()) + " vs predictions " +
                         shape_str(predictions.shape()));
  }
  return coupled_sum(couplings, predictions, predictions.dim(1));
}

Tensor agreement(const Tensor& predictions, const Tensor& outputs, std::size_t inputs, std::size_t stride) {
  require_rank(outputs, 3, "agreement", "outputs");
  const auto rows = prediction_rows(predictions, "agreement");
  const std::size_t np = outputs.dim(0), ni = inputs, nj = rows.nj, d = rows.d;
  if (outputs.dim(1) != nj || outputs.dim(2) != d || ni == 0) {
    throw DimensionError("agreement: predictions " + shape_str(predictions.shape()) + " vs outputs " +
                         shape_str(outputs.shape()));
  }
  check_stride(rows, np, ni, stride, "agreement");
  std::vector<Real> out(np * ni * nj);
  const Real* U = predictions.data().data();
  const Real* V = outputs.data().data();
  for (std::size_t p = 0; p < np; ++p) {
    for (std::size_t i = 0; i < ni; ++i) {
      const Real* u = U + (p * stride + i) * nj * d;
      for (std::size_t j = 0; j < nj; ++j) out[(p * ni + i) * nj + j] = dot_row(u + j * d, V + (p * nj + j) * d, d);
    }
  }
  Node* pu = predictions.node().get();
  Node* pv = outputs.node().get();
  return make_result({np, ni, nj}, std::move(out), {&predictions, &outputs},
                     [pu, pv, np, ni, nj, d, stride](Node& self) {
                       Real* gu = pu->requires_grad ? pu->grad_buffer().data() : nullptr;
                       Real* gv = pv->requires_grad ? pv->grad_buffer().data() : nullptr;
                       for (std::size_t p = 0; p < np; ++p) {
                         for (std::size_t i = 0; i < ni; ++i) {
                           const std::size_t ubase = (p * stride + i) * nj * d;
                           for (std::size_t j = 0; j < nj; ++j) {
                             const Real gval = self.grad[(p * ni + i) * nj + j];
                             if (gval == 0.0) continue;
                             if (gu) axpy_row(gval, pv->data.data() + (p * nj + j) * d, gu + ubase + j * d, d);
                             if (gv) axpy_row(gval, pu->data.data() + ubase + j * d, gv + (p * nj + j) * d, d);
                           }
                         }
                       }
                     });
}

Tensor agreement(const Tensor& predictions, const Tensor& outputs) {
  require_rank(predictions, 4, "agreement", "predictions");
  require_rank(outputs, 3, "agreement", "outputs");
  if (outputs.shape() != Shape{predictions.dim(0), predictions.dim(2), predictions.dim(3)}) {
    throw DimensionError("agreement: predictions " + shape_str(predictions.shape()) + " vs outputs " +
                         shape_str(outputs.shape()));
  }
  return agreement(predictions, outputs, predictions.dim(1), predictions.dim(1));
}

}  // namespace capsnews
