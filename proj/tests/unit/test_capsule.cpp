#include "doctest.h"

#include <cmath>
#include <random>

#include "capsnews/capsule.hpp"
#include "capsnews/errors.hpp"
#include "support/support.hpp"

using namespace capsnews;
using capsnews::testing::max_gradient_error;
using capsnews::testing::random_tensor;

namespace {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

double norm(const Vec& v) {
  double s = 0;
  for (auto x : v) s += x * x;
  return std::sqrt(s);
}

Vec ref_squash(const Vec& s) {
  const double n = norm(s);
  Vec out(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = (n * n / (1 + n * n)) * s[i] / (n + 1e-9);
  return out;
}

// Plain-loop routing over u[i][j] vectors; returns outputs, final couplings
// and the agreement matrix used after every non-final iteration.
struct RefRouting {
  Mat v;
  Mat c;
  std::vector<Mat> couplings;
  std::vector<Mat> agreements;
};

RefRouting ref_route(const std::vector<std::vector<Vec>>& u, std::size_t r) {
  const std::size_t I = u.size(), J = u[0].size(), D = u[0][0].size();
  Mat b(I, Vec(J, 0.0));
  RefRouting out;
  for (std::size_t it = 0; it < r; ++it) {
    Mat c(I, Vec(J));
    for (std::size_t i = 0; i < I; ++i) {
      double mx = *std::max_element(b[i].begin(), b[i].end()), z = 0;
      for (std::size_t j = 0; j < J; ++j) z += std::exp(b[i][j] - mx);
      for (std::size_t j = 0; j < J; ++j) c[i][j] = std::exp(b[i][j] - mx) / z;
    }
    Mat v(J, Vec(D, 0.0));
    for (std::size_t j = 0; j < J; ++j) {
      for (std::size_t i = 0; i < I; ++i)
        for (std::size_t d = 0; d < D; ++d) v[j][d] += c[i][j] * u[i][j][d];
      v[j] = ref_squash(v[j]);
    }
    out.couplings.push_back(c);
    out.v = v;
    out.c = c;
    if (it + 1 == r) break;
    Mat a(I, Vec(J, 0.0));
    for (std::size_t i = 0; i < I; ++i)
      for (std::size_t j = 0; j < J; ++j)
        for (std::size_t d = 0; d < D; ++d) a[i][j] += u[i][j][d] * v[j][d];
    for (std::size_t i = 0; i < I; ++i)
      for (std::size_t j = 0; j < J; ++j) b[i][j] += a[i][j];
    out.agreements.push_back(a);
  }
  return out;
}

std::vector<std::vector<Vec>> unpack(const Tensor& p) {
  const std::size_t I = p.dim(0), J = p.dim(1), D = p.dim(2);
  std::vector<std::vector<Vec>> u(I, std::vector<Vec>(J, Vec(D)));
  for (std::size_t i = 0; i < I; ++i)
    for (std::size_t j = 0; j < J; ++j)
      for (std::size_t d = 0; d < D; ++d) u[i][j][d] = p[(i * J + j) * D + d];
  return u;
}

void check_rows_sum_to_one(const Tensor& c) {
  const std::size_t J = c.shape().back();
  for (std::size_t r = 0; r < c.numel() / J; ++r) {
    double s = 0;
    for (std::size_t j = 0; j < J; ++j) {
      CHECK(c[r * J + j] >= 0.0);
      s += c[r * J + j];
    }
    CHECK(std::abs(s - 1.0) < 1e-6);
  }
}

}  // namespace

TEST_SUITE("capsule") {
  TEST_CASE("squash examples") {
    auto z = squash(Tensor::zeros({3}));
    for (auto x : z.data()) CHECK(x == 0.0);
    auto v = squash(Tensor::from({2}, {3, 4}));
    CHECK(v[0] == doctest::Approx(0.576923).epsilon(1e-6));
    CHECK(v[1] == doctest::Approx(0.769231).epsilon(1e-6));
    CHECK(v[0] == doctest::Approx(25.0 / 26.0 * 3.0 / 5.0).epsilon(1e-9));
    auto big = vector_length(squash(Tensor::from({2}, {6e5, 8e5})));
    CHECK(std::abs(big.item() - 1.0) < 1e-6);
    CHECK(big.item() < 1.0);
  }

  TEST_CASE("squash preserves direction and is monotone in length") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 200; ++trial) {
      auto s = random_tensor({5}, rng, -3, 3, false);
      auto v = squash(s);
      double dot = 0, ns = 0, nv = 0;
      for (std::size_t i = 0; i < 5; ++i) {
        dot += s[i] * v[i];
        ns += s[i] * s[i];
        nv += v[i] * v[i];
      }
      CHECK(std::abs(dot / std::sqrt(ns * nv) - 1.0) < 1e-6);
      CHECK(std::sqrt(nv) < 1.0);
    }
    double prev = -1;
    for (double n = 0.01; n < 50; n *= 1.3) {
      const double len = vector_length(squash(Tensor::from({2}, {n, 0}))).item();
      CHECK(len > prev);
      prev = len;
    }
  }

  TEST_CASE("routing with one iteration couples uniformly") {
    std::mt19937_64 rng(12);
    auto u = random_tensor({4, 3, 2}, rng, -1, 1, false);
    auto r = route(u, {.iterations = 1});
    CHECK(r.couplings.shape() == Shape{4, 3});
    for (auto c : r.couplings.data()) CHECK(c == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    auto ref = ref_route(unpack(u), 1);
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t d = 0; d < 2; ++d) CHECK(r.outputs[j * 2 + d] == doctest::Approx(ref.v[j][d]).epsilon(1e-12));
  }

  TEST_CASE("identical predictions keep couplings uniform") {
    // Both inputs predict the same vector for both outputs.
    auto u = Tensor::from({2, 2, 3}, {0.3, -0.2, 0.5, 0.3, -0.2, 0.5, 0.3, -0.2, 0.5, 0.3, -0.2, 0.5});
    auto r = route(u, {.iterations = 3});
    for (auto c : r.couplings.data()) CHECK(c == doctest::Approx(0.5).epsilon(1e-12));
  }

  TEST_CASE("agreeing input shifts its coupling towards the agreeing output") {
    // Input 0 votes strongly along +x for output 0 and weakly elsewhere.
    auto u = Tensor::from({2, 2, 2}, {2.0, 0.0, 0.1, 0.1, 0.2, 0.1, 0.1, 1.5});
    auto r = route(u, {.iterations = 3});
    auto ref = ref_route(unpack(u), 3);
    CHECK(ref.c[0][0] > ref.c[0][1]);
    CHECK(r.couplings[0] > r.couplings[1]);
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 2; ++j) CHECK(r.couplings[i * 2 + j] == doctest::Approx(ref.c[i][j]).epsilon(1e-12));
  }

  TEST_CASE("routing matches the plain-loop recurrence") {
    std::mt19937_64 rng(13);
    for (std::size_t r : {1, 2, 3, 5}) {
      auto u = random_tensor({5, 4, 3}, rng, -1, 1, false);
      auto got = route(u, {.iterations = r, .record_history = true});
      auto ref = ref_route(unpack(u), r);
      REQUIRE(got.history.size() == r);
      for (std::size_t j = 0; j < 4; ++j)
        for (std::size_t d = 0; d < 3; ++d) CHECK(got.outputs[j * 3 + d] == doctest::Approx(ref.v[j][d]).epsilon(1e-10));
      for (std::size_t t = 0; t < r; ++t)
        for (std::size_t i = 0; i < 5; ++i)
          for (std::size_t j = 0; j < 4; ++j)
            CHECK(got.history[t][i * 4 + j] == doctest::Approx(ref.couplings[t][i][j]).epsilon(1e-10));
    }
  }

  TEST_CASE("coupling rows are distributions at every iteration") {
    std::mt19937_64 rng(14);
    auto u = random_tensor({3, 6, 5, 4}, rng, -2, 2, false);
    auto r = route(u, {.iterations = 4, .record_history = true});
    CHECK(r.outputs.shape() == Shape{3, 5, 4});
    for (const auto& c : r.history) check_rows_sum_to_one(c);
  }

  TEST_CASE("the best-agreeing output never loses coupling on the next iteration") {
    std::mt19937_64 rng(15);
    for (int trial = 0; trial < 50; ++trial) {
      auto u = random_tensor({2, 2, 3}, rng, -1, 1, false);
      auto ref = ref_route(unpack(u), 3);
      auto got = route(u, {.iterations = 3, .record_history = true});
      for (std::size_t t = 0; t + 1 < 3; ++t) {
        for (std::size_t i = 0; i < 2; ++i) {
          const std::size_t j = ref.agreements[t][i][0] >= ref.agreements[t][i][1] ? 0 : 1;
          CHECK(got.history[t + 1][i * 2 + j] >= got.history[t][i * 2 + j] - 1e-15);
        }
      }
    }
  }

  TEST_CASE("routing needs at least one iteration") {
    CHECK_THROWS_AS(route(Tensor::zeros({2, 2, 2}), {.iterations = 0}), InvalidArgument);
  }

  TEST_CASE("windowed routing equals routing the unfolded windows") {
    std::mt19937_64 rng(16);
    const std::size_t T = 6, M = 2, J = 3, D = 4, w = 3, P = T - w + 1;
    auto preds = random_tensor({T, M, J, D}, rng, -1, 1, false);
    auto a = route_windows(preds, w, {.iterations = 3});
    auto b = route(reshape(unfold_windows(preds, w), {P, w * M, J, D}), {.iterations = 3});
    REQUIRE(a.outputs.shape() == b.outputs.shape());
    for (std::size_t i = 0; i < a.outputs.numel(); ++i) CHECK(a.outputs[i] == doctest::Approx(b.outputs[i]).epsilon(1e-13));
    for (std::size_t i = 0; i < a.couplings.numel(); ++i)
      CHECK(a.couplings[i] == doctest::Approx(b.couplings[i]).epsilon(1e-13));
    CHECK_THROWS_AS(route_windows(preds, T + 1, {}), SequenceTooShortError);
  }

  TEST_CASE("routing gradients with and without stop-gradient") {
    std::mt19937_64 rng(17);
    auto u = random_tensor({2, 4, 3, 2}, rng);
    auto w = random_tensor({2, 3, 2}, rng, -1, 1, false);
    CHECK(max_gradient_error({u}, [&] { return sum(mul(route(u, {.iterations = 3}).outputs, w)); }) < 1e-4);
    // Detached logits change gradients only, never values.
    auto full = route(u, {.iterations = 3});
    auto detached = route(u, {.iterations = 3, .stop_gradient = true});
    for (std::size_t i = 0; i < full.outputs.numel(); ++i) CHECK(full.outputs[i] == detached.outputs[i]);
    // With one iteration there are no logits to detach.
    CHECK(max_gradient_error({u}, [&] { return sum(mul(route(u, {.iterations = 1, .stop_gradient = true}).outputs, w)); }) <
          1e-4);
    auto p = random_tensor({5, 2, 3, 2}, rng);
    auto w2 = random_tensor({3, 3, 2}, rng, -1, 1, false);
    CHECK(max_gradient_error({p}, [&] { return sum(mul(route_windows(p, 3, {.iterations = 2}).outputs, w2)); }) < 1e-4);
  }

  TEST_CASE("margin loss examples") {
    const MarginLossParams d;
    CHECK(margin_loss(Tensor::from({2}, {0.9, 0.1}), one_hot(0, 2), d).item() == doctest::Approx(0.0));
    CHECK(margin_loss(Tensor::from({2}, {0.0, 0.0}), one_hot(0, 2), d).item() == doctest::Approx(0.81).epsilon(1e-12));
    CHECK(margin_loss(Tensor::from({2}, {0.5, 0.5}), one_hot(0, 2), d).item() == doctest::Approx(0.24).epsilon(1e-12));
  }

  TEST_CASE("margin loss is zero exactly when both hinges are inactive") {
    const MarginLossParams d;
    std::mt19937_64 rng(18);
    std::uniform_real_distribution<double> u(0, 0.999);
    for (int i = 0; i < 500; ++i) {
      const double a = u(rng), b = u(rng), c = u(rng);
      const double loss = margin_loss(Tensor::from({3}, {a, b, c}), one_hot(1, 3), d).item();
      CHECK(loss >= 0.0);
      CHECK((loss == 0.0) == (b >= d.m_plus && a <= d.m_minus && c <= d.m_minus));
    }
  }

  TEST_CASE("margin loss rejects bad targets and params") {
    const MarginLossParams d;
    CHECK_THROWS_AS(margin_loss(Tensor::from({2}, {0.5, 0.5}), Tensor::from({2}, {1, 1}), d), LabelError);
    CHECK_THROWS_AS(margin_loss(Tensor::from({2}, {0.5, 0.5}), Tensor::from({2}, {0, 0}), d), LabelError);
    CHECK_THROWS_AS(one_hot(2, 2), LabelError);
    CHECK_THROWS_AS((MarginLossParams{0.5, 0.6, 0.5}.validate()), ConfigError);
  }

  TEST_CASE("primary capsules: shape, zero input, bounded lengths") {
    Rng rng(19);
    PrimaryCapsuleLayer layer("capsule.primary", 32, 8, 8, rng);
    auto zero = layer.forward(Tensor::zeros({40, 32}));
    CHECK(zero.shape() == Shape{40, 8, 8});
    for (auto x : zero.data()) CHECK(x == 0.0);
    std::mt19937_64 g(20);
    auto lens = vector_length(layer.forward(random_tensor({40, 32}, g, 0, 3, false)));
    for (auto l : lens.data()) CHECK(l < 1.0);
    CHECK_THROWS_AS(layer.forward(Tensor::zeros({40, 31})), DimensionError);
    for (const auto& p : layer.parameters()) CHECK(p.name().rfind("capsule.primary.", 0) == 0);
  }

  TEST_CASE("convolutional capsules: positions, couplings, short input") {
    Rng rng(21);
    ConvCapsuleLayer layer("capsule.conv", 3, 8, 8, 8, 16, {.iterations = 3}, rng);
    std::mt19937_64 g(22);
    auto caps = squash(random_tensor({10, 8, 8}, g, -1, 1, false));
    auto r = layer.forward_with_routing(caps);
    CHECK(r.outputs.shape() == Shape{8, 8, 16});
    CHECK(r.couplings.shape() == Shape{8, 24, 8});
    check_rows_sum_to_one(r.couplings);
    CHECK_THROWS_AS(layer.forward(squash(random_tensor({2, 8, 8}, g, -1, 1, false))), SequenceTooShortError);
  }

  TEST_CASE("single-capsule convolutional layer reduces to squash(W u)") {
    Rng rng(23);
    ConvCapsuleLayer layer("capsule.conv", 1, 1, 3, 1, 2, {.iterations = 1}, rng);
    std::mt19937_64 g(24);
    auto caps = random_tensor({4, 1, 3}, g, -1, 1, false);
    auto out = layer.forward(caps);
    REQUIRE(out.shape() == Shape{4, 1, 2});
    const auto& W = layer.parameters()[0];  // [1 x 1 x 2 x 3]
    for (std::size_t t = 0; t < 4; ++t) {
      Vec s(2, 0.0);
      for (std::size_t o = 0; o < 2; ++o)
        for (std::size_t i = 0; i < 3; ++i) s[o] += W[o * 3 + i] * caps[t * 3 + i];
      const Vec v = ref_squash(s);
      for (std::size_t o = 0; o < 2; ++o) CHECK(out[t * 2 + o] == doctest::Approx(v[o]).epsilon(1e-12));
    }
  }

  TEST_CASE("class capsules give one capsule per class") {
    std::mt19937_64 g(25);
    for (std::size_t C : {2, 6}) {
      Rng rng(26);
      ClassCapsuleLayer layer("capsule.class", 8, 16, C, 16, 0, {.iterations = 3}, rng);
      auto out = layer.forward(squash(random_tensor({5, 8, 16}, g, -1, 1, false)));
      CHECK(out.shape() == Shape{C, 16});
      const auto lengths = vector_length(out);
      for (auto l : lengths.data()) {
        CHECK(l >= 0.0);
        CHECK(l < 1.0);
      }
    }
    Rng rng(27);
    ClassCapsuleLayer layer("capsule.class", 2, 3, 2, 4, 0, {}, rng);
    CHECK_THROWS_AS(layer.forward(Tensor()), EmptyInputError);
    CHECK_THROWS_AS(layer.forward(Tensor::zeros({3, 2, 3}), Tensor::zeros({5})), DimensionError);
  }

  TEST_CASE("class capsules with an auxiliary capsule") {
    Rng rng(28);
    ClassCapsuleLayer layer("capsule.class", 2, 3, 6, 4, 5, {.iterations = 2}, rng);
    std::mt19937_64 g(29);
    auto caps = squash(random_tensor({3, 2, 3}, g, -1, 1, false));
    auto r = layer.forward_with_routing(caps, Tensor::from({5}, {0.2, 0.2, 0.2, 0.2, 0.2}));
    CHECK(r.outputs.shape() == Shape{6, 4});
    CHECK(r.couplings.shape() == Shape{7, 6});
    CHECK_THROWS_AS(layer.forward(caps), DimensionError);
  }

  TEST_CASE("layer stack gradient through every parameter") {
    Rng rng(30);
    NGramConv conv("capsule.b0.conv", 2, 3, 4, rng);
    PrimaryCapsuleLayer primary("capsule.b0.primary", 4, 2, 3, rng);
    ConvCapsuleLayer ccaps("capsule.b0.conv_caps", 2, 2, 3, 2, 3, {.iterations = 2}, rng);
    ClassCapsuleLayer cls("capsule.b0.class", 2, 3, 2, 4, 0, {.iterations = 2}, rng);
    std::mt19937_64 g(31);
    auto x = random_tensor({6, 3}, g);
    std::vector<Tensor> leaves{x};
    for (const Parameterized* l : std::initializer_list<const Parameterized*>{&conv, &primary, &ccaps, &cls})
      leaves.insert(leaves.end(), l->parameters().begin(), l->parameters().end());
    auto loss = [&] {
      const std::vector<Tensor> in{x};
      auto v = cls.forward(ccaps.forward(primary.forward(conv.forward(in))));
      return margin_loss(vector_length(v), one_hot(1, 2), {});
    };
    CHECK(max_gradient_error(leaves, loss) < 1e-4);
  }
}
