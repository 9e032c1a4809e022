#include "doctest.h"

#include <cmath>
#include <string>

#include "capsnews/errors.hpp"
#include "capsnews/optimizer.hpp"

using namespace capsnews;

TEST_SUITE("optimizer") {
  TEST_CASE("positive gradient decreases the parameter") {
    auto p = Tensor::from({1}, {1.0}, true);
    Adam adam({p}, {.learning_rate = 0.1});
    p.mutable_grad()[0] = 1.0;
    adam.step();
    CHECK(p[0] < 1.0);
    // First bias-corrected step moves by exactly lr * g / (|g| + eps).
    CHECK(p[0] == doctest::Approx(1.0 - 0.1 / (1.0 + 1e-8)).epsilon(1e-12));
    CHECK(adam.step_count() == 1);
  }

  TEST_CASE("zero gradient leaves the parameter unchanged") {
    auto p = Tensor::from({2}, {0.25, -4.0}, true);
    Adam adam({p});
    p.zero_grad();
    adam.step();
    CHECK(p[0] == 0.25);
    CHECK(p[1] == -4.0);
  }

  TEST_CASE("grads are zeroed after a step and the count increases") {
    auto p = Tensor::from({1}, {2.0}, true);
    Adam adam({p});
    for (int i = 1; i <= 3; ++i) {
      backward(sum(mul(p, p)));
      adam.step();
      CHECK(p.grad()[0] == 0.0);
      CHECK(adam.step_count() == std::uint64_t(i));
    }
  }

  TEST_CASE("quadratic bowl converges") {
    auto p = Tensor::from({1}, {0.0}, true);
    Adam adam({p}, {.learning_rate = 0.05});
    for (int i = 0; i < 200; ++i) {
      auto d = add_scalar(p, -3.0);
      backward(sum(mul(d, d)));
      adam.step();
    }
    CHECK(std::abs(p[0] - 3.0) < 0.01);
  }

  TEST_CASE("missing gradient names the parameter") {
    auto a = Tensor::from({1}, {1.0}, true);
    auto b = Tensor::from({1}, {1.0}, true);
    b.set_name("capsule.conv.weight");
    Adam adam({a, b});
    a.mutable_grad()[0] = 1.0;
    try {
      adam.step();
      FAIL("expected UninitializedGradientError");
    } catch (const UninitializedGradientError& e) {
      CHECK(std::string(e.what()).find("capsule.conv.weight") != std::string::npos);
    }
    CHECK(a[0] == 1.0);
    CHECK(adam.step_count() == 0);
  }

  TEST_CASE("invalid options") {
    auto p = Tensor::from({1}, {1.0}, true);
    CHECK_THROWS_AS(Adam({p}, {.learning_rate = 0.0}), InvalidArgument);
    CHECK_THROWS_AS(Adam({p}, {.beta1 = 1.0}), InvalidArgument);
  }
}
