#include "doctest.h"

#include <sstream>

#include "capsnews/checkpoint.hpp"
#include "capsnews/errors.hpp"
#include "capsnews/traineval.hpp"
#include "support/models.hpp"
#include "support/support.hpp"

using namespace capsnews;
using namespace capsnews::testing;

namespace {

using Labels = std::vector<std::size_t>;

// Class 0 draws from w0..w4, class 1 from w5..w9, plus shared filler w10..w13.
std::vector<LabeledInput> separable(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<LabeledInput> out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t label = i % 2;
    TokenIds ids;
    const std::size_t len = 4 + rng() % 5;
    for (std::size_t k = 0; k < len; ++k)
      ids.push_back(TokenId(3 + (k % 2 ? 10 + rng() % 4 : label * 5 + rng() % 5)));
    out.push_back({{ids, {}}, label});
  }
  return out;
}

// Zeroes every class-layer transform into class `k`, so its capsule has length 0.
void silence_class(Model& m, std::size_t k) {
  for (auto& p : m.trainable_parameters()) {
    if (p.name().find("classcaps.weight") == std::string::npos) continue;
    const std::size_t maps = p.dim(0), C = p.dim(1), block = p.dim(2) * p.dim(3);
    auto v = p.mutable_data();
    for (std::size_t m2 = 0; m2 < maps; ++m2) std::fill_n(v.begin() + (m2 * C + k) * block, block, 0.0);
  }
}

}  // namespace

TEST_SUITE("traineval") {
  TEST_CASE("accuracy examples") {
    CHECK(accuracy(Labels{1, 0, 1, 0}, Labels{1, 0, 1, 0}) == 1.0);
    CHECK(accuracy(Labels{1, 1, 1, 1}, Labels{1, 0, 1, 0}) == 0.5);
    // TP=2, TN=2, FP=1, FN=0
    const Labels pred{1, 1, 0, 0, 1}, gold{1, 1, 0, 0, 0};
    CHECK(accuracy(pred, gold) == doctest::Approx(0.8));
    auto r = make_report(pred, gold, 2);
    REQUIRE(r.binary);
    CHECK(r.binary->tp == 2);
    CHECK(r.binary->tn == 2);
    CHECK(r.binary->fp == 1);
    CHECK(r.binary->fn == 0);
    CHECK(r.accuracy == accuracy(pred, gold));
  }

  TEST_CASE("accuracy errors") {
    CHECK_THROWS_AS(accuracy(Labels{}, Labels{}), EmptyInputError);
    CHECK_THROWS_AS(accuracy(Labels{1}, Labels{1, 0}), AlignmentError);
    CHECK_THROWS_AS(confusion_matrix(Labels{0, 6}, Labels{0, 1}, 6), LabelError);
  }

  TEST_CASE("confusion matrix invariants") {
    const Labels perfect{0, 1, 2, 2, 1};
    auto m = confusion_matrix(perfect, perfect, 3);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j)
        if (i != j) CHECK(m[i][j] == 0);
    auto single = confusion_matrix(Labels{5}, Labels{2}, 6);
    std::uint64_t total = 0;
    for (const auto& row : single)
      for (auto c : row) total += c;
    CHECK(total == 1);
    CHECK(single[2][5] == 1);

    std::mt19937_64 rng(50);
    Labels pred(200), gold(200);
    for (std::size_t i = 0; i < 200; ++i) {
      pred[i] = rng() % 6;
      gold[i] = rng() % 6;
    }
    auto r = make_report(pred, gold, 6);
    std::uint64_t sum = 0, trace = 0;
    for (std::size_t g = 0; g < 6; ++g) {
      std::uint64_t row = 0;
      for (std::size_t p = 0; p < 6; ++p) row += r.confusion[g][p];
      CHECK(row == std::uint64_t(std::count(gold.begin(), gold.end(), g)));
      sum += row;
      trace += r.confusion[g][g];
    }
    CHECK(sum == 200);
    CHECK(r.accuracy == double(trace) / 200.0);
    CHECK(r.accuracy == accuracy(pred, gold));
    CHECK_FALSE(r.binary);
  }

  TEST_CASE("report files") {
    TempDir dir("report");
    auto r = make_report(Labels{1, 0, 0, 1}, Labels{1, 0, 1, 1}, 2, {"fake", "real"});
    write_report(r, dir.path());
    const auto text = read_text(dir / "report.txt");
    CHECK(text.find("accuracy=0.750000\n") != std::string::npos);
    CHECK(text.find("tp=2\ntn=1\nfp=0\nfn=1\n") != std::string::npos);
    CHECK(read_text(dir / "confusion.txt") == "1\t0\n1\t2\n");
    CHECK_THROWS_AS(make_report(Labels{1}, Labels{1}, 2, {"only"}), LabelError);
  }

  TEST_CASE("log line format") {
    CHECK(format_log_line({3, 0.25, 0.5, 0.75}) == "3\t0.250000\t0.500000\t0.750000");
  }

  TEST_CASE("model that always says class 0 scores 0.5 on a balanced set") {
    Vocabulary v = toy_vocab(14);
    Model m = toy_model(tiny_config(EmbeddingMode::NonStatic, {2, 3}), v);
    silence_class(m, 1);
    auto data = separable(20, 1);
    for (auto p : predict_labels(m, data)) CHECK(p == 0);
    auto r = evaluate(m, data);
    CHECK(r.accuracy == 0.5);
    CHECK(r.total == 20);
    CHECK_THROWS_AS(evaluate(m, std::span<const LabeledInput>{}), EmptyInputError);
  }

  TEST_CASE("toy task is learned to full training accuracy") {
    Vocabulary v = toy_vocab(14);
    Model m = toy_model(tiny_config(EmbeddingMode::NonStatic, {2, 3}), v);
    auto data = separable(20, 2);
    TrainRunConfig cfg;
    cfg.epochs = 30;
    cfg.batch_size = 4;
    cfg.patience = 30;
    cfg.optimizer.learning_rate = 1e-2;
    auto result = train(m, data, data, cfg);
    CHECK(evaluate(m, data).accuracy == 1.0);
    CHECK(result.best_val_accuracy == 1.0);
  }

  TEST_CASE("best accuracy is monotone and the model ends at its best epoch") {
    Vocabulary v = toy_vocab(14);
    Model m = toy_model(tiny_config(EmbeddingMode::NonStatic, {2}), v);
    auto tr = separable(16, 3), va = separable(10, 4);
    TrainRunConfig cfg;
    cfg.epochs = 8;
    cfg.batch_size = 4;
    cfg.patience = 8;
    auto result = train(m, tr, va, cfg);
    double prev = -1;
    for (const auto& e : result.log) {
      CHECK(e.best_val_accuracy >= prev);
      CHECK(e.best_val_accuracy >= e.val_accuracy);
      prev = e.best_val_accuracy;
    }
    CHECK(evaluate(m, va).accuracy == result.best_val_accuracy);
    CHECK(result.log[result.best_epoch - 1].val_accuracy == result.best_val_accuracy);
  }

  TEST_CASE("patience 0 stops at the first epoch without improvement") {
    Vocabulary v = toy_vocab(14);
    auto tr = separable(8, 5);
    // A one-example validation set can improve at most once.
    auto va = separable(1, 6);
    TempDir dir("ckpt");
    Model m = toy_model(tiny_config(EmbeddingMode::NonStatic, {2}), v);
    TrainRunConfig cfg;
    cfg.epochs = 10;
    cfg.patience = 0;
    cfg.checkpoint_dir = dir.path();
    auto result = train(m, tr, va, cfg);
    REQUIRE(result.log.size() >= 2);
    const auto& last = result.log.back();
    CHECK(last.val_accuracy <= result.log[result.log.size() - 2].best_val_accuracy);
    for (std::size_t i = 0; i + 1 < result.log.size(); ++i)
      CHECK(result.log[i].val_accuracy > (i ? result.log[i - 1].best_val_accuracy : -1.0));
    CHECK(std::filesystem::exists(dir / "best.ckpt"));
    CHECK(std::filesystem::exists(dir / ("epoch-" + std::to_string(last.epoch) + ".ckpt")));
    CHECK_FALSE(std::filesystem::exists(dir / "epoch-1.ckpt"));
    Model reloaded = toy_model(tiny_config(EmbeddingMode::NonStatic, {2}), v, 77);
    reloaded.load_state(load_checkpoint(dir / "best.ckpt"));
    CHECK(evaluate(reloaded, tr) == evaluate(m, tr));
  }

  TEST_CASE("same seed gives identical logs and reports") {
    Vocabulary v = toy_vocab(14);
    auto tr = separable(12, 7), va = separable(6, 8);
    auto run = [&](std::ostream& out) {
      Model m = toy_model(tiny_config(EmbeddingMode::NonStatic, {2, 3}), v);
      TrainRunConfig cfg;
      cfg.epochs = 3;
      cfg.batch_size = 5;
      cfg.seed = 11;
      auto r = train(m, tr, va, cfg, &out);
      return std::make_pair(r.log, evaluate(m, va));
    };
    std::ostringstream a, b;
    auto ra = run(a), rb = run(b);
    CHECK(ra.first == rb.first);
    CHECK(ra.second == rb.second);
    CHECK(a.str() == b.str());
    const auto text = a.str();
    CHECK(std::count(text.begin(), text.end(), '\n') == 3);
  }

  TEST_CASE("checkpoint round trip gives a bit-identical report") {
    TempDir dir("ckpt");
    Vocabulary v = toy_vocab(14);
    auto data = separable(12, 9);
    Model m = toy_model(tiny_config(EmbeddingMode::Multichannel, {2, 3}), v);
    fit(m, {data[0].input, data[1].input}, {data[0].label, data[1].label}, 5);
    save_checkpoint(dir / "m.ckpt", m.state());
    Model other = toy_model(tiny_config(EmbeddingMode::Multichannel, {2, 3}), v, 1234);
    other.load_state(load_checkpoint(dir / "m.ckpt"));
    CHECK(evaluate(m, data) == evaluate(other, data));
    for (const auto& ex : data) {
      auto a = m.predict(ex.input), b = other.predict(ex.input);
      CHECK(a.scores[0] == b.scores[0]);
      CHECK(a.scores[1] == b.scores[1]);
    }
  }

  TEST_CASE("non-finite loss aborts with the batch index") {
    Vocabulary v = toy_vocab(14);
    Model m = toy_model(tiny_config(EmbeddingMode::NonStatic, {2}), v);
    for (auto& v : m.trainable_parameters().back().mutable_data()) v = std::nan("");
    TrainRunConfig cfg;
    cfg.epochs = 1;
    try {
      train(m, separable(4, 10), {}, cfg);
      FAIL("expected DivergenceError");
    } catch (const DivergenceError& e) {
      CHECK(e.batch_index() == 0);
    }
  }

  TEST_CASE("invalid runs") {
    Vocabulary v = toy_vocab(14);
    Model m = toy_model(tiny_config(EmbeddingMode::NonStatic, {2}), v);
    TrainRunConfig cfg;
    CHECK_THROWS_AS(train(m, {}, {}, cfg), EmptyInputError);
    cfg.epochs = 0;
    CHECK_THROWS_AS(train(m, separable(2, 1), {}, cfg), ConfigError);
    cfg.epochs = 1;
    auto bad = separable(2, 1);
    bad[0].label = 4;
    CHECK_THROWS_AS(train(m, bad, {}, cfg), LabelError);
  }
}
