#include "doctest.h"

#include <sstream>

#include "capsnews/analysis.hpp"
#include "capsnews/errors.hpp"
#include "support/support.hpp"

using namespace capsnews;

namespace {

using Tokens = std::vector<std::string>;

// 257 tokens: "tax" x9, "deduction" x3, the rest distinct filler words.
Tokens table_sample() {
  Tokens t(9, "tax");
  t.insert(t.end(), 3, "deduction");
  for (int i = 0; t.size() < 257; ++i) t.push_back("filler" + std::to_string(i));
  return t;
}

}  // namespace

TEST_SUITE("analysis") {
  TEST_CASE("normalised frequency arithmetic") {
    const auto p = profile({table_sample()});
    CHECK(p.word_tokens == 257);
    CHECK(std::abs(p.normalized("deduction") - 0.116732) < 1e-6);
    CHECK(std::abs(p.normalized("tax") - 0.350195) < 1e-6);
    CHECK(profile({{"a"}}).normalized("a") == 10.0);
    CHECK(p.normalized("absent") == 0.0);
  }

  TEST_CASE("token and type counts") {
    const auto p = profile({{"a", "b", "a"}, {"c", "a"}});
    CHECK(p.word_tokens == 5);
    CHECK(p.word_types == 3);
    double mass = 0;
    for (const auto& [w, n] : p.counts) mass += p.normalized(w) / 10.0 * p.word_tokens;
    CHECK(mass == doctest::Approx(5.0));
    CHECK_THROWS_AS(profile({}), EmptyInputError);
    CHECK_THROWS_AS(profile({{}}), EmptyInputError);
  }

  TEST_CASE("k copies of a document keep every normalised frequency") {
    const Tokens doc = capsnews::tokenize("the tax bill cut the tax rate and the deduction");
    const auto one = profile({doc});
    for (std::size_t k : {2, 5, 13}) {
      const auto many = profile(std::vector<Tokens>(k, doc));
      for (const auto& [w, n] : one.counts) CHECK(many.normalized(w) == doctest::Approx(one.normalized(w)).epsilon(1e-15));
    }
  }

  TEST_CASE("comparison table columns and order") {
    const auto real = profile({{"tax", "tax", "deduction", "policy"}});
    const auto fake = profile({{"tax", "video", "video", "shocking", "deduction", "x", "y", "z"}});
    const auto rows = compare_sample(table_sample(), real, fake, 2, default_stopwords());
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].word == "tax");
    CHECK(rows[0].sample_count == 9);
    CHECK(rows[0].real_frequency == doctest::Approx(5.0));
    CHECK(rows[0].fake_frequency == doctest::Approx(1.25));
    CHECK(rows[0].real_frequency > rows[0].fake_frequency);
    CHECK(rows[1].word == "deduction");
    std::ostringstream out;
    write_comparison(out, rows);
    std::istringstream in(out.str());
    std::string line;
    while (std::getline(in, line)) CHECK(std::count(line.begin(), line.end(), '\t') == 3);
  }

  TEST_CASE("ties sort alphabetically") {
    const auto p = profile({{"q"}});
    const auto rows = compare_sample({"b", "b", "b", "a", "a", "a", "c", "c", "c", "c"}, p, p, 2, {});
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].word == "c");
    CHECK(rows[1].word == "a");
    CHECK(rows[2].word == "b");
  }

  TEST_CASE("empty tables") {
    const auto p = profile({{"q"}});
    CHECK(compare_sample({"the", "the", "the", "and", "and", "and"}, p, p, 2, default_stopwords()).empty());
    CHECK(compare_sample({"alpha", "beta", "gamma"}, p, p, 2, {}).empty());
    CHECK(compare_sample(table_sample(), p, p, 1000, {}).empty());
    CHECK(compare_sample({}, p, p, 2, {}).empty());
  }

  TEST_CASE("every emitted word clears the threshold and is not a stopword") {
    std::mt19937_64 rng(60);
    const Tokens vocab{"the", "tax", "and", "vote", "senate", "of", "law", "money", "all", "even"};
    const auto& stop = default_stopwords();
    const auto p = profile({vocab});
    for (int trial = 0; trial < 50; ++trial) {
      Tokens sample(20 + rng() % 60);
      for (auto& w : sample) w = vocab[rng() % vocab.size()];
      const std::size_t min_count = rng() % 6;
      for (const auto& row : compare_sample(sample, p, p, min_count, stop)) {
        CHECK(std::size_t(std::count(sample.begin(), sample.end(), row.word)) >= min_count + 1);
        CHECK(stop.count(row.word) == 0);
      }
    }
  }

  TEST_CASE("shipped stopword file matches the built-in list") {
    const auto words = load_stopwords(std::filesystem::path(CAPSNEWS_SOURCE_DIR) / "data" / "stopwords_en.txt");
    CHECK(words == default_stopwords());
    CHECK(words.count("all") == 0);
    CHECK(words.count("the") == 1);
    capsnews::testing::TempDir dir("stop");
    capsnews::testing::write_text(dir / "s.txt", "# comment\nfoo  \n\n  bar # trailing\n");
    CHECK(load_stopwords(dir / "s.txt") == std::set<std::string>{"foo", "bar"});
    CHECK_THROWS_AS(load_stopwords(dir / "none.txt"), IoError);
  }
}
