#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "capsnews/data.hpp"
#include "capsnews/tensor.hpp"

namespace capsnews::testing {

/// Largest relative error between backward() and central differences over
/// every element of every input. Inputs must be leaves with requires_grad.
inline double max_gradient_error(std::vector<Tensor> inputs, const std::function<Tensor()>& loss_fn,
                                 double h = 1e-5) {
  for (auto& t : inputs) t.clear_grad();
  backward(loss_fn());
  double worst = 0.0;
  for (auto& t : inputs) {
    const std::vector<Real> analytic(t.grad().begin(), t.grad().end());
    auto values = t.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const Real saved = values[i];
      Real up, down;
      {
        NoGradGuard guard;
        values[i] = saved + h;
        up = loss_fn().item();
        values[i] = saved - h;
        down = loss_fn().item();
      }
      values[i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double a = analytic.empty() ? 0.0 : analytic[i];
      const double scale = std::max({std::abs(a), std::abs(numeric), 1e-3});
      worst = std::max(worst, std::abs(a - numeric) / scale);
    }
  }
  return worst;
}

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0,
                            bool requires_grad = true) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<Real> v(shape_numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

/// A scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::mt19937_64 rng(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() / ("capsnews-" + tag + "-" + std::to_string(rng()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

inline std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

/// Synthetic news text: background words plus class-typical cue words.
inline std::string synthetic_article(std::mt19937_64& rng, bool real, std::size_t words) {
  static const std::vector<std::string> common = {
      "the",    "government", "said",   "people", "state",  "president", "new",    "year",   "house",
      "policy", "vote",       "report", "city",   "market", "week",      "public", "office", "plan",
      "court",  "law",        "group",  "member", "party",  "official",  "talks",  "budget", "leader"};
  static const std::vector<std::string> real_cues = {"reuters", "spokesman", "statement", "minister", "agency"};
  static const std::vector<std::string> fake_cues = {"shocking", "breaking", "video", "watch", "truth"};
  const auto& cues = real ? real_cues : fake_cues;
  std::string text;
  for (std::size_t i = 0; i < words; ++i) {
    const bool cue = rng() % 6 == 0;
    const auto& w = cue ? cues[rng() % cues.size()] : common[rng() % common.size()];
    if (!text.empty()) text += (rng() % 9 == 0) ? ", " : " ";
    text += w;
  }
  return text + ".";
}

/// Writes True.csv / Fake.csv in the ISOT column layout.
inline void write_isot(const std::filesystem::path& dir, std::size_t per_class, std::uint64_t seed,
                       std::size_t min_words = 12, std::size_t max_words = 40) {
  std::mt19937_64 rng(seed);
  for (bool real : {true, false}) {
    std::ofstream out(dir / (real ? "True.csv" : "Fake.csv"), std::ios::binary | std::ios::trunc);
    out << "title,text,subject,date\n";
    for (std::size_t i = 0; i < per_class; ++i) {
      const std::size_t n = min_words + rng() % (max_words - min_words + 1);
      out << csv_quote("Title " + std::to_string(i)) << ',' << csv_quote(synthetic_article(rng, real, n)) << ','
          << (real ? "politicsNews" : "News") << ",\"January 1, 2017\"\n";
    }
  }
}

/// Writes train.tsv / valid.tsv / test.tsv in the 14-column LIAR layout.
/// Labels cycle through the six classes; history counts lean towards the label.
inline void write_liar(const std::filesystem::path& dir, std::size_t train, std::size_t valid, std::size_t test,
                       std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::vector<std::string> parties = {"republican", "democrat", "none"};
  const std::vector<std::string> states = {"Texas", "Ohio", "Florida", ""};
  std::size_t row = 0;
  auto write = [&](const std::string& name, std::size_t count) {
    std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
    for (std::size_t i = 0; i < count; ++i, ++row) {
      const std::size_t label = row % 6;
      const bool truthful = label >= 3;
      std::string statement = synthetic_article(rng, truthful, 6 + rng() % 10);
      std::uint32_t h[5] = {std::uint32_t(rng() % 4), std::uint32_t(rng() % 4), std::uint32_t(rng() % 4),
                            std::uint32_t(rng() % 4), std::uint32_t(rng() % 4)};
      h[label % 5] += 5;
      out << row << ".json\t" << kLiarLabels[label] << '\t' << statement << "\teconomy,taxes\tspeaker-" << (row % 7)
          << "\tSenator\t" << states[row % states.size()] << '\t' << parties[row % parties.size()];
      for (auto c : h) out << '\t' << c;
      out << "\ta speech\n";
    }
  };
  write("train.tsv", train);
  write("valid.tsv", valid);
  write("test.tsv", test);
}

}  // namespace capsnews::testing
