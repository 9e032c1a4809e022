#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "capsnews/embedding.hpp"

namespace capsnews {

/// Speaker-profile fields of a LIAR row. `history` holds the barely-true,
/// false, half-true, mostly-true and pants-fire counts in that order.
struct SpeakerProfile {
  std::string subject;
  std::string speaker;
  std::string job;
  std::string state;
  std::string party;
  std::string context;
  std::array<std::uint32_t, 5> history{};
};

struct NewsExample {
  std::string id;
  std::string statement;
  std::vector<std::string> tokens;
  std::size_t label = 0;
  std::optional<SpeakerProfile> metadata;
};

struct DatasetSplit {
  std::vector<NewsExample> train;
  std::vector<NewsExample> validation;
  std::vector<NewsExample> test;
  std::vector<std::string> label_names;
  /// Rows dropped because their text was empty after tokenisation.
  std::size_t rejected = 0;

  std::size_t num_classes() const noexcept { return label_names.size(); }
  /// Searches train, validation then test.
  const NewsExample* find(std::string_view id) const;
};

/// Lowercases, splits on whitespace (ASCII and Unicode space separators),
/// strips leading/trailing non-alphanumeric characters from each token and
/// drops empty results. Internal punctuation is kept.
std::vector<std::string> tokenize(std::string_view text);

struct IsotOptions {
  std::uint64_t seed = 1;
  std::size_t test_per_class = 1000;
  double validation_fraction = 0.05;
};

/// ISOT labels: fake = 0, real = 1. Each file is shuffled with the seed and
/// its first `test_per_class` examples form the test split; the remainder is
/// pooled, shuffled again and `validation_fraction` of it held out.
DatasetSplit load_isot(const std::filesystem::path& real_csv, const std::filesystem::path& fake_csv,
                       const IsotOptions& options = {});

inline constexpr std::array<std::string_view, 6> kLiarLabels{"pants-fire", "false",       "barely-true",
                                                             "half-true",  "mostly-true", "true"};
inline constexpr std::array<std::string_view, 2> kIsotLabels{"fake", "real"};

/// Three headerless 14-column TSV files.
DatasetSplit load_liar(const std::filesystem::path& train_tsv, const std::filesystem::path& valid_tsv,
                       const std::filesystem::path& test_tsv);

/// RFC-4180 reader. Returns records including the header; throws ParseError
/// with the 1-based record number on unbalanced quotes or ragged rows.
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Model inputs.

struct EncodedInput {
  TokenIds ids;
  std::optional<std::array<Real, 5>> history;
};

struct LabeledInput {
  EncodedInput input;
  std::size_t label = 0;
};

struct Batch {
  std::vector<TokenIds> ids;  // all padded to `length`
  std::vector<std::optional<std::array<Real, 5>>> histories;
  std::vector<std::size_t> labels;
  std::vector<std::size_t> indices;  // positions in the source list
  std::size_t length = 0;

  std::size_t size() const noexcept { return ids.size(); }
};

/// Seeded shuffle (a fresh permutation per epoch), truncation to
/// `max_length`, PAD to the batch maximum. The last batch may be partial.
std::vector<Batch> make_batches(std::span<const LabeledInput> examples, std::size_t max_length,
                                std::size_t batch_size, std::uint64_t seed, std::size_t epoch);

}  // namespace capsnews
