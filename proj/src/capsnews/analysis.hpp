#pragma once

#include <filesystem>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <vector>

namespace capsnews {

/// Word counts over a corpus. Normalised frequency is count / word_tokens * 10.
struct FrequencyProfile {
  std::size_t word_tokens = 0;
  std::size_t word_types = 0;
  std::map<std::string, std::size_t> counts;

  std::size_t count(const std::string& word) const;
  double normalized(const std::string& word) const;
};

FrequencyProfile profile(const std::vector<std::vector<std::string>>& corpus);

struct ComparisonRow {
  std::string word;
  std::size_t sample_count = 0;
  double sample_frequency = 0.0;
  double fake_frequency = 0.0;
  double real_frequency = 0.0;
};

/// Sample words that are not stopwords and occur more than `min_count`
/// times, with their normalised frequency in the sample and in the fake and
/// real training profiles. Sorted by sample frequency descending, then word.
std::vector<ComparisonRow> compare_sample(const std::vector<std::string>& sample_tokens,
                                          const FrequencyProfile& real_profile, const FrequencyProfile& fake_profile,
                                          std::size_t min_count, const std::set<std::string>& stopwords);

/// Tab-separated: word, sample, fake-training, real-training.
void write_comparison(std::ostream& out, const std::vector<ComparisonRow>& rows);

/// The built-in English list (also shipped as data/stopwords_en.txt).
const std::set<std::string>& default_stopwords();
/// One word per line; '#' starts a comment.
std::set<std::string> load_stopwords(const std::filesystem::path& path);

}  // namespace capsnews
