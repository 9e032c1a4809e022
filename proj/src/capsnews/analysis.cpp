#include "capsnews/analysis.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "capsnews/errors.hpp"

namespace capsnews {

std::size_t FrequencyProfile::count(const std::string& word) const {
  auto it = counts.find(word);
  return it == counts.end() ? 0 : it->second;
}

double FrequencyProfile::normalized(const std::string& word) const {
  if (word_tokens == 0) return 0.0;
  return static_cast<double>(count(word)) / static_cast<double>(word_tokens) * 10.0;
}

FrequencyProfile profile(const std::vector<std::vector<std::string>>& corpus) {
  FrequencyProfile p;
  for (const auto& doc : corpus) {
    for (const auto& tok : doc) ++p.counts[tok];
    p.word_tokens += doc.size();
  }
  if (p.word_tokens == 0) throw EmptyInputError("frequency profile of an empty corpus");
  p.word_types = p.counts.size();
  return p;
}

std::vector<ComparisonRow> compare_sample(const std::vector<std::string>& sample_tokens,
                                          const FrequencyProfile& real_profile, const FrequencyProfile& fake_profile,
                                          std::size_t min_count, const std::set<std::string>& stopwords) {
  std::vector<ComparisonRow> rows;
  if (sample_tokens.empty()) return rows;
  const auto sample = profile({sample_tokens});
  for (const auto& [word, n] : sample.counts) {
    if (n <= min_count || stopwords.count(word)) continue;
    rows.push_back({word, n, sample.normalized(word), fake_profile.normalized(word), real_profile.normalized(word)});
  }
  std::sort(rows.begin(), rows.end(), [](const ComparisonRow& a, const ComparisonRow& b) {
    if (a.sample_count != b.sample_count) return a.sample_count > b.sample_count;
    return a.word < b.word;
  });
  return rows;
}

void write_comparison(std::ostream& out, const std::vector<ComparisonRow>& rows) {
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "\t%.6g\t%.6g\t%.6g\n", r.sample_frequency, r.fake_frequency, r.real_frequency);
    out << r.word << buf;
  }
}

const std::set<std::string>& default_stopwords() {
  static const std::set<std::string> words = {
      "a",        "about",   "above",   "after",    "again",   "against", "am",      "an",
      "and",      "any",     "are",     "aren't",   "as",      "at",      "be",      "because", "been",
      "before",   "being",   "below",   "between",  "both",    "but",     "by",      "can",     "can't",
      "cannot",   "could",   "couldn't", "did",     "didn't",  "do",      "does",    "doesn't", "doing",
      "don't",    "down",    "during",  "each",     "few",     "for",     "from",    "further", "had",
      "hadn't",   "has",     "hasn't",  "have",     "haven't", "having",  "he",      "he'd",    "he'll",
      "he's",     "her",     "here",    "here's",   "hers",    "herself", "him",     "himself", "his",
      "how",      "how's",   "i",       "i'd",      "i'll",    "i'm",     "i've",    "if",      "in",
      "into",     "is",      "isn't",   "it",       "it's",    "its",     "itself",  "let's",   "me",
      "more",     "most",    "mustn't", "my",       "myself",  "no",      "nor",     "not",     "of",
      "off",      "on",      "once",    "only",     "or",      "other",   "ought",   "our",     "ours",
      "ourselves", "out",    "over",    "own",      "same",    "shan't",  "she",     "she'd",   "she'll",
      "she's",    "should",  "shouldn't", "so",     "some",    "such",    "than",    "that",    "that's",
      "the",      "their",   "theirs",  "them",     "themselves", "then", "there",   "there's", "these",
      "they",     "they'd",  "they'll", "they're",  "they've", "this",    "those",   "through", "to",
      "too",      "under",   "until",   "up",       "very",    "was",     "wasn't",  "we",      "we'd",
      "we'll",    "we're",   "we've",   "were",     "weren't", "what",    "what's",  "when",    "when's",
      "where",    "where's", "which",   "while",    "who",     "who's",   "whom",    "why",     "why's",
      "will",     "with",    "won't",   "wouldn't", "you",    "you'd",   "you'll",  "you're",
      "you've",   "your",    "yours",   "yourself", "yourselves", "s",      "t",
  };
  return words;
}

std::set<std::string> load_stopwords(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open stopword list " + path.string());
  std::set<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    while (!line.empty() && (line.back() == ' ' || line.back() == '\r' || line.back() == '\t')) line.pop_back();
    std::size_t start = line.find_first_not_of(" \t");
    if (start == std::string::npos) continue;
    words.insert(line.substr(start));
  }
  return words;
}

}  // namespace capsnews
