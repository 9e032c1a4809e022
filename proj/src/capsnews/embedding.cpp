#include "capsnews/embedding.hpp"

#include <algorithm>
#include <charconv>
#include <cstring>
#include <fstream>
#include <map>
#include <random>

#include "capsnews/errors.hpp"

namespace capsnews {

Vocabulary::Vocabulary() {
  add(std::string(kPadToken));
  add(std::string(kUnkToken));
  add(std::string(kSepToken));
}

TokenId Vocabulary::add(std::string token) {
  auto [it, inserted] = index_.emplace(token, static_cast<TokenId>(tokens_.size()));
  if (inserted) tokens_.push_back(std::move(token));
  return it->second;
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& corpus, std::size_t min_count) {
  std::map<std::string, std::size_t> counts;
  for (const auto& doc : corpus) {
    for (const auto& tok : doc) ++counts[tok];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary vocab;
  for (auto& [tok, n] : ranked) {
    if (n >= min_count) vocab.add(tok);
  }
  return vocab;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open vocabulary " + path.string());
  Vocabulary vocab;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno <= 3) {
      if (line != vocab.tokens_[lineno - 1]) {
        throw ParseError(path.string(), lineno, "expected reserved token " + vocab.tokens_[lineno - 1]);
      }
      continue;
    }
    if (line.empty() || vocab.contains(line)) {
      throw ParseError(path.string(), lineno, "empty or duplicate vocabulary entry");
    }
    vocab.add(line);
  }
  return vocab;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write vocabulary " + path.string());
  for (const auto& tok : tokens_) out << tok << '\n';
}

bool Vocabulary::contains(std::string_view token) const { return index_.count(std::string(token)) > 0; }

TokenId Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw OutOfVocabularyError("token id " + std::to_string(id) + " outside vocabulary of size " +
                               std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

TokenIds Vocabulary::encode(const std::vector<std::string>& tokens) const {
  TokenIds ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

std::string_view to_string(EmbeddingMode mode) {
  switch (mode) {
    case EmbeddingMode::Static: return "static";
    case EmbeddingMode::NonStatic: return "non-static";
    case EmbeddingMode::Multichannel: return "multichannel";
  }
  return "?";
}

EmbeddingMode parse_embedding_mode(std::string_view text) {
  if (text == "static") return EmbeddingMode::Static;
  if (text == "non-static" || text == "nonstatic") return EmbeddingMode::NonStatic;
  if (text == "multichannel") return EmbeddingMode::Multichannel;
  throw ConfigError("unknown embedding mode '" + std::string(text) + "'");
}

EmbeddingTable::EmbeddingTable(Tensor matrix, EmbeddingMode mode) : mode_(mode) {
  if (!matrix.defined() || matrix.rank() != 2) throw DimensionError("embedding matrix must be [V x D]");
  trainable_or_static_ = matrix.detach();
  switch (mode) {
    case EmbeddingMode::Static:
      trainable_or_static_.set_name("embedding.static");
      break;
    case EmbeddingMode::NonStatic:
      trainable_or_static_.set_requires_grad(true);
      trainable_or_static_.set_name("embedding.nonstatic");
      break;
    case EmbeddingMode::Multichannel:
      trainable_or_static_.set_requires_grad(true);
      trainable_or_static_.set_name("embedding.nonstatic");
      frozen_ = matrix.detach();
      frozen_.set_name("embedding.static");
      break;
  }
}

std::vector<Tensor> EmbeddingTable::lookup(std::span<const TokenId> ids) const {
  std::vector<Tensor> out;
  out.push_back(gather_rows(trainable_or_static_, ids, Vocabulary::kPad));
  if (frozen_.defined()) out.push_back(gather_rows(frozen_, ids, Vocabulary::kPad));
  return out;
}

std::vector<Tensor> EmbeddingTable::trainable() const {
  if (mode_ == EmbeddingMode::Static) return {};
  return {trainable_or_static_};
}

std::vector<Tensor> EmbeddingTable::channels() const {
  std::vector<Tensor> out{trainable_or_static_};
  if (frozen_.defined()) out.push_back(frozen_);
  return out;
}

std::uint64_t EmbeddingTable::checksum() const {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& t : channels()) {
    for (auto v : t.data()) {
      unsigned char bytes[sizeof(Real)];
      std::memcpy(bytes, &v, sizeof(Real));
      for (auto b : bytes) {
        h ^= b;
        h *= 1099511628211ull;
      }
    }
  }
  return h;
}

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) fields.push_back(line.substr(start, i - start));
  }
  return fields;
}

bool parse_real(std::string_view text, Real& out) {
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

bool is_count_header(const std::vector<std::string_view>& fields) {
  if (fields.size() != 2) return false;
  for (auto f : fields) {
    if (f.empty() || !std::all_of(f.begin(), f.end(), [](char c) { return c >= '0' && c <= '9'; })) return false;
  }
  return true;
}

}  // namespace

Tensor load_pretrained(const std::filesystem::path& path, const Vocabulary& vocab, std::size_t dim,
                       std::uint64_t seed) {
  if (dim == 0) throw InvalidArgument("embedding dimension must be positive");
  const std::size_t rows = vocab.size();
  std::vector<Real> values(rows * dim);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<Real> init(-0.25, 0.25);
  for (auto& v : values) v = init(rng);
  std::fill_n(values.begin() + Vocabulary::kPad * dim, dim, 0.0);

  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open embeddings " + path.string());
    std::string line;
    std::size_t lineno = 0;
    bool first_vector = true;
    while (std::getline(in, line)) {
      ++lineno;
      const auto fields = split_ws(line);
      if (fields.empty()) continue;
      if (lineno == 1 && is_count_header(fields)) continue;
      if (fields.size() != dim + 1) {
        // The first vector fixes the file's dimensionality.
        if (first_vector) {
          throw DimensionError(path.string() + ": vectors have dimension " +
                               std::to_string(fields.size() - 1) + ", expected " + std::to_string(dim));
        }
        throw ParseError(path.string(), lineno,
                         "expected " + std::to_string(dim + 1) + " fields, got " + std::to_string(fields.size()));
      }
      first_vector = false;
      const TokenId id = vocab.id(fields[0]);
      if (id == Vocabulary::kUnk || id == Vocabulary::kPad || fields[0] != vocab.token(id)) continue;
      Real* row = values.data() + static_cast<std::size_t>(id) * dim;
      for (std::size_t d = 0; d < dim; ++d) {
        if (!parse_real(fields[d + 1], row[d])) {
          throw ParseError(path.string(), lineno, "bad number '" + std::string(fields[d + 1]) + "'");
        }
      }
    }
  }
  return Tensor::from({rows, dim}, std::move(values));
}

}  // namespace capsnews
