#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "capsnews/tensor.hpp"

namespace capsnews {

using TokenId = std::int32_t;
using TokenIds = std::vector<TokenId>;

/// Dense token <-> index map. Indices 0..2 are reserved.
class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr TokenId kSep = 2;
  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr std::string_view kUnkToken = "<unk>";
  static constexpr std::string_view kSepToken = "<sep>";

  Vocabulary();

  /// Tokens ordered by descending frequency, ties alphabetical.
  static Vocabulary build(const std::vector<std::vector<std::string>>& corpus, std::size_t min_count = 1);
  /// One token per line in index order; the first lines must be the reserved tokens.
  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::size_t size() const noexcept { return tokens_.size(); }
  bool contains(std::string_view token) const;
  /// kUnk for unknown tokens.
  TokenId id(std::string_view token) const;
  const std::string& token(TokenId id) const;
  TokenIds encode(const std::vector<std::string>& tokens) const;

  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

 private:
  TokenId add(std::string token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

enum class EmbeddingMode { Static, NonStatic, Multichannel };

std::string_view to_string(EmbeddingMode mode);
EmbeddingMode parse_embedding_mode(std::string_view text);

/// Row-indexed word vectors. Multichannel keeps a frozen copy next to the
/// trainable one; both start from the same values.
class EmbeddingTable {
 public:
  EmbeddingTable(Tensor matrix, EmbeddingMode mode);

  EmbeddingMode mode() const noexcept { return mode_; }
  std::size_t vocab_size() const { return trainable_or_static_.dim(0); }
  std::size_t dim() const { return trainable_or_static_.dim(1); }

  /// One [L x D] tensor per channel. PAD rows never receive gradient.
  std::vector<Tensor> lookup(std::span<const TokenId> ids) const;

  /// Tensors the optimizer should update.
  std::vector<Tensor> trainable() const;
  /// Every channel, named `embedding.<channel>`.
  std::vector<Tensor> channels() const;

  /// FNV-1a over the raw bytes of every channel.
  std::uint64_t checksum() const;

 private:
  Tensor trainable_or_static_;
  Tensor frozen_;  // Multichannel only
  EmbeddingMode mode_;
};

/// Builds a [V x dim] matrix: rows of tokens found in the whitespace-separated
/// text file are copied; other rows are drawn uniformly from [-0.25, 0.25];
/// the PAD row is zero. An optional leading "<count> <dim>" header line is skipped.
/// An empty path yields the random initialisation only.
Tensor load_pretrained(const std::filesystem::path& path, const Vocabulary& vocab, std::size_t dim,
                       std::uint64_t seed);

}  // namespace capsnews
