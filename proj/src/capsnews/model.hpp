#pragma once

#include <memory>
#include <string>
#include <vector>

#include "capsnews/capsule.hpp"
#include "capsnews/checkpoint.hpp"
#include "capsnews/data.hpp"
#include "capsnews/embedding.hpp"

namespace capsnews {

enum class Architecture { LongStatement, ShortStatement };

std::string_view to_string(Architecture arch);
Architecture parse_architecture(std::string_view text);

struct CapsuleSettings {
  std::size_t conv_channels = 32;
  std::size_t primary_maps = 8;
  std::size_t primary_dim = 8;
  std::size_t conv_caps_window = 3;
  std::size_t conv_caps_maps = 8;
  std::size_t conv_caps_dim = 16;
  std::size_t class_caps_dim = 16;
  std::size_t routing_iterations = 3;
  bool routing_stop_gradient = false;
};

struct BranchConfig {
  std::size_t filter_size = 3;
  CapsuleSettings capsules;
};

/// Which speaker-profile fields feed the model. Categorical fields become
/// extra tokens after a SEP marker; `history` adds the normalised
/// credit-history vector as an extra class-layer input capsule.
struct MetadataSpec {
  bool subject = false;
  bool speaker = false;
  bool job = false;
  bool state = false;
  bool party = false;
  bool context = false;
  bool history = false;

  bool enabled() const noexcept { return subject || speaker || job || state || party || context || history; }
  bool any_categorical() const noexcept { return subject || speaker || job || state || party || context; }
  /// Comma-separated field names, e.g. "party,history".
  std::string to_string() const;
  static MetadataSpec parse(std::string_view list);
};

struct ModelConfig {
  Architecture architecture = Architecture::LongStatement;
  EmbeddingMode embedding_mode = EmbeddingMode::NonStatic;
  std::vector<BranchConfig> branches;
  std::size_t num_classes = 2;
  std::size_t max_length = 1000;
  std::size_t embedding_dim = 300;
  MarginLossParams loss;
  MetadataSpec metadata;
  std::uint64_t seed = 1;

  /// Four branches (2,3,4,5), non-static embeddings, 1000-token inputs.
  static ModelConfig long_statement();
  /// Two branches (3,5), static embeddings, 64-token inputs.
  static ModelConfig short_statement();

  /// Shortest token sequence every branch can process.
  std::size_t min_length() const;
  void validate() const;
};

struct ModelOutput {
  std::vector<Tensor> branch_lengths;  // per branch, [C]
  Tensor scores;                       // branch average, [C]
  std::size_t predicted = 0;
};

/// Parallel n-gram capsule branches over a shared embedding table, combined
/// by averaging class-capsule lengths.
class Model {
 public:
  Model(ModelConfig config, EmbeddingTable embeddings);

  ModelOutput forward(const EncodedInput& input) const;
  /// Forward pass with tape recording disabled.
  ModelOutput predict(const EncodedInput& input) const;

  const ModelConfig& config() const noexcept { return config_; }
  const EmbeddingTable& embeddings() const noexcept { return embeddings_; }
  std::size_t num_branches() const noexcept { return branches_.size(); }
  std::size_t branch_filter_size(std::size_t i) const { return branches_.at(i).conv.width(); }

  /// Everything the optimizer updates.
  std::vector<Tensor> trainable_parameters() const;
  /// Every tensor saved in a checkpoint, including frozen embeddings.
  std::vector<Tensor> named_tensors() const;
  std::size_t parameter_count() const;

  std::vector<NamedArray> state() const;
  /// Throws IncompatibleError when names or shapes differ from this model.
  void load_state(const std::vector<NamedArray>& state);

 private:
  struct Branch {
    NGramConv conv;
    PrimaryCapsuleLayer primary;
    ConvCapsuleLayer conv_caps;
    ClassCapsuleLayer class_caps;
  };

  ModelConfig config_;
  EmbeddingTable embeddings_;
  std::vector<Branch> branches_;
};

Model build_model(const ModelConfig& config, const Vocabulary& vocab, EmbeddingTable embeddings);

/// Margin loss on the branch-averaged lengths.
Tensor ensemble_loss(std::span<const Tensor> branch_lengths, const Tensor& target, const MarginLossParams& params);

/// Each count divided by their sum; all zeros stay zero.
std::array<Real, 5> normalize_history(const std::array<std::uint32_t, 5>& counts);

/// Statement ids (truncated so the result fits `max_length`), then SEP and
/// the tokens of each enabled categorical field, plus the history vector.
EncodedInput encode_metadata(const NewsExample& example, const MetadataSpec& spec, const Vocabulary& vocab,
                             std::size_t max_length);

/// Tokens the vocabulary should learn from an example: statement plus
/// enabled categorical metadata.
std::vector<std::string> vocabulary_tokens(const NewsExample& example, const MetadataSpec& spec);

/// Lowest index wins ties.
std::size_t argmax(std::span<const Real> scores);

}  // namespace capsnews
