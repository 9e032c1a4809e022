#pragma once

#include <filesystem>
#include <memory>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "capsnews/analysis.hpp"
#include "capsnews/config.hpp"
#include "capsnews/data.hpp"
#include "capsnews/model.hpp"
#include "capsnews/traineval.hpp"

namespace capsnews {

std::vector<LabeledInput> encode_examples(const std::vector<NewsExample>& examples, const MetadataSpec& spec,
                                          const Vocabulary& vocab, std::size_t max_length);

/// A model plus what is needed to feed it raw examples.
struct TrainedModel {
  Settings settings;
  Vocabulary vocab;
  std::vector<std::string> labels;
  std::unique_ptr<Model> model;

  EncodedInput encode(const NewsExample& example) const;
  /// Tokenizes free text (no metadata). Throws EmptyInputError when nothing is left.
  EncodedInput encode_text(std::string_view text) const;
  /// Throws IncompatibleError when the label sets differ.
  void check_labels(const DatasetSplit& data) const;
  EvalReport evaluate(const std::vector<NewsExample>& examples) const;
};

struct TrainingRun {
  TrainedModel trained;
  TrainResult result;
  std::optional<EvalReport> validation;
};

/// Vocabulary from the training split, embeddings (random when `embeddings`
/// is empty), training, then the validation report. With a non-empty
/// `run_dir` everything needed by load_trained() is written there.
TrainingRun run_training(Settings settings, const DatasetSplit& data, const std::filesystem::path& embeddings,
                         const std::filesystem::path& run_dir, std::ostream* log = nullptr);

/// Reads vocab.txt, labels.txt and model.cfg from the checkpoint's directory.
/// `settings` replaces model.cfg when given.
TrainedModel load_trained(const std::filesystem::path& checkpoint, const Settings* settings = nullptr);

/// Fake/real grouping used by the frequency comparison: the lower half of
/// the label order is treated as fake.
bool is_fake_label(std::size_t label, std::size_t num_classes);

/// Compares a test example with the fake and real halves of the training split.
/// Throws NotFoundError when the id is not in the test split.
std::vector<ComparisonRow> analyze_example(const DatasetSplit& data, std::string_view id, std::size_t min_count,
                                           const std::set<std::string>& stopwords);

}  // namespace capsnews
