#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "capsnews/data.hpp"
#include "capsnews/model.hpp"
#include "capsnews/optimizer.hpp"

namespace capsnews {

using ConfusionMatrix = std::vector<std::vector<std::uint64_t>>;  // [true][predicted]

struct BinaryCounts {
  std::uint64_t tp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  bool operator==(const BinaryCounts&) const = default;
};

struct EvalReport {
  double accuracy = 0.0;
  std::uint64_t total = 0;
  ConfusionMatrix confusion;
  std::optional<BinaryCounts> binary;  // two-class tasks; class 1 is positive
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<std::string> label_names;

  std::size_t num_classes() const noexcept { return confusion.size(); }
  bool operator==(const EvalReport&) const = default;
};

double accuracy(std::span<const std::size_t> predicted, std::span<const std::size_t> gold);
ConfusionMatrix confusion_matrix(std::span<const std::size_t> predicted, std::span<const std::size_t> gold,
                                 std::size_t num_classes);
EvalReport make_report(std::span<const std::size_t> predicted, std::span<const std::size_t> gold,
                       std::size_t num_classes, std::vector<std::string> label_names = {});

std::vector<std::size_t> predict_labels(const Model& model, std::span<const LabeledInput> examples);
EvalReport evaluate(const Model& model, std::span<const LabeledInput> examples,
                    std::vector<std::string> label_names = {});

/// Writes `report.txt` (key=value) and `confusion.txt` (C rows of C
/// tab-separated counts) into `dir`.
void write_report(const EvalReport& report, const std::filesystem::path& dir);

struct TrainRunConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 16;
  std::size_t patience = 5;
  std::uint64_t seed = 1;
  /// Empty: keep the best state in memory only.
  std::filesystem::path checkpoint_dir;
  bool keep_epoch_checkpoints = false;
  AdamOptions optimizer;

  void validate() const;
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;
  double best_val_accuracy = 0.0;
  bool operator==(const EpochLog&) const = default;
};

/// `epoch \t train_loss \t val_acc \t best_val_acc`
std::string format_log_line(const EpochLog& entry);

struct TrainResult {
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_val_accuracy = 0.0;
  std::filesystem::path best_checkpoint;
};

/// Mini-batch training on the branch-averaged margin loss with early stopping
/// on validation accuracy. The model ends holding its best-epoch parameters.
/// Throws DivergenceError on a non-finite loss.
TrainResult train(Model& model, std::span<const LabeledInput> train_set, std::span<const LabeledInput> validation_set,
                  const TrainRunConfig& config, std::ostream* log = nullptr);

/// Mean ensemble loss over a set, without recording gradients.
double mean_loss(const Model& model, std::span<const LabeledInput> examples);

}  // namespace capsnews
