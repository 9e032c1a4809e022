#include "capsnews/traineval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "capsnews/checkpoint.hpp"
#include "capsnews/errors.hpp"

namespace capsnews {

namespace {

void check_aligned(std::span<const std::size_t> predicted, std::span<const std::size_t> gold) {
  if (predicted.empty() || gold.empty()) throw EmptyInputError("empty evaluation");
  if (predicted.size() != gold.size()) {
    throw AlignmentError("predicted and gold label lists differ in length (" + std::to_string(predicted.size()) +
                         " vs " + std::to_string(gold.size()) + ")");
  }
}

}  // namespace

double accuracy(std::span<const std::size_t> predicted, std::span<const std::size_t> gold) {
  check_aligned(predicted, gold);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) correct += predicted[i] == gold[i];
  return static_cast<double>(correct) / static_cast<double>(gold.size());
}

ConfusionMatrix confusion_matrix(std::span<const std::size_t> predicted, std::span<const std::size_t> gold,
                                 std::size_t num_classes) {
  check_aligned(predicted, gold);
  ConfusionMatrix m(num_classes, std::vector<std::uint64_t>(num_classes, 0));
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] >= num_classes || predicted[i] >= num_classes) {
      throw LabelError("label outside " + std::to_string(num_classes) + " classes at position " + std::to_string(i));
    }
    ++m[gold[i]][predicted[i]];
  }
  return m;
}

EvalReport make_report(std::span<const std::size_t> predicted, std::span<const std::size_t> gold,
                       std::size_t num_classes, std::vector<std::string> label_names) {
  EvalReport r;
  r.confusion = confusion_matrix(predicted, gold, num_classes);
  r.total = gold.size();
  std::uint64_t trace = 0;
  for (std::size_t k = 0; k < num_classes; ++k) trace += r.confusion[k][k];
  r.accuracy = static_cast<double>(trace) / static_cast<double>(r.total);
  for (std::size_t k = 0; k < num_classes; ++k) {
    std::uint64_t row = 0, col = 0;
    for (std::size_t j = 0; j < num_classes; ++j) {
      row += r.confusion[k][j];
      col += r.confusion[j][k];
    }
    r.precision.push_back(col ? static_cast<double>(r.confusion[k][k]) / static_cast<double>(col) : 0.0);
    r.recall.push_back(row ? static_cast<double>(r.confusion[k][k]) / static_cast<double>(row) : 0.0);
  }
  if (num_classes == 2) {
    r.binary = BinaryCounts{r.confusion[1][1], r.confusion[0][0], r.confusion[0][1], r.confusion[1][0]};
  }
  if (label_names.empty()) {
    for (std::size_t k = 0; k < num_classes; ++k) label_names.push_back(std::to_string(k));
  }
  if (label_names.size() != num_classes) throw LabelError("label name count does not match the class count");
  r.label_names = std::move(label_names);
  return r;
}

std::vector<std::size_t> predict_labels(const Model& model, std::span<const LabeledInput> examples) {
  std::vector<std::size_t> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back(model.predict(ex.input).predicted);
  return out;
}

EvalReport evaluate(const Model& model, std::span<const LabeledInput> examples, std::vector<std::string> label_names) {
  if (examples.empty()) throw EmptyInputError("empty evaluation");
  const auto predicted = predict_labels(model, examples);
  std::vector<std::size_t> gold;
  gold.reserve(examples.size());
  for (const auto& ex : examples) gold.push_back(ex.label);
  return make_report(predicted, gold, model.config().num_classes, std::move(label_names));
}

void write_report(const EvalReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "report.txt", std::ios::trunc);
  if (!out) throw IoError("cannot write " + (dir / "report.txt").string());
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::string(buf);
  };
  out << "accuracy=" << num(report.accuracy) << '\n';
  out << "total=" << report.total << '\n';
  out << "num_classes=" << report.num_classes() << '\n';
  out << "labels=";
  for (std::size_t k = 0; k < report.label_names.size(); ++k) out << (k ? "," : "") << report.label_names[k];
  out << '\n';
  if (report.binary) {
    out << "tp=" << report.binary->tp << "\ntn=" << report.binary->tn << "\nfp=" << report.binary->fp
        << "\nfn=" << report.binary->fn << '\n';
  }
  for (std::size_t k = 0; k < report.num_classes(); ++k) {
    out << "precision." << report.label_names[k] << '=' << num(report.precision[k]) << '\n';
    out << "recall." << report.label_names[k] << '=' << num(report.recall[k]) << '\n';
  }
  std::ofstream grid(dir / "confusion.txt", std::ios::trunc);
  if (!grid) throw IoError("cannot write " + (dir / "confusion.txt").string());
  for (const auto& row : report.confusion) {
    for (std::size_t j = 0; j < row.size(); ++j) grid << (j ? "\t" : "") << row[j];
    grid << '\n';
  }
}

void TrainRunConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
}

std::string format_log_line(const EpochLog& e) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%zu\t%.6f\t%.6f\t%.6f", e.epoch, e.train_loss, e.val_accuracy, e.best_val_accuracy);
  return buf;
}

double mean_loss(const Model& model, std::span<const LabeledInput> examples) {
  if (examples.empty()) throw EmptyInputError("empty evaluation");
  NoGradGuard guard;
  double total = 0.0;
  for (const auto& ex : examples) {
    const auto out = model.forward(ex.input);
    total += ensemble_loss(out.branch_lengths, one_hot(ex.label, model.config().num_classes), model.config().loss)
                 .item();
  }
  return total / static_cast<double>(examples.size());
}

TrainResult train(Model& model, std::span<const LabeledInput> train_set, std::span<const LabeledInput> validation_set,
                  const TrainRunConfig& config, std::ostream* log) {
  config.validate();
  if (train_set.empty()) throw EmptyInputError("empty training set");
  const auto& mc = model.config();
  for (const auto* part : {&train_set, &validation_set}) {
    for (const auto& ex : *part) {
      if (ex.label >= mc.num_classes) {
        throw LabelError("label " + std::to_string(ex.label) + " outside the model's " +
                         std::to_string(mc.num_classes) + " classes");
      }
    }
  }
  if (!config.checkpoint_dir.empty()) std::filesystem::create_directories(config.checkpoint_dir);

  Adam optimizer(model.trainable_parameters(), config.optimizer);
  TrainResult result;
  std::vector<NamedArray> best_state = model.state();
  double best = -1.0;
  std::size_t since_improvement = 0;
  std::filesystem::path previous_epoch_ckpt;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto batches = make_batches(train_set, mc.max_length, config.batch_size, config.seed, epoch);
    double loss_total = 0.0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const auto& batch = batches[bi];
      const Real weight = 1.0 / static_cast<Real>(batch.size());
      for (std::size_t k = 0; k < batch.size(); ++k) {
        const EncodedInput input{batch.ids[k], batch.histories[k]};
        const auto out = model.forward(input);
        const Tensor loss = ensemble_loss(out.branch_lengths, one_hot(batch.labels[k], mc.num_classes), mc.loss);
        const double value = loss.item();
        if (!std::isfinite(value)) throw DivergenceError(epoch, bi);
        loss_total += value;
        backward(scale(loss, weight));
      }
      optimizer.step();
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = loss_total / static_cast<double>(train_set.size());
    entry.val_accuracy = validation_set.empty() ? 0.0 : evaluate(model, validation_set).accuracy;
    const bool improved = validation_set.empty() || entry.val_accuracy > best;
    if (improved) {
      best = std::max(best, entry.val_accuracy);
      best_state = model.state();
      result.best_epoch = epoch;
      since_improvement = 0;
    } else {
      ++since_improvement;
    }
    entry.best_val_accuracy = best;
    result.log.push_back(entry);
    if (log) *log << format_log_line(entry) << '\n' << std::flush;

    if (!config.checkpoint_dir.empty()) {
      const auto path = config.checkpoint_dir / ("epoch-" + std::to_string(epoch) + ".ckpt");
      save_checkpoint(path, model.state());
      if (!config.keep_epoch_checkpoints && !previous_epoch_ckpt.empty()) std::filesystem::remove(previous_epoch_ckpt);
      previous_epoch_ckpt = path;
      if (improved) {
        result.best_checkpoint = config.checkpoint_dir / "best.ckpt";
        save_checkpoint(result.best_checkpoint, best_state);
      }
    }
    if (!improved && since_improvement >= std::max<std::size_t>(config.patience, 1)) break;
  }

  model.load_state(best_state);
  result.best_val_accuracy = best;
  return result;
}

}  // namespace capsnews
