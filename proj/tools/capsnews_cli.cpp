#include <cstdio>
#include <filesystem>
#include <iostream>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "capsnews/capsnews.h"

namespace fs = std::filesystem;

namespace {

constexpr int kRuntimeFailure = 1;
constexpr int kUsageError = 2;

struct Failure {
  int exit_code;
  std::string message;
};

void check(int status, const std::string& what) {
  if (status != CN_OK) throw Failure{kRuntimeFailure, what + ": " + cn_last_error()};
}

[[noreturn]] void usage(const std::string& message) { throw Failure{kUsageError, message}; }

template <typename T, void (*Destroy)(T*)>
struct Owned {
  T* ptr = nullptr;
  Owned() = default;
  Owned(const Owned&) = delete;
  Owned& operator=(const Owned&) = delete;
  ~Owned() { Destroy(ptr); }
  T** out() { return &ptr; }
  T* get() const { return ptr; }
};

using Config = Owned<cn_config, cn_config_destroy>;
using Dataset = Owned<cn_dataset, cn_dataset_destroy>;
using ModelHandle = Owned<cn_model, cn_model_destroy>;
using Report = Owned<cn_report, cn_report_destroy>;
using Analysis = Owned<cn_analysis, cn_analysis_destroy>;

struct Options {
  std::string dataset;
  std::string real, fake;
  std::string train, valid, test;
  std::string embeddings;
  std::string config;
  std::string checkpoint;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> meta;
  std::size_t min_count = 2;
  std::string sample;
  std::string stopwords;
  std::optional<std::string> text;
};

void add_dataset_flags(CLI::App* cmd, Options& o, bool required) {
  auto* ds = cmd->add_option("--dataset", o.dataset, "isot or liar")->check(CLI::IsMember({"isot", "liar"}));
  if (required) ds->required();
  cmd->add_option("--real", o.real, "ISOT True.csv");
  cmd->add_option("--fake", o.fake, "ISOT Fake.csv");
  cmd->add_option("--train", o.train, "LIAR train.tsv");
  cmd->add_option("--valid", o.valid, "LIAR valid.tsv");
  cmd->add_option("--test", o.test, "LIAR test.tsv");
}

void add_seed_flag(CLI::App* cmd, Options& o) { cmd->add_option("--seed", o.seed, "random seed"); }

void load_config(Config& cfg, const std::string& path) {
  if (path.empty()) {
    check(cn_config_create(cfg.out()), "config");
  } else {
    const int status = cn_config_load(path.c_str(), cfg.out());
    if (status == CN_ERR_CONFIG || status == CN_ERR_PARSE) usage(std::string("bad config: ") + cn_last_error());
    check(status, "config");
  }
}

void set_key(Config& cfg, const std::string& key, const std::string& value) {
  const int status = cn_config_set(cfg.get(), key.c_str(), value.c_str());
  if (status == CN_ERR_CONFIG) usage(std::string("--") + key + ": " + cn_last_error());
  check(status, key);
}

std::string get_key(const Config& cfg, const std::string& key) {
  std::size_t needed = 0;
  cn_config_get(cfg.get(), key.c_str(), nullptr, 0, &needed);
  std::string buf(needed, '\0');
  check(cn_config_get(cfg.get(), key.c_str(), buf.data(), buf.size(), &needed), key);
  buf.resize(needed ? needed - 1 : 0);
  return buf;
}

// The config the checkpoint was trained with, unless --config overrides it.
void model_config(Config& cfg, const Options& o) {
  if (!o.config.empty()) return load_config(cfg, o.config);
  if (o.checkpoint.empty()) return load_config(cfg, "");
  const auto stored = fs::path(o.checkpoint).parent_path() / "model.cfg";
  if (!fs::exists(stored)) throw Failure{kRuntimeFailure, "no model.cfg beside " + o.checkpoint};
  load_config(cfg, stored.string());
}

void load_dataset(Dataset& ds, const Options& o, const Config& cfg) {
  if (o.dataset == "isot") {
    if (o.real.empty() || o.fake.empty()) usage("--dataset isot needs --real and --fake");
    check(cn_dataset_load_isot(o.real.c_str(), o.fake.c_str(), cfg.get(), ds.out()), "loading ISOT");
  } else {
    if (o.train.empty() || o.valid.empty() || o.test.empty()) usage("--dataset liar needs --train, --valid and --test");
    check(cn_dataset_load_liar(o.train.c_str(), o.valid.c_str(), o.test.c_str(), ds.out()), "loading LIAR");
  }
}

void print_line(const char* line, void*) {
  std::printf("%s\n", line);
  std::fflush(stdout);
}

int run_train(const Options& o) {
  Config cfg;
  load_config(cfg, o.config);
  if (o.seed) set_key(cfg, "seed", std::to_string(*o.seed));
  if (!o.meta.empty()) {
    std::string list;
    for (const auto& m : o.meta) list += (list.empty() ? "" : ",") + m;
    set_key(cfg, "metadata", list);
  }
  Dataset ds;
  load_dataset(ds, o, cfg);
  const auto run_dir = fs::path(o.out) / "run" / get_key(cfg, "seed");
  ModelHandle model;
  Report report;
  std::size_t validation = 0;
  check(cn_dataset_size(ds.get(), CN_SPLIT_VALIDATION, &validation), "dataset");
  const int status = cn_train(cfg.get(), ds.get(), o.embeddings.empty() ? nullptr : o.embeddings.c_str(),
                              run_dir.string().c_str(), print_line, nullptr, model.out(),
                              validation ? report.out() : nullptr);
  check(status, "training");
  std::printf("checkpoint %s\n", (run_dir / "best.ckpt").string().c_str());
  if (report.get()) {
    double acc = 0.0;
    check(cn_report_accuracy(report.get(), &acc), "report");
    std::printf("validation_accuracy %.4f\n", acc);
  }
  return 0;
}

int run_evaluate(const Options& o) {
  Config cfg;
  model_config(cfg, o);
  if (o.seed) set_key(cfg, "seed", std::to_string(*o.seed));
  ModelHandle model;
  check(cn_model_load(o.checkpoint.c_str(), cfg.get(), model.out()), "loading checkpoint");
  Dataset ds;
  load_dataset(ds, o, cfg);
  Report report;
  check(cn_model_evaluate(model.get(), ds.get(), CN_SPLIT_TEST, report.out()), "evaluation");
  const auto out = o.out.empty() ? fs::path(o.checkpoint).parent_path() / "eval" : fs::path(o.out);
  check(cn_report_write(report.get(), out.string().c_str()), "writing report");
  double acc = 0.0;
  check(cn_report_accuracy(report.get(), &acc), "report");
  std::printf("accuracy %.4f\n", acc);
  return 0;
}

int run_predict(const Options& o) {
  Config cfg;
  model_config(cfg, o);
  ModelHandle model;
  check(cn_model_load(o.checkpoint.c_str(), cfg.get(), model.out()), "loading checkpoint");
  std::string text = o.text ? *o.text : std::string(std::istreambuf_iterator<char>(std::cin), {});
  std::size_t classes = 0;
  check(cn_model_num_classes(model.get(), &classes), "model");
  std::vector<double> scores(classes);
  std::size_t predicted = 0;
  check(cn_model_predict(model.get(), text.c_str(), scores.data(), scores.size(), &predicted), "prediction");
  std::printf("%s\n", cn_model_class_name(model.get(), predicted));
  for (std::size_t k = 0; k < classes; ++k) std::printf("%s\t%.6f\n", cn_model_class_name(model.get(), k), scores[k]);
  return 0;
}

int run_analyze(const Options& o) {
  Config cfg;
  model_config(cfg, o);
  if (o.seed) set_key(cfg, "seed", std::to_string(*o.seed));
  Dataset ds;
  load_dataset(ds, o, cfg);
  Analysis analysis;
  check(cn_analyze(ds.get(), o.sample.c_str(), o.min_count, o.stopwords.empty() ? nullptr : o.stopwords.c_str(),
                   analysis.out()),
        "analysis");
  if (!o.checkpoint.empty()) {
    ModelHandle model;
    check(cn_model_load(o.checkpoint.c_str(), cfg.get(), model.out()), "loading checkpoint");
    std::size_t classes = 0, predicted = 0, gold = 0;
    check(cn_model_num_classes(model.get(), &classes), "model");
    std::vector<double> scores(classes);
    check(cn_model_predict_example(model.get(), ds.get(), o.sample.c_str(), scores.data(), scores.size(), &predicted,
                                   &gold),
          "prediction");
    std::printf("# gold %s predicted %s\n", cn_model_class_name(model.get(), gold),
                cn_model_class_name(model.get(), predicted));
  }
  std::size_t rows = 0;
  check(cn_analysis_rows(analysis.get(), &rows), "analysis");
  std::printf("word\tsample\tfake_train\treal_train\n");
  for (std::size_t i = 0; i < rows; ++i) {
    const char* word = nullptr;
    double sample = 0, fake = 0, real = 0;
    check(cn_analysis_row(analysis.get(), i, &word, &sample, &fake, &real), "analysis");
    std::printf("%s\t%.6g\t%.6g\t%.6g\n", word, sample, fake, real);
  }
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    const auto path = fs::path(o.out) / ("analysis-" + o.sample + ".tsv");
    check(cn_analysis_write(analysis.get(), path.string().c_str()), "writing analysis");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Capsule-network fake news detection"};
  app.name("capsnews");
  app.require_subcommand(1, 1);
  Options o;

  auto* train = app.add_subcommand("train", "train a model and write its run directory");
  add_dataset_flags(train, o, true);
  train->add_option("--config", o.config, "key = value config file")->required();
  train->add_option("--embeddings", o.embeddings, "pretrained word vectors (text format)");
  train->add_option("--out", o.out, "output root; the run goes to <out>/run/<seed>")->default_val("runs");
  train->add_option("--meta", o.meta, "metadata field (subject,speaker,job,state,party,context,history)")
      ->check(CLI::IsMember({"subject", "speaker", "job", "state", "party", "context", "history"}));
  add_seed_flag(train, o);

  auto* evaluate = app.add_subcommand("evaluate", "evaluate a checkpoint on the test split");
  add_dataset_flags(evaluate, o, true);
  evaluate->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
  evaluate->add_option("--config", o.config, "config replacing the stored model.cfg");
  evaluate->add_option("--out", o.out, "report directory (default: <checkpoint dir>/eval)");
  add_seed_flag(evaluate, o);

  auto* predict = app.add_subcommand("predict", "score one statement (from --text or standard input)");
  predict->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
  predict->add_option("--config", o.config, "config replacing the stored model.cfg");
  predict->add_option("--text", o.text, "statement text");

  auto* analyze = app.add_subcommand("analyze", "word-frequency comparison for one test example");
  add_dataset_flags(analyze, o, true);
  analyze->add_option("--sample", o.sample, "test example id")->required();
  analyze->add_option("--min-count", o.min_count, "keep words seen more than this many times")->default_val(2);
  analyze->add_option("--stopwords", o.stopwords, "stopword list, one per line");
  analyze->add_option("--checkpoint", o.checkpoint, "also print the model's prediction");
  analyze->add_option("--config", o.config, "config (dataset split options)");
  analyze->add_option("--out", o.out, "also write analysis-<id>.tsv here");
  add_seed_flag(analyze, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }

  try {
    if (*train) return run_train(o);
    if (*evaluate) return run_evaluate(o);
    if (*predict) return run_predict(o);
    return run_analyze(o);
  } catch (const Failure& f) {
    std::fprintf(stderr, "capsnews: %s\n", f.message.c_str());
    if (f.exit_code == kUsageError) std::fprintf(stderr, "Run with --help for usage.\n");
    return f.exit_code;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "capsnews: %s\n", e.what());
    return kRuntimeFailure;
  }
}
