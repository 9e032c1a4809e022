#include "capsnews/capsnews.h"

#include <cstring>
#include <fstream>
#include <memory>
#include <new>
#include <sstream>
#include <string>

#include "capsnews/errors.hpp"
#include "capsnews/pipeline.hpp"

using namespace capsnews;

namespace {

thread_local std::string g_last_error;

template <typename T, std::uint32_t Magic>
struct Handle {
  std::uint32_t magic = Magic;
  T value;

  template <typename... Args>
  explicit Handle(Args&&... args) : value(std::forward<Args>(args)...) {}
  ~Handle() { magic = 0; }
};

int fail(int status, const std::string& message) {
  g_last_error = message;
  return status;
}

int status_for(Error::Kind kind) {
  switch (kind) {
    case Error::Kind::InvalidArgument: return CN_ERR_INVALID_ARGUMENT;
    case Error::Kind::Dimension: return CN_ERR_DIMENSION;
    case Error::Kind::SequenceTooShort: return CN_ERR_SEQUENCE_TOO_SHORT;
    case Error::Kind::Rank: return CN_ERR_RANK;
    case Error::Kind::UninitializedGradient: return CN_ERR_UNINITIALIZED_GRADIENT;
    case Error::Kind::Parse: return CN_ERR_PARSE;
    case Error::Kind::Label: return CN_ERR_LABEL;
    case Error::Kind::EmptyInput: return CN_ERR_EMPTY_INPUT;
    case Error::Kind::OutOfVocabulary: return CN_ERR_OUT_OF_VOCABULARY;
    case Error::Kind::Alignment: return CN_ERR_ALIGNMENT;
    case Error::Kind::Config: return CN_ERR_CONFIG;
    case Error::Kind::Divergence: return CN_ERR_DIVERGENCE;
    case Error::Kind::Incompatible: return CN_ERR_INCOMPATIBLE;
    case Error::Kind::Io: return CN_ERR_IO;
    case Error::Kind::NotFound: return CN_ERR_NOT_FOUND;
  }
  return CN_ERR_INTERNAL;
}

struct BufferTooSmall {
  std::string message;
};

template <typename F>
int guarded(F&& body) {
  try {
    body();
    return CN_OK;
  } catch (const BufferTooSmall& e) {
    return fail(CN_ERR_BUFFER_TOO_SMALL, e.message);
  } catch (const Error& e) {
    return fail(status_for(e.kind()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(CN_ERR_INTERNAL, "out of memory");
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(CN_ERR_IO, e.what());
  } catch (const std::exception& e) {
    return fail(CN_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(CN_ERR_INTERNAL, "unknown error");
  }
}

void require(const void* p, const char* name) {
  if (!p) throw InvalidArgument(std::string(name) + " is null");
}

template <typename H>
auto& unwrap(H* h, std::uint32_t magic, const char* name) {
  require(h, name);
  if (h->magic != magic) throw InvalidArgument(std::string(name) + " is not a live handle");
  return h->value;
}

struct ConfigState {
  KeyValues values;
  Settings settings;
};

struct AnalysisState {
  std::vector<ComparisonRow> rows;
};

constexpr std::uint32_t kConfigMagic = 0x434e4346;
constexpr std::uint32_t kDatasetMagic = 0x434e4453;
constexpr std::uint32_t kModelMagic = 0x434e4d44;
constexpr std::uint32_t kReportMagic = 0x434e5250;
constexpr std::uint32_t kAnalysisMagic = 0x434e414e;

const std::vector<NewsExample>& split_of(const DatasetSplit& d, int split) {
  switch (split) {
    case CN_SPLIT_TRAIN: return d.train;
    case CN_SPLIT_VALIDATION: return d.validation;
    case CN_SPLIT_TEST: return d.test;
  }
  throw InvalidArgument("unknown split " + std::to_string(split));
}

void copy_scores(const ModelOutput& out, double* scores, std::size_t cap, std::size_t* predicted) {
  const auto n = out.scores.numel();
  if (scores) {
    if (cap < n) throw BufferTooSmall{"score buffer holds " + std::to_string(cap) + " of " + std::to_string(n)};
    std::memcpy(scores, out.scores.data().data(), n * sizeof(double));
  }
  if (predicted) *predicted = out.predicted;
}

}  // namespace

struct cn_config : Handle<ConfigState, kConfigMagic> {};
struct cn_dataset : Handle<DatasetSplit, kDatasetMagic> {
  using Handle::Handle;
};
struct cn_model : Handle<TrainedModel, kModelMagic> {
  using Handle::Handle;
};
struct cn_report : Handle<EvalReport, kReportMagic> {
  using Handle::Handle;
};
struct cn_analysis : Handle<AnalysisState, kAnalysisMagic> {};

extern "C" {

const char* cn_version(void) { return "1.0.0"; }

const char* cn_last_error(void) { return g_last_error.c_str(); }

const char* cn_status_string(int status) {
  switch (status) {
    case CN_OK: return "ok";
    case CN_ERR_INVALID_ARGUMENT: return "invalid argument";
    case CN_ERR_DIMENSION: return "dimension mismatch";
    case CN_ERR_SEQUENCE_TOO_SHORT: return "sequence too short";
    case CN_ERR_RANK: return "rank error";
    case CN_ERR_UNINITIALIZED_GRADIENT: return "uninitialized gradient";
    case CN_ERR_PARSE: return "parse error";
    case CN_ERR_LABEL: return "label error";
    case CN_ERR_EMPTY_INPUT: return "empty input";
    case CN_ERR_OUT_OF_VOCABULARY: return "out of vocabulary";
    case CN_ERR_ALIGNMENT: return "alignment error";
    case CN_ERR_CONFIG: return "config error";
    case CN_ERR_DIVERGENCE: return "training diverged";
    case CN_ERR_INCOMPATIBLE: return "incompatible";
    case CN_ERR_IO: return "i/o error";
    case CN_ERR_NOT_FOUND: return "not found";
    case CN_ERR_BUFFER_TOO_SMALL: return "buffer too small";
    case CN_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

int cn_config_create(cn_config** out) {
  return guarded([&] {
    require(out, "out");
    *out = new cn_config();
  });
}

int cn_config_load(const char* path, cn_config** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    auto cfg = std::make_unique<cn_config>();
    cfg->value.values = read_key_values(path);
    cfg->value.settings.apply(cfg->value.values);
    *out = cfg.release();
  });
}

int cn_config_set(cn_config* config, const char* key, const char* value) {
  return guarded([&] {
    auto& state = unwrap(config, kConfigMagic, "config");
    require(key, "key");
    require(value, "value");
    KeyValues next = state.values;
    next[key] = value;
    Settings resolved;
    resolved.apply(next);
    state.values = std::move(next);
    state.settings = std::move(resolved);
  });
}

int cn_config_get(const cn_config* config, const char* key, char* buf, size_t cap, size_t* needed) {
  return guarded([&] {
    const auto& state = unwrap(config, kConfigMagic, "config");
    require(key, "key");
    const auto all = state.settings.to_key_values();
    auto it = all.find(key);
    if (it == all.end()) throw ConfigError(std::string("unknown config key '") + key + "'");
    const auto size = it->second.size() + 1;
    if (needed) *needed = size;
    if (!buf || cap < size) throw BufferTooSmall{"value of '" + std::string(key) + "' needs " + std::to_string(size) + " bytes"};
    std::memcpy(buf, it->second.c_str(), size);
  });
}

int cn_config_save(const cn_config* config, const char* path) {
  return guarded([&] {
    const auto& state = unwrap(config, kConfigMagic, "config");
    require(path, "path");
    write_key_values(path, state.settings.to_key_values());
  });
}

void cn_config_destroy(cn_config* config) {
  if (config && config->magic == kConfigMagic) delete config;
}

int cn_dataset_load_isot(const char* real_csv, const char* fake_csv, const cn_config* config, cn_dataset** out) {
  return guarded([&] {
    require(real_csv, "real_csv");
    require(fake_csv, "fake_csv");
    require(out, "out");
    const IsotOptions options = config ? unwrap(config, kConfigMagic, "config").settings.isot : IsotOptions{};
    *out = new cn_dataset(load_isot(real_csv, fake_csv, options));
  });
}

int cn_dataset_load_liar(const char* train_tsv, const char* valid_tsv, const char* test_tsv, cn_dataset** out) {
  return guarded([&] {
    require(train_tsv, "train_tsv");
    require(valid_tsv, "valid_tsv");
    require(test_tsv, "test_tsv");
    require(out, "out");
    *out = new cn_dataset(load_liar(train_tsv, valid_tsv, test_tsv));
  });
}

int cn_dataset_size(const cn_dataset* dataset, int split, size_t* out) {
  return guarded([&] {
    const auto& d = unwrap(dataset, kDatasetMagic, "dataset");
    require(out, "out");
    *out = split_of(d, split).size();
  });
}

int cn_dataset_num_classes(const cn_dataset* dataset, size_t* out) {
  return guarded([&] {
    const auto& d = unwrap(dataset, kDatasetMagic, "dataset");
    require(out, "out");
    *out = d.num_classes();
  });
}

int cn_dataset_rejected(const cn_dataset* dataset, size_t* out) {
  return guarded([&] {
    const auto& d = unwrap(dataset, kDatasetMagic, "dataset");
    require(out, "out");
    *out = d.rejected;
  });
}

void cn_dataset_destroy(cn_dataset* dataset) {
  if (dataset && dataset->magic == kDatasetMagic) delete dataset;
}

int cn_train(const cn_config* config, const cn_dataset* dataset, const char* embeddings_path, const char* run_dir,
             cn_log_fn log, void* user, cn_model** out_model, cn_report** out_validation_report) {
  return guarded([&] {
    const auto& cfg = unwrap(config, kConfigMagic, "config");
    const auto& data = unwrap(dataset, kDatasetMagic, "dataset");
    require(run_dir, "run_dir");

    struct LineSink : std::stringbuf {
      cn_log_fn fn;
      void* user;
      LineSink(cn_log_fn f, void* u) : fn(f), user(u) {}
      int sync() override {
        std::string text = str();
        std::size_t start = 0;
        for (auto nl = text.find('\n'); nl != std::string::npos; nl = text.find('\n', start)) {
          fn(text.substr(start, nl - start).c_str(), user);
          start = nl + 1;
        }
        str(text.substr(start));
        return 0;
      }
    };
    std::unique_ptr<LineSink> sink;
    std::unique_ptr<std::ostream> sink_stream;
    if (log) {
      sink = std::make_unique<LineSink>(log, user);
      sink_stream = std::make_unique<std::ostream>(sink.get());
    }

    auto run = run_training(cfg.settings, data, embeddings_path ? embeddings_path : "", run_dir, sink_stream.get());
    if (sink_stream) sink_stream->flush();

    std::unique_ptr<cn_report> report;
    if (out_validation_report) {
      if (!run.validation) throw EmptyInputError("the dataset has no validation split");
      report = std::make_unique<cn_report>(std::move(*run.validation));
    }
    if (out_model) *out_model = new cn_model(std::move(run.trained));
    if (out_validation_report) *out_validation_report = report.release();
  });
}

int cn_model_load(const char* checkpoint, const cn_config* config, cn_model** out) {
  return guarded([&] {
    require(checkpoint, "checkpoint");
    require(out, "out");
    const Settings* settings = config ? &unwrap(config, kConfigMagic, "config").settings : nullptr;
    *out = new cn_model(load_trained(checkpoint, settings));
  });
}

int cn_model_num_classes(const cn_model* model, size_t* out) {
  return guarded([&] {
    const auto& m = unwrap(model, kModelMagic, "model");
    require(out, "out");
    *out = m.labels.size();
  });
}

int cn_model_parameter_count(const cn_model* model, size_t* out) {
  return guarded([&] {
    const auto& m = unwrap(model, kModelMagic, "model");
    require(out, "out");
    *out = m.model->parameter_count();
  });
}

const char* cn_model_class_name(const cn_model* model, size_t index) {
  if (!model || model->magic != kModelMagic || index >= model->value.labels.size()) return nullptr;
  return model->value.labels[index].c_str();
}

int cn_model_predict(const cn_model* model, const char* text, double* scores, size_t cap, size_t* predicted) {
  return guarded([&] {
    const auto& m = unwrap(model, kModelMagic, "model");
    require(text, "text");
    copy_scores(m.model->predict(m.encode_text(text)), scores, cap, predicted);
  });
}

int cn_model_predict_example(const cn_model* model, const cn_dataset* dataset, const char* example_id,
                             double* scores, size_t cap, size_t* predicted, size_t* gold) {
  return guarded([&] {
    const auto& m = unwrap(model, kModelMagic, "model");
    const auto& d = unwrap(dataset, kDatasetMagic, "dataset");
    require(example_id, "example_id");
    m.check_labels(d);
    const NewsExample* ex = d.find(example_id);
    if (!ex) throw NotFoundError(std::string("no example with id '") + example_id + "'");
    copy_scores(m.model->predict(m.encode(*ex)), scores, cap, predicted);
    if (gold) *gold = ex->label;
  });
}

int cn_model_evaluate(const cn_model* model, const cn_dataset* dataset, int split, cn_report** out) {
  return guarded([&] {
    const auto& m = unwrap(model, kModelMagic, "model");
    const auto& d = unwrap(dataset, kDatasetMagic, "dataset");
    require(out, "out");
    m.check_labels(d);
    *out = new cn_report(m.evaluate(split_of(d, split)));
  });
}

void cn_model_destroy(cn_model* model) {
  if (model && model->magic == kModelMagic) delete model;
}

int cn_report_accuracy(const cn_report* report, double* out) {
  return guarded([&] {
    const auto& r = unwrap(report, kReportMagic, "report");
    require(out, "out");
    *out = r.accuracy;
  });
}

int cn_report_total(const cn_report* report, uint64_t* out) {
  return guarded([&] {
    const auto& r = unwrap(report, kReportMagic, "report");
    require(out, "out");
    *out = r.total;
  });
}

int cn_report_num_classes(const cn_report* report, size_t* out) {
  return guarded([&] {
    const auto& r = unwrap(report, kReportMagic, "report");
    require(out, "out");
    *out = r.num_classes();
  });
}

int cn_report_confusion(const cn_report* report, size_t true_class, size_t predicted_class, uint64_t* out) {
  return guarded([&] {
    const auto& r = unwrap(report, kReportMagic, "report");
    require(out, "out");
    if (true_class >= r.num_classes() || predicted_class >= r.num_classes()) {
      throw LabelError("class index outside the " + std::to_string(r.num_classes()) + "-class report");
    }
    *out = r.confusion[true_class][predicted_class];
  });
}

int cn_report_binary(const cn_report* report, uint64_t* tp, uint64_t* tn, uint64_t* fp, uint64_t* fn) {
  return guarded([&] {
    const auto& r = unwrap(report, kReportMagic, "report");
    if (!r.binary) throw InvalidArgument("binary counts need a two-class report");
    if (tp) *tp = r.binary->tp;
    if (tn) *tn = r.binary->tn;
    if (fp) *fp = r.binary->fp;
    if (fn) *fn = r.binary->fn;
  });
}

int cn_report_write(const cn_report* report, const char* dir) {
  return guarded([&] {
    const auto& r = unwrap(report, kReportMagic, "report");
    require(dir, "dir");
    write_report(r, dir);
  });
}

void cn_report_destroy(cn_report* report) {
  if (report && report->magic == kReportMagic) delete report;
}

int cn_analyze(const cn_dataset* dataset, const char* example_id, size_t min_count, const char* stopwords_path,
               cn_analysis** out) {
  return guarded([&] {
    const auto& d = unwrap(dataset, kDatasetMagic, "dataset");
    require(example_id, "example_id");
    require(out, "out");
    const auto stopwords = stopwords_path ? load_stopwords(stopwords_path) : default_stopwords();
    auto a = std::make_unique<cn_analysis>();
    a->value.rows = analyze_example(d, example_id, min_count, stopwords);
    *out = a.release();
  });
}

int cn_analysis_rows(const cn_analysis* analysis, size_t* out) {
  return guarded([&] {
    const auto& a = unwrap(analysis, kAnalysisMagic, "analysis");
    require(out, "out");
    *out = a.rows.size();
  });
}

int cn_analysis_row(const cn_analysis* analysis, size_t index, const char** word, double* sample, double* fake,
                    double* real) {
  return guarded([&] {
    const auto& a = unwrap(analysis, kAnalysisMagic, "analysis");
    if (index >= a.rows.size()) throw InvalidArgument("row index out of range");
    const auto& r = a.rows[index];
    if (word) *word = r.word.c_str();
    if (sample) *sample = r.sample_frequency;
    if (fake) *fake = r.fake_frequency;
    if (real) *real = r.real_frequency;
  });
}

int cn_analysis_write(const cn_analysis* analysis, const char* path) {
  return guarded([&] {
    const auto& a = unwrap(analysis, kAnalysisMagic, "analysis");
    require(path, "path");
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError(std::string("cannot write ") + path);
    out << "word\tsample\tfake_train\treal_train\n";
    write_comparison(out, a.rows);
    if (!out) throw IoError(std::string("cannot write ") + path);
  });
}

void cn_analysis_destroy(cn_analysis* analysis) {
  if (analysis && analysis->magic == kAnalysisMagic) delete analysis;
}

}  // extern "C"
