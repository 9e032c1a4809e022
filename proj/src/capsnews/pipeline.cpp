#include "capsnews/pipeline.hpp"

#include <fstream>
#include <sstream>

#include "capsnews/checkpoint.hpp"
#include "capsnews/errors.hpp"

namespace capsnews {

namespace {

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& l : lines) out << l << '\n';
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

// Splits the log stream so each line also lands in train.log.
class TeeBuf : public std::streambuf {
 public:
  TeeBuf(std::streambuf* a, std::streambuf* b) : a_(a), b_(b) {}

 protected:
  int overflow(int c) override {
    if (c == EOF) return !EOF;
    if (a_ && a_->sputc(static_cast<char>(c)) == EOF) return EOF;
    if (b_ && b_->sputc(static_cast<char>(c)) == EOF) return EOF;
    return c;
  }
  int sync() override {
    int r = 0;
    if (a_ && a_->pubsync() != 0) r = -1;
    if (b_ && b_->pubsync() != 0) r = -1;
    return r;
  }

 private:
  std::streambuf* a_;
  std::streambuf* b_;
};

}  // namespace

std::vector<LabeledInput> encode_examples(const std::vector<NewsExample>& examples, const MetadataSpec& spec,
                                          const Vocabulary& vocab, std::size_t max_length) {
  std::vector<LabeledInput> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back({encode_metadata(ex, spec, vocab, max_length), ex.label});
  return out;
}

EncodedInput TrainedModel::encode(const NewsExample& example) const {
  return encode_metadata(example, settings.model.metadata, vocab, settings.model.max_length);
}

EncodedInput TrainedModel::encode_text(std::string_view text) const {
  NewsExample ex;
  ex.tokens = tokenize(text);
  if (ex.tokens.empty()) throw EmptyInputError("statement has no tokens");
  return encode(ex);
}

void TrainedModel::check_labels(const DatasetSplit& data) const {
  if (data.label_names != labels) {
    throw IncompatibleError("dataset has " + std::to_string(data.num_classes()) + " labels but the model was trained on " +
                            std::to_string(labels.size()));
  }
}

EvalReport TrainedModel::evaluate(const std::vector<NewsExample>& examples) const {
  const auto inputs = encode_examples(examples, settings.model.metadata, vocab, settings.model.max_length);
  return capsnews::evaluate(*model, inputs, labels);
}

TrainingRun run_training(Settings settings, const DatasetSplit& data, const std::filesystem::path& embeddings,
                         const std::filesystem::path& run_dir, std::ostream* log) {
  if (data.train.empty()) throw EmptyInputError("empty training split");
  settings.model.num_classes = data.num_classes();
  settings.train.checkpoint_dir = run_dir;
  settings.model.validate();

  TrainingRun run;
  auto& tm = run.trained;
  tm.settings = settings;
  tm.labels = data.label_names;
  std::vector<std::vector<std::string>> corpus;
  corpus.reserve(data.train.size());
  for (const auto& ex : data.train) corpus.push_back(vocabulary_tokens(ex, settings.model.metadata));
  tm.vocab = Vocabulary::build(corpus, settings.vocab_min_count);

  Tensor matrix = load_pretrained(embeddings, tm.vocab, settings.model.embedding_dim, settings.model.seed);
  tm.model = std::make_unique<Model>(build_model(settings.model, tm.vocab, EmbeddingTable(matrix, settings.model.embedding_mode)));

  const auto train_inputs = encode_examples(data.train, settings.model.metadata, tm.vocab, settings.model.max_length);
  const auto val_inputs = encode_examples(data.validation, settings.model.metadata, tm.vocab, settings.model.max_length);

  std::ofstream log_file;
  if (!run_dir.empty()) {
    std::filesystem::create_directories(run_dir);
    tm.vocab.save(run_dir / "vocab.txt");
    write_lines(run_dir / "labels.txt", tm.labels);
    write_key_values(run_dir / "model.cfg", settings.to_key_values());
    log_file.open(run_dir / "train.log", std::ios::trunc);
    if (!log_file) throw IoError("cannot write " + (run_dir / "train.log").string());
  }
  TeeBuf tee(log ? log->rdbuf() : nullptr, log_file.is_open() ? log_file.rdbuf() : nullptr);
  std::ostream both(&tee);
  run.result = train(*tm.model, train_inputs, val_inputs, settings.train, &both);

  if (!val_inputs.empty()) {
    run.validation = capsnews::evaluate(*tm.model, val_inputs, tm.labels);
    if (!run_dir.empty()) write_report(*run.validation, run_dir);
  }
  return run;
}

TrainedModel load_trained(const std::filesystem::path& checkpoint, const Settings* settings) {
  if (!std::filesystem::is_regular_file(checkpoint)) throw IoError("no checkpoint at " + checkpoint.string());
  const auto dir = checkpoint.parent_path().empty() ? std::filesystem::path(".") : checkpoint.parent_path();
  TrainedModel tm;
  tm.settings = settings ? *settings : load_settings(dir / "model.cfg");
  tm.vocab = Vocabulary::load(dir / "vocab.txt");
  tm.labels = read_lines(dir / "labels.txt");
  if (tm.labels.size() != tm.settings.model.num_classes) {
    throw IncompatibleError("labels.txt lists " + std::to_string(tm.labels.size()) + " classes but the config has " +
                            std::to_string(tm.settings.model.num_classes));
  }
  Tensor matrix = Tensor::zeros({tm.vocab.size(), tm.settings.model.embedding_dim});
  tm.model = std::make_unique<Model>(
      build_model(tm.settings.model, tm.vocab, EmbeddingTable(matrix, tm.settings.model.embedding_mode)));
  tm.model->load_state(load_checkpoint(checkpoint));
  return tm;
}

bool is_fake_label(std::size_t label, std::size_t num_classes) { return label < num_classes / 2; }

std::vector<ComparisonRow> analyze_example(const DatasetSplit& data, std::string_view id, std::size_t min_count,
                                           const std::set<std::string>& stopwords) {
  const NewsExample* sample = nullptr;
  for (const auto& ex : data.test) {
    if (ex.id == id) sample = &ex;
  }
  if (!sample) throw NotFoundError("no test example with id '" + std::string(id) + "'");
  std::vector<std::vector<std::string>> fake, real;
  for (const auto& ex : data.train) (is_fake_label(ex.label, data.num_classes()) ? fake : real).push_back(ex.tokens);
  return compare_sample(sample->tokens, profile(real), profile(fake), min_count, stopwords);
}

}  // namespace capsnews
