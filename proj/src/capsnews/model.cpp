#include "capsnews/model.hpp"

#include <algorithm>
#include <map>

#include "capsnews/errors.hpp"

namespace capsnews {

std::string_view to_string(Architecture arch) {
  return arch == Architecture::LongStatement ? "long" : "short";
}

Architecture parse_architecture(std::string_view text) {
  if (text == "long" || text == "long-statement") return Architecture::LongStatement;
  if (text == "short" || text == "short-statement") return Architecture::ShortStatement;
  throw ConfigError("unknown architecture '" + std::string(text) + "'");
}

std::string MetadataSpec::to_string() const {
  std::string out;
  auto put = [&](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += ",";
    out += name;
  };
  put(subject, "subject");
  put(speaker, "speaker");
  put(job, "job");
  put(state, "state");
  put(party, "party");
  put(context, "context");
  put(history, "history");
  return out;
}

MetadataSpec MetadataSpec::parse(std::string_view list) {
  MetadataSpec spec;
  std::size_t start = 0;
  while (start <= list.size()) {
    auto stop = list.find(',', start);
    if (stop == std::string_view::npos) stop = list.size();
    auto item = list.substr(start, stop - start);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (item == "subject") spec.subject = true;
    else if (item == "speaker") spec.speaker = true;
    else if (item == "job") spec.job = true;
    else if (item == "state") spec.state = true;
    else if (item == "party") spec.party = true;
    else if (item == "context") spec.context = true;
    else if (item == "history") spec.history = true;
    else if (!item.empty() && item != "none") throw ConfigError("unknown metadata field '" + std::string(item) + "'");
    start = stop + 1;
  }
  return spec;
}

ModelConfig ModelConfig::long_statement() {
  ModelConfig c;
  c.architecture = Architecture::LongStatement;
  c.embedding_mode = EmbeddingMode::NonStatic;
  for (std::size_t k : {2, 3, 4, 5}) c.branches.push_back({k, {}});
  c.max_length = 1000;
  return c;
}

ModelConfig ModelConfig::short_statement() {
  ModelConfig c;
  c.architecture = Architecture::ShortStatement;
  c.embedding_mode = EmbeddingMode::Static;
  for (std::size_t k : {3, 5}) c.branches.push_back({k, {}});
  c.max_length = 64;
  return c;
}

std::size_t ModelConfig::min_length() const {
  std::size_t need = 1;
  for (const auto& b : branches) need = std::max(need, b.filter_size + b.capsules.conv_caps_window - 1);
  return need;
}

void ModelConfig::validate() const {
  if (branches.empty()) throw ConfigError("a model needs at least one branch");
  if (num_classes < 2) throw ConfigError("a model needs at least two classes");
  if (embedding_dim == 0) throw ConfigError("embedding dimension must be positive");
  if (max_length == 0) throw ConfigError("maximum length must be positive");
  for (const auto& b : branches) {
    if (b.filter_size < 1) throw ConfigError("filter sizes must be at least 1");
    if (b.filter_size > max_length) {
      throw ConfigError("filter size " + std::to_string(b.filter_size) + " exceeds maximum length " +
                        std::to_string(max_length));
    }
    if (b.capsules.routing_iterations < 1) throw ConfigError("routing iterations must be at least 1");
  }
  loss.validate();
}

Model::Model(ModelConfig config, EmbeddingTable embeddings)
    : config_(std::move(config)), embeddings_(std::move(embeddings)) {
  config_.validate();
  if (embeddings_.dim() != config_.embedding_dim) {
    throw DimensionError("embedding table has dimension " + std::to_string(embeddings_.dim()) + ", config expects " +
                         std::to_string(config_.embedding_dim));
  }
  if (embeddings_.mode() != config_.embedding_mode) {
    throw ConfigError("embedding table mode does not match the configuration");
  }
  Rng rng(config_.seed);
  const std::size_t aux = config_.metadata.history ? 5 : 0;
  for (std::size_t i = 0; i < config_.branches.size(); ++i) {
    const auto& b = config_.branches[i];
    const auto& c = b.capsules;
    const std::string prefix = "capsule.branch" + std::to_string(i) + "_k" + std::to_string(b.filter_size);
    const RoutingOptions routing{c.routing_iterations, c.routing_stop_gradient, false};
    branches_.push_back(Branch{
        NGramConv(prefix + ".ngram", b.filter_size, config_.embedding_dim, c.conv_channels, rng),
        PrimaryCapsuleLayer(prefix + ".primary", c.conv_channels, c.primary_maps, c.primary_dim, rng),
        ConvCapsuleLayer(prefix + ".convcaps", c.conv_caps_window, c.primary_maps, c.primary_dim, c.conv_caps_maps,
                         c.conv_caps_dim, routing, rng),
        ClassCapsuleLayer(prefix + ".classcaps", c.conv_caps_maps, c.conv_caps_dim, config_.num_classes,
                          c.class_caps_dim, aux, routing, rng),
    });
  }
}

ModelOutput Model::forward(const EncodedInput& input) const {
  TokenIds ids = input.ids;
  while (!ids.empty() && ids.back() == Vocabulary::kPad) ids.pop_back();
  if (ids.empty()) throw EmptyInputError("empty token sequence");
  if (ids.size() > config_.max_length) ids.resize(config_.max_length);
  if (ids.size() < config_.min_length()) ids.resize(config_.min_length(), Vocabulary::kPad);

  const auto embedded = embeddings_.lookup(ids);
  Tensor aux;
  if (config_.metadata.history) {
    std::array<Real, 5> h{};
    if (input.history) h = *input.history;
    aux = Tensor::from({5}, std::vector<Real>(h.begin(), h.end()));
  }

  ModelOutput out;
  for (const auto& b : branches_) {
    const Tensor features = b.conv.forward(embedded);
    const Tensor primary = b.primary.forward(features);
    const Tensor local = b.conv_caps.forward(primary);
    const Tensor classes = b.class_caps.forward(local, aux);
    out.branch_lengths.push_back(vector_length(classes));
  }
  out.scores = average(out.branch_lengths);
  out.predicted = argmax(out.scores.data());
  return out;
}

ModelOutput Model::predict(const EncodedInput& input) const {
  NoGradGuard guard;
  return forward(input);
}

std::vector<Tensor> Model::trainable_parameters() const {
  std::vector<Tensor> out = embeddings_.trainable();
  for (const auto& b : branches_) {
    for (const Parameterized* layer : std::initializer_list<const Parameterized*>{&b.conv, &b.primary, &b.conv_caps,
                                                                                 &b.class_caps}) {
      out.insert(out.end(), layer->parameters().begin(), layer->parameters().end());
    }
  }
  return out;
}

std::vector<Tensor> Model::named_tensors() const {
  std::vector<Tensor> out = embeddings_.channels();
  auto params = trainable_parameters();
  for (auto& p : params) {
    if (std::none_of(out.begin(), out.end(), [&](const Tensor& t) { return t.node() == p.node(); })) out.push_back(p);
  }
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : named_tensors()) n += t.numel();
  return n;
}

std::vector<NamedArray> Model::state() const {
  std::vector<NamedArray> out;
  for (const auto& t : named_tensors()) {
    out.push_back({t.name(), t.shape(), std::vector<Real>(t.data().begin(), t.data().end())});
  }
  return out;
}

void Model::load_state(const std::vector<NamedArray>& state) {
  std::map<std::string, const NamedArray*> by_name;
  for (const auto& e : state) by_name[e.name] = &e;
  auto tensors = named_tensors();
  if (by_name.size() != tensors.size()) {
    throw IncompatibleError("checkpoint holds " + std::to_string(by_name.size()) + " tensors, model has " +
                            std::to_string(tensors.size()));
  }
  for (const auto& t : tensors) {
    auto it = by_name.find(t.name());
    if (it == by_name.end()) throw IncompatibleError("checkpoint lacks tensor '" + t.name() + "'");
    if (it->second->shape != t.shape()) {
      throw IncompatibleError("tensor '" + t.name() + "' has shape " + shape_str(it->second->shape) +
                              " in the checkpoint, " + shape_str(t.shape()) + " in the model");
    }
  }
  for (auto& t : tensors) {
    const auto& values = by_name[t.name()]->values;
    std::copy(values.begin(), values.end(), t.mutable_data().begin());
  }
}

Model build_model(const ModelConfig& config, const Vocabulary& vocab, EmbeddingTable embeddings) {
  if (embeddings.vocab_size() != vocab.size()) {
    throw DimensionError("embedding table has " + std::to_string(embeddings.vocab_size()) + " rows for a vocabulary of " +
                         std::to_string(vocab.size()));
  }
  return Model(config, std::move(embeddings));
}

Tensor ensemble_loss(std::span<const Tensor> branch_lengths, const Tensor& target, const MarginLossParams& params) {
  if (branch_lengths.empty()) throw ConfigError("ensemble loss needs at least one branch");
  return margin_loss(average(branch_lengths), target, params);
}

std::array<Real, 5> normalize_history(const std::array<std::uint32_t, 5>& counts) {
  std::array<Real, 5> out{};
  Real total = 0.0;
  for (auto c : counts) total += c;
  if (total == 0.0) return out;
  for (std::size_t k = 0; k < 5; ++k) out[k] = counts[k] / total;
  return out;
}

namespace {

std::vector<std::string> categorical_tokens(const NewsExample& example, const MetadataSpec& spec) {
  std::vector<std::string> out;
  if (!example.metadata) return out;
  const auto& m = *example.metadata;
  auto put = [&](bool on, const std::string& field) {
    if (!on) return;
    auto toks = tokenize(field);
    out.insert(out.end(), toks.begin(), toks.end());
  };
  put(spec.subject, m.subject);
  put(spec.speaker, m.speaker);
  put(spec.job, m.job);
  put(spec.state, m.state);
  put(spec.party, m.party);
  put(spec.context, m.context);
  return out;
}

}  // namespace

EncodedInput encode_metadata(const NewsExample& example, const MetadataSpec& spec, const Vocabulary& vocab,
                             std::size_t max_length) {
  EncodedInput enc;
  enc.ids = vocab.encode(example.tokens);
  TokenIds extra;
  if (spec.any_categorical()) {
    extra.push_back(Vocabulary::kSep);
    for (const auto& tok : categorical_tokens(example, spec)) extra.push_back(vocab.id(tok));
  }
  if (extra.size() >= max_length) extra.resize(max_length > 1 ? max_length - 1 : 0);
  const std::size_t room = max_length - extra.size();
  if (enc.ids.size() > room) enc.ids.resize(room);
  enc.ids.insert(enc.ids.end(), extra.begin(), extra.end());
  if (spec.history) {
    std::array<std::uint32_t, 5> counts{};
    if (example.metadata) counts = example.metadata->history;
    enc.history = normalize_history(counts);
  }
  return enc;
}

std::vector<std::string> vocabulary_tokens(const NewsExample& example, const MetadataSpec& spec) {
  std::vector<std::string> out = example.tokens;
  auto extra = categorical_tokens(example, spec);
  out.insert(out.end(), extra.begin(), extra.end());
  return out;
}

std::size_t argmax(std::span<const Real> scores) {
  if (scores.empty()) throw EmptyInputError("argmax of an empty score vector");
  std::size_t best = 0;
  for (std::size_t k = 1; k < scores.size(); ++k) {
    if (scores[k] > scores[best]) best = k;
  }
  return best;
}

}  // namespace capsnews
