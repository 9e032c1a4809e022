#include "capsnews/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "capsnews/errors.hpp"

namespace capsnews {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

double to_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

std::vector<std::size_t> to_size_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_size(key, std::string(trim(item))));
  if (out.empty()) throw ConfigError(key + ": expected a comma-separated list");
  return out;
}

std::string real_str(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

KeyValues parse_key_values(std::string_view text, const std::string& source) {
  KeyValues out;
  std::size_t lineno = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto stop = text.find('\n', start);
    if (stop == std::string_view::npos) stop = text.size();
    ++lineno;
    auto line = text.substr(start, stop - start);
    start = stop + 1;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(source, lineno, "expected key = value");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError(source, lineno, "empty key");
    out[std::string(key)] = std::string(value);
  }
  return out;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_key_values(buffer.str(), path.string());
}

const std::vector<std::string>& known_config_keys() {
  static const std::vector<std::string> keys = {
      "architecture",       "embedding_mode",  "filter_sizes",     "embedding_dim",         "max_length",
      "num_classes",        "conv_channels",   "primary_maps",     "primary_dim",           "conv_caps_window",
      "conv_caps_maps",     "conv_caps_dim",   "class_caps_dim",   "routing_iterations",    "routing_stop_gradient",
      "margin_m_plus",      "margin_m_minus",  "margin_lambda",    "metadata",              "learning_rate",
      "beta1",              "beta2",           "adam_epsilon",     "epochs",                "batch_size",
      "patience",           "seed",            "vocab_min_count",  "isot_test_per_class",   "validation_fraction",
      "keep_epoch_checkpoints",
  };
  return keys;
}

void Settings::apply(const KeyValues& values) {
  for (const auto& [key, _] : values) {
    const auto& keys = known_config_keys();
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) throw ConfigError("unknown config key '" + key + "'");
  }
  if (auto it = values.find("architecture"); it != values.end()) {
    const auto seed = model.seed;
    const auto classes = model.num_classes;
    model = parse_architecture(it->second) == Architecture::LongStatement ? ModelConfig::long_statement()
                                                                          : ModelConfig::short_statement();
    model.seed = seed;
    model.num_classes = classes;
  }
  auto capsules = [&](auto&& edit) {
    for (auto& b : model.branches) edit(b.capsules);
  };
  for (const auto& [key, v] : values) {
    if (key == "architecture") continue;
    if (key == "embedding_mode") model.embedding_mode = parse_embedding_mode(v);
    else if (key == "filter_sizes") {
      const auto sizes = to_size_list(key, v);
      const CapsuleSettings shared = model.branches.empty() ? CapsuleSettings{} : model.branches.front().capsules;
      model.branches.clear();
      for (auto k : sizes) model.branches.push_back({k, shared});
    }
    else if (key == "embedding_dim") model.embedding_dim = to_size(key, v);
    else if (key == "max_length") model.max_length = to_size(key, v);
    else if (key == "num_classes") model.num_classes = to_size(key, v);
    else if (key == "conv_channels") { const auto n = to_size(key, v); capsules([&](auto& c) { c.conv_channels = n; }); }
    else if (key == "primary_maps") { const auto n = to_size(key, v); capsules([&](auto& c) { c.primary_maps = n; }); }
    else if (key == "primary_dim") { const auto n = to_size(key, v); capsules([&](auto& c) { c.primary_dim = n; }); }
    else if (key == "conv_caps_window") { const auto n = to_size(key, v); capsules([&](auto& c) { c.conv_caps_window = n; }); }
    else if (key == "conv_caps_maps") { const auto n = to_size(key, v); capsules([&](auto& c) { c.conv_caps_maps = n; }); }
    else if (key == "conv_caps_dim") { const auto n = to_size(key, v); capsules([&](auto& c) { c.conv_caps_dim = n; }); }
    else if (key == "class_caps_dim") { const auto n = to_size(key, v); capsules([&](auto& c) { c.class_caps_dim = n; }); }
    else if (key == "routing_iterations") { const auto n = to_size(key, v); capsules([&](auto& c) { c.routing_iterations = n; }); }
    else if (key == "routing_stop_gradient") { const auto b = to_bool(key, v); capsules([&](auto& c) { c.routing_stop_gradient = b; }); }
    else if (key == "margin_m_plus") model.loss.m_plus = to_real(key, v);
    else if (key == "margin_m_minus") model.loss.m_minus = to_real(key, v);
    else if (key == "margin_lambda") model.loss.lambda_down = to_real(key, v);
    else if (key == "metadata") model.metadata = MetadataSpec::parse(v);
    else if (key == "learning_rate") train.optimizer.learning_rate = to_real(key, v);
    else if (key == "beta1") train.optimizer.beta1 = to_real(key, v);
    else if (key == "beta2") train.optimizer.beta2 = to_real(key, v);
    else if (key == "adam_epsilon") train.optimizer.epsilon = to_real(key, v);
    else if (key == "epochs") train.epochs = to_size(key, v);
    else if (key == "batch_size") train.batch_size = to_size(key, v);
    else if (key == "patience") train.patience = to_size(key, v);
    else if (key == "seed") {
      const auto seed = to_u64(key, v);
      train.seed = seed;
      model.seed = seed;
      isot.seed = seed;
    }
    else if (key == "vocab_min_count") vocab_min_count = to_size(key, v);
    else if (key == "isot_test_per_class") isot.test_per_class = to_size(key, v);
    else if (key == "validation_fraction") isot.validation_fraction = to_real(key, v);
    else if (key == "keep_epoch_checkpoints") train.keep_epoch_checkpoints = to_bool(key, v);
  }
  if (vocab_min_count < 1) throw ConfigError("vocab_min_count must be at least 1");
  if (!(train.optimizer.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  model.validate();
  train.validate();
}

KeyValues Settings::to_key_values() const {
  KeyValues kv;
  const CapsuleSettings caps = model.branches.empty() ? CapsuleSettings{} : model.branches.front().capsules;
  std::string sizes;
  for (const auto& b : model.branches) sizes += (sizes.empty() ? "" : ",") + std::to_string(b.filter_size);
  kv["architecture"] = std::string(to_string(model.architecture));
  kv["embedding_mode"] = std::string(to_string(model.embedding_mode));
  kv["filter_sizes"] = sizes;
  kv["embedding_dim"] = std::to_string(model.embedding_dim);
  kv["max_length"] = std::to_string(model.max_length);
  kv["num_classes"] = std::to_string(model.num_classes);
  kv["conv_channels"] = std::to_string(caps.conv_channels);
  kv["primary_maps"] = std::to_string(caps.primary_maps);
  kv["primary_dim"] = std::to_string(caps.primary_dim);
  kv["conv_caps_window"] = std::to_string(caps.conv_caps_window);
  kv["conv_caps_maps"] = std::to_string(caps.conv_caps_maps);
  kv["conv_caps_dim"] = std::to_string(caps.conv_caps_dim);
  kv["class_caps_dim"] = std::to_string(caps.class_caps_dim);
  kv["routing_iterations"] = std::to_string(caps.routing_iterations);
  kv["routing_stop_gradient"] = caps.routing_stop_gradient ? "true" : "false";
  kv["margin_m_plus"] = real_str(model.loss.m_plus);
  kv["margin_m_minus"] = real_str(model.loss.m_minus);
  kv["margin_lambda"] = real_str(model.loss.lambda_down);
  kv["metadata"] = model.metadata.enabled() ? model.metadata.to_string() : "none";
  kv["learning_rate"] = real_str(train.optimizer.learning_rate);
  kv["beta1"] = real_str(train.optimizer.beta1);
  kv["beta2"] = real_str(train.optimizer.beta2);
  kv["adam_epsilon"] = real_str(train.optimizer.epsilon);
  kv["epochs"] = std::to_string(train.epochs);
  kv["batch_size"] = std::to_string(train.batch_size);
  kv["patience"] = std::to_string(train.patience);
  kv["seed"] = std::to_string(model.seed);
  kv["vocab_min_count"] = std::to_string(vocab_min_count);
  kv["isot_test_per_class"] = std::to_string(isot.test_per_class);
  kv["validation_fraction"] = real_str(isot.validation_fraction);
  kv["keep_epoch_checkpoints"] = train.keep_epoch_checkpoints ? "true" : "false";
  return kv;
}

Settings load_settings(const std::filesystem::path& path) {
  Settings s;
  s.apply(read_key_values(path));
  return s;
}

void write_key_values(const std::filesystem::path& path, const KeyValues& values) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& [k, v] : values) out << k << " = " << v << '\n';
}

}  // namespace capsnews
