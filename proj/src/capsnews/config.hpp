#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "capsnews/data.hpp"
#include "capsnews/model.hpp"
#include "capsnews/traineval.hpp"

namespace capsnews {

/// Ordered `key = value` pairs; '#' starts a comment.
using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(std::string_view text, const std::string& source = "<config>");
KeyValues read_key_values(const std::filesystem::path& path);

/// Everything one run needs, resolved from a flat config.
struct Settings {
  ModelConfig model = ModelConfig::long_statement();
  TrainRunConfig train;
  IsotOptions isot;
  std::size_t vocab_min_count = 1;

  /// Applies `architecture` first (it resets the architecture defaults),
  /// then every other key. Unknown keys and bad values throw ConfigError.
  void apply(const KeyValues& values);
  /// Round-trips through apply().
  KeyValues to_key_values() const;
};

Settings load_settings(const std::filesystem::path& path);
void write_key_values(const std::filesystem::path& path, const KeyValues& values);

/// Every key Settings understands.
const std::vector<std::string>& known_config_keys();

}  // namespace capsnews
