#include "capsnews/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "capsnews/errors.hpp"

namespace capsnews {

const NewsExample* DatasetSplit::find(std::string_view id) const {
  for (const auto* part : {&train, &validation, &test}) {
    for (const auto& ex : *part) {
      if (ex.id == id) return &ex;
    }
  }
  return nullptr;
}

namespace {

struct CodePoint {
  char32_t value;
  std::size_t bytes;
};

CodePoint decode_utf8(std::string_view s, std::size_t i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  if (b0 < 0x80) return {b0, 1};
  std::size_t len = 0;
  char32_t cp = 0;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    return {0xFFFD, 1};
  }
  if (i + len > s.size()) return {0xFFFD, 1};
  for (std::size_t k = 1; k < len; ++k) {
    const auto b = static_cast<unsigned char>(s[i + k]);
    if ((b & 0xC0) != 0x80) return {0xFFFD, 1};
    cp = (cp << 6) | (b & 0x3F);
  }
  return {cp, len};
}

bool is_space(char32_t c) {
  if (c == ' ' || (c >= '\t' && c <= '\r')) return true;
  return c == 0x85 || c == 0xA0 || c == 0x1680 || (c >= 0x2000 && c <= 0x200A) || c == 0x2028 || c == 0x2029 ||
         c == 0x202F || c == 0x205F || c == 0x3000;
}

bool is_alnum(char32_t c) {
  if (c < 0x80) return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
  if (c == 0xFFFD) return false;
  if (c >= 0x80 && c <= 0xBF) return false;  // Latin-1 controls, punctuation and symbols
  if (c == 0xD7 || c == 0xF7) return false;
  if (c >= 0x2010 && c <= 0x2BFF) return false;  // general punctuation, symbols, arrows
  if (c >= 0x3000 && c <= 0x303F) return false;
  if (c >= 0xFE10 && c <= 0xFE6F) return false;
  if (c >= 0xFF01 && c <= 0xFF0F) return false;
  if (c >= 0x1F000) return false;  // emoji and pictographs
  return true;
}

std::string strip_token(std::string_view tok) {
  std::size_t begin = 0, end = tok.size();
  while (begin < end) {
    auto cp = decode_utf8(tok, begin);
    if (is_alnum(cp.value)) break;
    begin += cp.bytes;
  }
  // Walk back to the start of the last alphanumeric code point.
  std::size_t last_end = begin;
  for (std::size_t i = begin; i < end;) {
    auto cp = decode_utf8(tok, i);
    if (is_alnum(cp.value)) last_end = i + cp.bytes;
    i += cp.bytes;
  }
  std::string out(tok.substr(begin, last_end - begin));
  for (auto& ch : out) {
    if (ch >= 'A' && ch <= 'Z') ch = static_cast<char>(ch - 'A' + 'a');
  }
  return out;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t i = 0, start = 0;
  auto flush = [&](std::size_t stop) {
    if (stop > start) {
      auto tok = strip_token(text.substr(start, stop - start));
      if (!tok.empty()) tokens.push_back(std::move(tok));
    }
  };
  while (i < text.size()) {
    auto cp = decode_utf8(text, i);
    if (is_space(cp.value)) {
      flush(i);
      start = i + cp.bytes;
    }
    i += cp.bytes;
  }
  flush(text.size());
  return tokens;
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  const std::string source = path.string();

  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> row_records;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t record = 1;
  std::size_t record_start = 1;  // where an open quote began, for error messages

  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    if (!(row.size() == 1 && row[0].empty())) {
      rows.push_back(std::move(row));
      row_records.push_back(record);
    }
    row.clear();
    ++record;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (field_started) throw ParseError(source, record, "quote inside an unquoted field");
        in_quotes = true;
        field_started = true;
        record_start = record;
        break;
      case ',':
        end_field();
        break;
      case '\r':
        if (i + 1 < text.size() && text[i + 1] == '\n') break;
        end_row();
        break;
      case '\n':
        end_row();
        break;
      default:
        field.push_back(c);
        field_started = true;
    }
  }
  if (in_quotes) throw ParseError(source, record_start, "unbalanced quotes");
  if (field_started || !row.empty()) end_row();

  if (!rows.empty()) {
    const auto width = rows.front().size();
    for (std::size_t r = 1; r < rows.size(); ++r) {
      if (rows[r].size() != width) {
        throw ParseError(source, row_records[r],
                         "expected " + std::to_string(width) + " columns, got " + std::to_string(rows[r].size()));
      }
    }
  }
  return rows;
}

namespace {

std::vector<NewsExample> read_isot_file(const std::filesystem::path& path, std::size_t label, std::string_view tag,
                                        std::size_t& rejected) {
  auto rows = read_csv(path);
  if (rows.empty()) throw ParseError(path.string(), 1, "missing header");
  const auto& header = rows.front();
  auto column = [&](std::string_view name) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      std::string h = header[i];
      if (i == 0 && h.rfind("\xEF\xBB\xBF", 0) == 0) h.erase(0, 3);
      if (h == name) return i;
    }
    throw ParseError(path.string(), 1, "missing column '" + std::string(name) + "'");
  };
  column("title");
  const auto text_col = column("text");
  column("subject");
  column("date");

  std::vector<NewsExample> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    NewsExample ex;
    ex.id = std::string(tag) + "-" + std::to_string(r);
    ex.statement = std::move(rows[r][text_col]);
    ex.tokens = tokenize(ex.statement);
    ex.label = label;
    if (ex.tokens.empty()) {
      ++rejected;
      continue;
    }
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace

DatasetSplit load_isot(const std::filesystem::path& real_csv, const std::filesystem::path& fake_csv,
                       const IsotOptions& options) {
  if (!(options.validation_fraction >= 0.0 && options.validation_fraction < 1.0)) {
    throw ConfigError("validation fraction must lie in [0, 1)");
  }
  DatasetSplit split;
  split.label_names.assign(kIsotLabels.begin(), kIsotLabels.end());

  std::vector<NewsExample> pool;
  const std::pair<const std::filesystem::path*, std::size_t> sources[] = {{&real_csv, 1}, {&fake_csv, 0}};
  for (const auto& [path, label] : sources) {
    auto examples = read_isot_file(*path, label, kIsotLabels[label], split.rejected);
    if (examples.size() < options.test_per_class) {
      throw ConfigError(path->string() + " has " + std::to_string(examples.size()) + " usable rows, fewer than the " +
                        std::to_string(options.test_per_class) + " requested for testing");
    }
    std::mt19937_64 rng(options.seed * 2 + label);
    std::shuffle(examples.begin(), examples.end(), rng);
    auto cut = examples.begin() + static_cast<std::ptrdiff_t>(options.test_per_class);
    split.test.insert(split.test.end(), std::make_move_iterator(examples.begin()), std::make_move_iterator(cut));
    pool.insert(pool.end(), std::make_move_iterator(cut), std::make_move_iterator(examples.end()));
  }

  std::mt19937_64 rng(options.seed ^ 0x9E3779B97F4A7C15ull);
  std::shuffle(pool.begin(), pool.end(), rng);
  const auto held_out = static_cast<std::size_t>(std::llround(options.validation_fraction * pool.size()));
  split.validation.assign(std::make_move_iterator(pool.begin()),
                          std::make_move_iterator(pool.begin() + static_cast<std::ptrdiff_t>(held_out)));
  split.train.assign(std::make_move_iterator(pool.begin() + static_cast<std::ptrdiff_t>(held_out)),
                     std::make_move_iterator(pool.end()));
  return split;
}

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::uint32_t parse_count(std::string_view text, const std::string& source, std::size_t line) {
  if (text.empty()) return 0;
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || !(value >= 0.0) || value != std::floor(value) ||
      value > 4e9) {
    throw ParseError(source, line, "bad credit-history count '" + std::string(text) + "'");
  }
  return static_cast<std::uint32_t>(value);
}

std::vector<NewsExample> read_liar_file(const std::filesystem::path& path, std::size_t& rejected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string source = path.string();
  std::vector<NewsExample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cols = split_tabs(line);
    if (cols.size() != 14) {
      throw ParseError(source, lineno, "expected 14 tab-separated columns, got " + std::to_string(cols.size()));
    }
    const auto label_it = std::find(kLiarLabels.begin(), kLiarLabels.end(), cols[1]);
    if (label_it == kLiarLabels.end()) {
      throw LabelError(source + ":" + std::to_string(lineno) + ": unknown label '" + std::string(cols[1]) + "'");
    }
    NewsExample ex;
    ex.id = std::string(cols[0]);
    ex.label = static_cast<std::size_t>(label_it - kLiarLabels.begin());
    ex.statement = std::string(cols[2]);
    ex.tokens = tokenize(ex.statement);
    SpeakerProfile meta;
    meta.subject = std::string(cols[3]);
    meta.speaker = std::string(cols[4]);
    meta.job = std::string(cols[5]);
    meta.state = std::string(cols[6]);
    meta.party = std::string(cols[7]);
    for (std::size_t k = 0; k < 5; ++k) meta.history[k] = parse_count(cols[8 + k], source, lineno);
    meta.context = std::string(cols[13]);
    ex.metadata = std::move(meta);
    if (ex.tokens.empty()) {
      ++rejected;
      continue;
    }
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace

DatasetSplit load_liar(const std::filesystem::path& train_tsv, const std::filesystem::path& valid_tsv,
                       const std::filesystem::path& test_tsv) {
  DatasetSplit split;
  split.label_names.assign(kLiarLabels.begin(), kLiarLabels.end());
  split.train = read_liar_file(train_tsv, split.rejected);
  split.validation = read_liar_file(valid_tsv, split.rejected);
  split.test = read_liar_file(test_tsv, split.rejected);
  return split;
}

std::vector<Batch> make_batches(std::span<const LabeledInput> examples, std::size_t max_length,
                                std::size_t batch_size, std::uint64_t seed, std::size_t epoch) {
  if (batch_size == 0) throw InvalidArgument("batch size must be positive");
  if (max_length == 0) throw InvalidArgument("maximum length must be positive");
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed + 0x632BE59BD9B4E019ull * (epoch + 1));
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    Batch b;
    const std::size_t stop = std::min(order.size(), start + batch_size);
    for (std::size_t k = start; k < stop; ++k) {
      const auto& ex = examples[order[k]];
      TokenIds ids = ex.input.ids;
      if (ids.size() > max_length) ids.resize(max_length);
      b.length = std::max(b.length, ids.size());
      b.ids.push_back(std::move(ids));
      b.histories.push_back(ex.input.history);
      b.labels.push_back(ex.label);
      b.indices.push_back(order[k]);
    }
    for (auto& ids : b.ids) ids.resize(b.length, Vocabulary::kPad);
    batches.push_back(std::move(b));
  }
  return batches;
}

}  // namespace capsnews
