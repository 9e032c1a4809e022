#include "capsnews/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "capsnews/errors.hpp"

namespace capsnews {

namespace {

constexpr std::array<char, 8> kMagic{'C', 'A', 'P', 'S', 'C', 'K', 'P', 'T'};

template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(std::is_unsigned_v<T>);
  std::array<char, sizeof(T)> bytes{};
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xffu);
  out.write(bytes.data(), bytes.size());
}

template <typename T>
T get_le(std::istream& in, const std::string& source) {
  std::array<unsigned char, sizeof(T)> bytes{};
  if (!in.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) {
    throw IoError(source + ": truncated checkpoint");
  }
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(bytes[i]) << (8 * i);
  return value;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedArray>& entries) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out.write(kMagic.data(), kMagic.size());
    put_le<std::uint32_t>(out, kCheckpointVersion);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
    for (const auto& e : entries) {
      if (shape_numel(e.shape) != e.values.size()) {
        throw DimensionError("checkpoint entry '" + e.name + "' has inconsistent shape");
      }
      put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
      out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
      put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.shape.size()));
      for (auto d : e.shape) put_le<std::uint64_t>(out, d);
      for (auto v : e.values) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    }
    if (!out) throw IoError("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

std::vector<NamedArray> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const auto source = path.string();
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    throw IoError(source + ": not a checkpoint file");
  }
  const auto version = get_le<std::uint32_t>(in, source);
  if (version != kCheckpointVersion) {
    throw IncompatibleError(source + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = get_le<std::uint32_t>(in, source);
  std::vector<NamedArray> entries;
  entries.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedArray e;
    const auto name_len = get_le<std::uint32_t>(in, source);
    e.name.resize(name_len);
    if (!in.read(e.name.data(), name_len)) throw IoError(source + ": truncated checkpoint");
    const auto rank = get_le<std::uint32_t>(in, source);
    for (std::uint32_t r = 0; r < rank; ++r) e.shape.push_back(get_le<std::uint64_t>(in, source));
    const auto n = shape_numel(e.shape);
    e.values.resize(n);
    for (std::size_t k = 0; k < n; ++k) e.values[k] = std::bit_cast<Real>(get_le<std::uint64_t>(in, source));
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace capsnews
