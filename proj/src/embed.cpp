#include "neurallog/embed.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

#include "neurallog/core.hpp"
#include "neurallog/hash.hpp"
#include "neurallog/random.hpp"

namespace neurallog::embed {

namespace {

constexpr std::array<unsigned char, 4> kMagic{0x4E, 0x4C, 0x45, 0x4D};
constexpr std::uint16_t kVersion = 1;

template <typename Int>
Int read_le(const unsigned char* p) {
  Int v = 0;
  for (std::size_t i = 0; i < sizeof(Int); ++i) v |= static_cast<Int>(p[i]) << (8 * i);
  return v;
}

template <typename Int>
void write_le(std::ostream& out, Int v) {
  std::array<char, sizeof(Int)> buf{};
  for (std::size_t i = 0; i < sizeof(Int); ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(buf.data(), buf.size());
}

}  // namespace

std::string canonical_key(const MessageTokens& tokens) {
  std::string key;
  for (const auto& t : tokens.tokens) {
    if (!key.empty()) key += ' ';
    key += t;
  }
  return key;
}

std::uint64_t key_hash(std::string_view canonical_key) { return fnv1a64(canonical_key); }

void EmbeddingTable::insert(std::uint64_t hash, std::vector<float> values) {
  if (values.size() != dim_) {
    throw DataError("embedding of length " + std::to_string(values.size()) + " in a table of dim " +
                    std::to_string(dim_));
  }
  if (!rows_.emplace(hash, std::move(values)).second) {
    throw DataError("duplicate embedding key " + to_hex(hash));
  }
}

const std::vector<float>* EmbeddingTable::find(std::string_view canonical_key) const {
  return find_hash(key_hash(canonical_key));
}

const std::vector<float>* EmbeddingTable::find_hash(std::uint64_t hash) const {
  auto it = rows_.find(hash);
  return it == rows_.end() ? nullptr : &it->second;
}

std::vector<std::uint64_t> EmbeddingTable::hashes() const {
  std::vector<std::uint64_t> out;
  out.reserve(rows_.size());
  for (const auto& [h, v] : rows_) out.push_back(h);
  std::sort(out.begin(), out.end());
  return out;
}

EmbeddingTable load_embedding_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), "dim=", 4) == 0) {
    return load_embedding_tsv(path);
  }
  constexpr std::size_t kHeader = 4 + 2 + 4 + 8;
  if (bytes.size() < 4 || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw DataError("not an embedding file: " + path.string());
  }
  if (bytes.size() < kHeader) throw DataError("truncated embedding header in " + path.string());
  const auto version = read_le<std::uint16_t>(bytes.data() + 4);
  if (version != kVersion) {
    throw DataError("unsupported embedding file version " + std::to_string(version));
  }
  const auto dim = read_le<std::uint32_t>(bytes.data() + 6);
  const auto count = read_le<std::uint64_t>(bytes.data() + 10);
  if (dim == 0) throw DataError("embedding dim must be positive");
  const std::size_t record = 8 + 4 * static_cast<std::size_t>(dim);
  const std::size_t payload = bytes.size() - kHeader;
  if (count > payload / record) {
    throw DataError("truncated embedding record " + std::to_string(payload / record) + " of " +
                    std::to_string(count));
  }
  if (payload != count * record) throw DataError("trailing bytes after embedding records");

  EmbeddingTable table(dim);
  const unsigned char* p = bytes.data() + kHeader;
  for (std::uint64_t r = 0; r < count; ++r) {
    const auto hash = read_le<std::uint64_t>(p);
    p += 8;
    std::vector<float> values(dim);
    for (auto& v : values) {
      v = std::bit_cast<float>(read_le<std::uint32_t>(p));
      p += 4;
    }
    table.insert(hash, std::move(values));
  }
  return table;
}

EmbeddingTable load_embedding_tsv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || !line.starts_with("dim=")) {
    throw DataError("not an embedding file: " + path.string());
  }
  if (line.back() == '\r') line.pop_back();
  std::size_t dim = 0;
  {
    const char* b = line.data() + 4;
    auto [ptr, ec] = std::from_chars(b, line.data() + line.size(), dim);
    if (ec != std::errc() || ptr != line.data() + line.size() || dim == 0) {
      throw DataError("bad dim header '" + line + "'", 1);
    }
  }
  EmbeddingTable table(dim);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw DataError("expected key<TAB>values", line_no);
    const std::string_view key(line.data(), tab);
    std::vector<float> values;
    const char* p = line.data() + tab + 1;
    const char* end = line.data() + line.size();
    while (p < end) {
      float v = 0;
      auto [ptr, ec] = std::from_chars(p, end, v);
      if (ec != std::errc()) throw DataError("bad float value", line_no);
      values.push_back(v);
      p = ptr;
      if (p < end) {
        if (*p != ',') throw DataError("expected ',' between values", line_no);
        ++p;
      }
    }
    try {
      table.insert(key_hash(key), std::move(values));
    } catch (const DataError& e) {
      throw DataError(std::string(e.what()) + " (key '" + std::string(key) + "')", line_no);
    }
  }
  return table;
}

void save_embedding_table(const std::filesystem::path& path, const EmbeddingTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(kMagic.data()), kMagic.size());
  write_le<std::uint16_t>(out, kVersion);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(table.dim()));
  write_le<std::uint64_t>(out, table.size());
  for (auto h : table.hashes()) {
    write_le<std::uint64_t>(out, h);
    for (float v : *table.find_hash(h)) write_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
}

MissPolicy parse_miss_policy(std::string_view name) {
  if (name == "error") return MissPolicy::Error;
  if (name == "zero") return MissPolicy::ZeroVector;
  if (name == "fallback") return MissPolicy::FallbackTrainable;
  throw std::invalid_argument("unknown miss policy '" + std::string(name) +
                              "' (expected error, zero or fallback)");
}

std::string_view to_string(MissPolicy policy) {
  switch (policy) {
    case MissPolicy::Error: return "error";
    case MissPolicy::ZeroVector: return "zero";
    case MissPolicy::FallbackTrainable: return "fallback";
  }
  return "error";
}

RowMatrix<double> init_subword_matrix(std::size_t vocab_size, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  RowMatrix<double> m(static_cast<Eigen::Index>(vocab_size), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-0.05, 0.05);
  return m;
}

std::vector<double> template_index_embedding(std::size_t template_id, std::size_t n_templates,
                                             std::size_t dim) {
  if (template_id >= n_templates) {
    throw std::out_of_range("template id " + std::to_string(template_id) + " not below " +
                            std::to_string(n_templates));
  }
  std::vector<double> v(dim, 0.0);
  if (template_id < dim) v[template_id] = 1.0;
  return v;
}

}  // namespace neurallog::embed
