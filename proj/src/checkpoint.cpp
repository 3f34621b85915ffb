#include "neurallog/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

namespace neurallog::model {

namespace {

constexpr std::array<char, 4> kMagic{'N', 'L', 'C', 'K'};
constexpr std::uint16_t kVersion = 1;

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  template <typename Int>
  void put(Int v) {
    std::array<char, sizeof(Int)> buf{};
    for (std::size_t i = 0; i < sizeof(Int); ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out_.write(buf.data(), buf.size());
  }
  void put_f64(double v) { put(std::bit_cast<std::uint64_t>(v)); }
  void put_f32(float v) { put(std::bit_cast<std::uint32_t>(v)); }
  void put_string(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  Reader(const std::vector<unsigned char>& bytes, std::string source)
      : bytes_(bytes), source_(std::move(source)) {}

  template <typename Int>
  Int get() {
    need(sizeof(Int));
    Int v = 0;
    for (std::size_t i = 0; i < sizeof(Int); ++i) v |= static_cast<Int>(bytes_[pos_ + i]) << (8 * i);
    pos_ += sizeof(Int);
    return v;
  }
  double get_f64() { return std::bit_cast<double>(get<std::uint64_t>()); }
  float get_f32() { return std::bit_cast<float>(get<std::uint32_t>()); }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw DataError("truncated checkpoint " + source_);
  }

  const std::vector<unsigned char>& bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config,
                     std::uint64_t vocab_hash, const ParamSet<double>& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  Writer w(out);
  out.write(kMagic.data(), kMagic.size());
  w.put(kVersion);
  w.put(static_cast<std::uint32_t>(config.dim));
  w.put(static_cast<std::uint32_t>(config.heads));
  w.put(static_cast<std::uint32_t>(config.ffn_size));
  w.put(static_cast<std::uint32_t>(config.layers));
  w.put_f64(config.dropout);
  w.put(static_cast<std::uint32_t>(config.seq_len));
  w.put(static_cast<std::uint32_t>(config.classes));
  w.put(static_cast<std::uint8_t>(config.positional_encoding ? 1 : 0));
  w.put(vocab_hash);
  const auto& layout = params.layout();
  const auto emb = layout.embedding();
  w.put(static_cast<std::uint32_t>(emb ? layout.tensors()[*emb].rows : 0));
  w.put(static_cast<std::uint32_t>(layout.tensors().size()));
  for (std::size_t i = 0; i < layout.tensors().size(); ++i) {
    const auto& info = layout.tensors()[i];
    w.put_string(info.name);
    w.put(static_cast<std::uint32_t>(info.rows));
    w.put(static_cast<std::uint32_t>(info.cols));
    const auto t = params.tensor(i);
    for (Eigen::Index j = 0; j < t.size(); ++j) w.put_f32(static_cast<float>(t.data()[j]));
  }
  if (!out) throw DataError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
  if (bytes.size() < kMagic.size() || std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
    throw DataError("not a checkpoint file: " + path.string());
  }
  std::vector<unsigned char> body(bytes.begin() + kMagic.size(), bytes.end());
  Reader r(body, path.string());
  if (const auto version = r.get<std::uint16_t>(); version != kVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  ck.config.dim = r.get<std::uint32_t>();
  ck.config.heads = r.get<std::uint32_t>();
  ck.config.ffn_size = r.get<std::uint32_t>();
  ck.config.layers = r.get<std::uint32_t>();
  ck.config.dropout = r.get_f64();
  ck.config.seq_len = r.get<std::uint32_t>();
  ck.config.classes = r.get<std::uint32_t>();
  ck.config.positional_encoding = r.get<std::uint8_t>() != 0;
  ck.vocab_hash = r.get<std::uint64_t>();
  const auto embedding_rows = r.get<std::uint32_t>();
  try {
    ck.config.validate();
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("checkpoint config: ") + e.what());
  }
  ck.params = ParamSet<double>(ParamLayout::build(ck.config, embedding_rows));
  const auto& layout = ck.params.layout();
  const auto count = r.get<std::uint32_t>();
  if (count != layout.tensors().size()) {
    throw DataError("checkpoint holds " + std::to_string(count) + " tensors, config implies " +
                    std::to_string(layout.tensors().size()));
  }
  for (std::size_t i = 0; i < count; ++i) {
    const auto& info = layout.tensors()[i];
    const auto name = r.get_string();
    const auto rows = r.get<std::uint32_t>();
    const auto cols = r.get<std::uint32_t>();
    if (name != info.name || rows != info.rows || cols != info.cols) {
      throw DataError("checkpoint tensor '" + name + "' " + std::to_string(rows) + "x" +
                      std::to_string(cols) + " does not match expected '" + info.name + "' " +
                      std::to_string(info.rows) + "x" + std::to_string(info.cols));
    }
    auto t = ck.params.tensor(i);
    for (Eigen::Index j = 0; j < t.size(); ++j) t.data()[j] = r.get_f32();
  }
  if (!r.done()) throw DataError("trailing bytes in checkpoint " + path.string());
  if (!ck.params.all_finite()) throw DataError("checkpoint holds non-finite values");
  return ck;
}

}  // namespace neurallog::model
