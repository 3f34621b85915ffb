#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "neurallog/preprocess.hpp"
#include "neurallog/wordpiece.hpp"

namespace neurallog::embed {

inline constexpr std::size_t kDefaultDim = 768;

/// Space-joined preprocessed tokens; the lookup key for message embeddings.
std::string canonical_key(const MessageTokens& tokens);

/// FNV-1a 64 of the UTF-8 canonical key, as stored in NLEMB1 records.
std::uint64_t key_hash(std::string_view canonical_key);

/// Externally computed message embeddings keyed by canonical-key hash.
class EmbeddingTable {
 public:
  explicit EmbeddingTable(std::size_t dim = kDefaultDim) : dim_(dim) {}

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return rows_.size(); }

  /// Throws DataError on a duplicate hash or a vector of the wrong length.
  void insert(std::uint64_t hash, std::vector<float> values);
  const std::vector<float>* find(std::string_view canonical_key) const;
  const std::vector<float>* find_hash(std::uint64_t hash) const;

  /// Hashes in ascending order.
  std::vector<std::uint64_t> hashes() const;

 private:
  std::size_t dim_;
  std::unordered_map<std::uint64_t, std::vector<float>> rows_;
};

/// NLEMB1: "NLEM", u16 version 1, u32 dim, u64 count, then per record a u64
/// key hash and dim float32 values, all little-endian. Files starting with
/// "dim=" are read as the debug TSV form (`key<TAB>v1,v2,...`).
EmbeddingTable load_embedding_table(const std::filesystem::path& path);
EmbeddingTable load_embedding_tsv(const std::filesystem::path& path);

/// Writes NLEMB1 with records sorted by key hash.
void save_embedding_table(const std::filesystem::path& path, const EmbeddingTable& table);

enum class MissPolicy { Error, ZeroVector, FallbackTrainable };

MissPolicy parse_miss_policy(std::string_view name);
std::string_view to_string(MissPolicy policy);

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

/// One trainable row per vocabulary piece, seeded uniform in [-0.05, 0.05].
RowMatrix<double> init_subword_matrix(std::size_t vocab_size, std::size_t dim, std::uint64_t seed);

/// Mean of the piece rows; the zero vector for an empty piece list.
template <typename Scalar, typename Derived>
RowVector<Scalar> embed_message_avg(std::span<const wordpiece::PieceId> pieces,
                                    const Eigen::MatrixBase<Derived>& matrix) {
  RowVector<Scalar> out = RowVector<Scalar>::Zero(matrix.cols());
  if (pieces.empty()) return out;
  for (auto id : pieces) out += matrix.row(static_cast<Eigen::Index>(id)).template cast<Scalar>();
  out /= static_cast<Scalar>(pieces.size());
  return out;
}

/// One-hot of `template_id` truncated or zero-padded to `dim`.
/// Throws std::out_of_range unless template_id < n_templates.
std::vector<double> template_index_embedding(std::size_t template_id, std::size_t n_templates,
                                             std::size_t dim);

}  // namespace neurallog::embed
