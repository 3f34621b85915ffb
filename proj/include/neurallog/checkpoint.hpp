#pragma once

#include <cstdint>
#include <filesystem>

#include "neurallog/transformer.hpp"

namespace neurallog::model {

struct Checkpoint {
  ModelConfig config;
  std::uint64_t vocab_hash = 0;  // 0 when no vocabulary is involved
  ParamSet<double> params;
};

/// "NLCK", u16 version, the model config, the vocabulary hash, the embedding
/// row count, then every tensor as (name, rows, cols, float32 values), all
/// little-endian.
void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config,
                     std::uint64_t vocab_hash, const ParamSet<double>& params);

/// Throws DataError on a malformed file or a tensor that does not fit the
/// stored config.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace neurallog::model
