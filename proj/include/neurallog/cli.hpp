#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>

#include <json.hpp>
#include "neurallog/pipeline.hpp"
#include "neurallog/transformer.hpp"

namespace neurallog::cli {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kInternal = 3 };

/// Everything a run depends on. Serialized as config.json next to a trained
/// model and accepted back through --config.
struct RunConfig {
  std::filesystem::path dataset;
  std::string adapter = "bgl";
  pipeline::PipelineConfig pipeline;
  model::ModelConfig model;
  model::TrainConfig train;
  std::uint64_t seed = 42;
  std::filesystem::path out;
  std::filesystem::path vocab;  // reuse instead of training a vocabulary
  std::string precision = "f64";
  double threshold = 0.5;
};

nlohmann::json to_json(const RunConfig& config);

/// Overlays the keys present in `j`. Throws UsageError on unknown keys or
/// values of the wrong type.
void apply_json(RunConfig& config, const nlohmann::json& j);

/// Entry point of the `neurallog` tool. Returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& log);

}  // namespace neurallog::cli
