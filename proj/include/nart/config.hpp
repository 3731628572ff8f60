#pragma once

// Run configuration shared by the CLI verbs. One JSON file drives an entire
// experiment; every section maps onto the struct that consumes it, unknown
// keys are rejected, and artifacts embed the resolved config so a run can be
// reproduced from its outputs alone.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nart/data.hpp"
#include "nart/decode.hpp"
#include "nart/jsonutil.hpp"
#include "nart/model.hpp"
#include "nart/train.hpp"

namespace nart {

struct EvalSettings {
  std::vector<int64_t> bucket_edges = {1, 6, 11, 16, 21, 41, 61};
};

struct PathsConfig {
  std::string corpus_dir = "corpus";
  std::string checkpoint = "model.ckpt";
  std::string out_dir = "out";
};

struct RunConfig {
  uint64_t seed = 1;
  TaskConfig task;
  ModelConfig model;
  TrainConfig train;
  DecodeConfig decode;
  EvalSettings eval;
  PathsConfig paths;

  void validate() const;
};

Json decode_to_json(const DecodeConfig& cfg);
DecodeConfig decode_from_json(const Json& j, const std::string& context);

Json run_to_json(const RunConfig& cfg);
RunConfig run_from_json(const Json& j);
RunConfig load_run_config(const std::filesystem::path& path);

// Applies one `--set section.key=value` override onto the raw JSON before it
// is parsed into a RunConfig. The value is itself read as JSON when it parses
// (numbers, booleans, arrays), otherwise kept as a plain string.
void apply_override(Json& j, const std::string& assignment);

}  // namespace nart
