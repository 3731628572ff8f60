#pragma once

// Checkpoint layout, format version 1: a fixed magic, a JSON manifest
// (format version, model config + digest, training step, seed, caller
// metadata, tensor table), then every parameter as raw little-endian f32 in
// manifest order. The digest of the architecture fields is checked on load
// so a checkpoint never silently deserializes into a differently shaped
// model.

#include <cstdint>
#include <filesystem>

#include "nart/jsonutil.hpp"
#include "nart/model.hpp"
#include "nart/tensor.hpp"

namespace nart {

void save_checkpoint(const std::filesystem::path& path, Transformer<float>& model, uint64_t step,
                     uint64_t seed, const Json& meta = Json::object());

struct CheckpointInfo {
  ModelConfig config;
  uint64_t step = 0;
  uint64_t seed = 0;
  Json meta;
};

// Reads the manifest only; use it to construct a model to load into.
CheckpointInfo peek_checkpoint(const std::filesystem::path& path);

// Overwrites the parameters of `model`, which must match the stored
// architecture digest.
CheckpointInfo load_checkpoint(const std::filesystem::path& path, Transformer<float>& model);

}  // namespace nart
