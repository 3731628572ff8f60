#include "nart/checkpoint.hpp"

#include <fstream>
#include <utility>
#include <vector>

#include "nart/binio.hpp"

namespace nart {

namespace {

constexpr char kMagic[8] = {'N', 'A', 'R', 'T', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

std::string digest_hex(uint64_t digest) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(digest));
  return std::string(buf);
}

Json read_manifest(std::istream& is, const std::filesystem::path& path) {
  char magic[8];
  detail::read_bytes(is, magic, sizeof(magic), "checkpoint magic");
  if (!std::equal(magic, magic + 8, kMagic))
    throw CheckpointError(path.string() + ": not a checkpoint file (bad magic)");
  const auto version = detail::read_pod<uint32_t>(is, "checkpoint version");
  if (version != kVersion)
    throw CheckpointError(path.string() + ": unsupported checkpoint version " +
                          std::to_string(version) + " (expected " + std::to_string(kVersion) +
                          ")");
  const auto manifest_len = detail::read_pod<uint64_t>(is, "manifest length");
  std::string text(manifest_len, '\0');
  detail::read_bytes(is, text.data(), text.size(), "checkpoint manifest");
  Json manifest = Json::parse(text, nullptr, false);
  if (manifest.is_discarded())
    throw CheckpointError(path.string() + ": checkpoint manifest is not valid JSON");
  check_keys(manifest, "checkpoint manifest",
             {"config_digest", "model", "seed", "step", "tensors"}, {"meta"});
  return manifest;
}

CheckpointInfo info_from_manifest(const Json& manifest) {
  CheckpointInfo info;
  info.config = model_from_json(manifest.at("model"), "checkpoint model config");
  info.step = manifest.at("step").get<uint64_t>();
  info.seed = manifest.at("seed").get<uint64_t>();
  info.meta = manifest.contains("meta") ? manifest.at("meta") : Json::object();
  return info;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, Transformer<float>& model, uint64_t step,
                     uint64_t seed, const Json& meta) {
  const auto& params = model.named_parameters();

  Json tensors = Json::array();
  uint64_t offset = 0;
  for (const auto& [name, tensor] : params) {
    Json entry;
    entry["name"] = name;
    entry["dtype"] = "f32";
    entry["shape"] = tensor->shape();
    entry["offset"] = offset;
    entry["numel"] = tensor->numel();
    tensors.push_back(std::move(entry));
    offset += static_cast<uint64_t>(tensor->numel()) * sizeof(float);
  }

  Json manifest;
  manifest["config_digest"] = digest_hex(model_config_digest(model.config()));
  manifest["model"] = model_to_json(model.config());
  manifest["step"] = step;
  manifest["seed"] = seed;
  manifest["meta"] = meta;
  manifest["tensors"] = std::move(tensors);
  const std::string text = manifest.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  detail::write_bytes(os, kMagic, sizeof(kMagic));
  detail::write_pod(os, kVersion);
  detail::write_pod(os, static_cast<uint64_t>(text.size()));
  detail::write_bytes(os, text.data(), text.size());
  for (const auto& [name, tensor] : params)
    detail::write_bytes(os, tensor->data(), static_cast<size_t>(tensor->numel()) * sizeof(float));
  os.flush();
  if (!os) throw IoError("write failed for " + path.string());
}

CheckpointInfo peek_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return info_from_manifest(read_manifest(is, path));
}

CheckpointInfo load_checkpoint(const std::filesystem::path& path, Transformer<float>& model) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  const Json manifest = read_manifest(is, path);

  const std::string want = digest_hex(model_config_digest(model.config()));
  const auto got = manifest.at("config_digest").get<std::string>();
  if (got != want)
    throw CheckpointError(path.string() + ": config digest mismatch (checkpoint " + got +
                          ", model " + want + "); construct the model from the stored config");

  const auto& params = model.named_parameters();
  const Json& tensors = manifest.at("tensors");
  if (tensors.size() != params.size())
    throw CheckpointError(path.string() + ": expected " + std::to_string(params.size()) +
                          " tensors, found " + std::to_string(tensors.size()));

  // The blob starts right after the manifest; entries store offsets relative
  // to it. Parameter order is the registration order on both sides, so a
  // straight zip is enough once names are confirmed.
  const std::streampos blob_start = is.tellg();
  for (size_t i = 0; i < params.size(); ++i) {
    const Json& entry = tensors.at(i);
    check_keys(entry, "checkpoint tensor entry", {"name", "dtype", "shape", "offset", "numel"},
               {});
    auto& [name, tensor] = params[i];
    if (entry.at("name").get<std::string>() != name)
      throw CheckpointError(path.string() + ": tensor " + std::to_string(i) + " is named " +
                            entry.at("name").get<std::string>() + ", model expects " + name);
    if (entry.at("dtype").get<std::string>() != "f32")
      throw CheckpointError(path.string() + ": tensor " + name + " has unsupported dtype " +
                            entry.at("dtype").get<std::string>());
    if (entry.at("shape").get<Shape>() != tensor->shape())
      throw CheckpointError(path.string() + ": tensor " + name + " has mismatched shape");
    if (entry.at("numel").get<int64_t>() != tensor->numel())
      throw CheckpointError(path.string() + ": tensor " + name + " has mismatched element count");
    is.seekg(blob_start + static_cast<std::streamoff>(entry.at("offset").get<uint64_t>()));
    detail::read_bytes(is, tensor->data(), static_cast<size_t>(tensor->numel()) * sizeof(float),
                       name.c_str());
  }
  return info_from_manifest(manifest);
}

}  // namespace nart
