#pragma once

// Strict JSON helpers: every object read from disk must carry exactly the
// keys the reader knows about, so typos surface as errors instead of
// silently falling back to defaults.

#include <json.hpp>

#include <filesystem>
#include <initializer_list>
#include <string>

#include "nart/common.hpp"

namespace nart {

using Json = nlohmann::json;

Json parse_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const Json& j);

// Rejects unknown keys and reports missing required ones. `optional` keys
// may be absent.
void check_keys(const Json& obj, const std::string& context,
                std::initializer_list<const char*> required,
                std::initializer_list<const char*> optional = {});

// Typed field access with error context.
template <typename T>
T json_get(const Json& obj, const std::string& context, const std::string& key) {
  try {
    return obj.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError(context + ": bad value for '" + key + "': " + e.what());
  }
}

template <typename T>
T json_get_or(const Json& obj, const std::string& context, const std::string& key, T fallback) {
  if (!obj.contains(key)) return fallback;
  return json_get<T>(obj, context, key);
}

}  // namespace nart
