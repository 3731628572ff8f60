#include "nart/jsonutil.hpp"

#include <fstream>
#include <set>

namespace nart {

Json parse_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw ConfigError(path.string() + ": invalid JSON: " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write failed: " + path.string());
}

void check_keys(const Json& obj, const std::string& context,
                std::initializer_list<const char*> required,
                std::initializer_list<const char*> optional) {
  if (!obj.is_object()) throw ConfigError(context + ": expected a JSON object");
  std::set<std::string> known;
  for (const char* k : required) known.insert(k);
  for (const char* k : optional) known.insert(k);
  for (const auto& item : obj.items()) {
    if (!known.count(item.key()))
      throw ConfigError(context + ": unknown key '" + item.key() + "'");
  }
  for (const char* k : required) {
    if (!obj.contains(k)) throw ConfigError(context + ": missing key '" + std::string(k) + "'");
  }
}

}  // namespace nart
