#pragma once

// Token inventory: three fixed special ids followed by the content tokens.

#include <stdexcept>
#include <string>

#include "nart/common.hpp"

namespace nart {

inline constexpr int kPadId = 0;
inline constexpr int kEosId = 1;
inline constexpr int kMaskId = 2;
inline constexpr int kNumSpecials = 3;

class Vocabulary {
 public:
  explicit Vocabulary(int n_content) : n_content_(n_content) {
    if (n_content < 1) throw ConfigError("vocabulary: need at least one content token");
  }

  int n_content() const { return n_content_; }
  int size() const { return kNumSpecials + n_content_; }  // includes specials

  bool valid_id(int id) const { return id >= 0 && id < size(); }
  bool is_special(int id) const { return id == kPadId || id == kEosId || id == kMaskId; }
  bool is_content(int id) const { return id >= kNumSpecials && id < size(); }

  // k-th content token <-> token id.
  int content_id(int k) const {
    if (k < 0 || k >= n_content_)
      throw std::out_of_range("vocabulary: content index " + std::to_string(k) + " of " +
                              std::to_string(n_content_));
    return kNumSpecials + k;
  }
  int content_index(int id) const {
    if (!is_content(id))
      throw std::out_of_range("vocabulary: id " + std::to_string(id) + " is not a content token");
    return id - kNumSpecials;
  }

  std::string token_text(int id) const {
    if (id == kPadId) return "<pad>";
    if (id == kEosId) return "<eos>";
    if (id == kMaskId) return "<mask>";
    if (!valid_id(id))
      throw std::out_of_range("vocabulary: id " + std::to_string(id) + " out of range");
    return "t" + std::to_string(id - kNumSpecials);
  }

  int parse_token(const std::string& text) const {
    if (text == "<pad>") return kPadId;
    if (text == "<eos>") return kEosId;
    if (text == "<mask>") return kMaskId;
    if (text.size() >= 2 && text[0] == 't') {
      try {
        const int k = std::stoi(text.substr(1));
        return content_id(k);
      } catch (const std::out_of_range&) {
        throw ConfigError("vocabulary: token '" + text + "' outside content range");
      } catch (const std::exception&) {
        // fall through to the unknown-token error
      }
    }
    throw ConfigError("vocabulary: unknown token '" + text + "'");
  }

 private:
  int n_content_;
};

}  // namespace nart
