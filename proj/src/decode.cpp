#include "nart/decode.hpp"

#include <algorithm>
#include <numeric>
#include <set>

namespace nart {

std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::easy_first: return "easy_first";
    case Strategy::mask_predict: return "mask_predict";
    case Strategy::left_to_right: return "left_to_right";
    case Strategy::right_to_left: return "right_to_left";
    case Strategy::custom: return "custom";
  }
  throw ConfigError("decode: unknown strategy value");
}

Strategy strategy_from_name(const std::string& name) {
  if (name == "easy_first") return Strategy::easy_first;
  if (name == "mask_predict") return Strategy::mask_predict;
  if (name == "left_to_right") return Strategy::left_to_right;
  if (name == "right_to_left") return Strategy::right_to_left;
  if (name == "custom") return Strategy::custom;
  throw ConfigError("decode: unknown strategy '" + name + "'");
}

std::string length_mode_name(LengthMode m) {
  return m == LengthMode::fixed ? "fixed" : "eos_after_first_pass";
}

LengthMode length_mode_from_name(const std::string& name) {
  if (name == "fixed") return LengthMode::fixed;
  if (name == "eos_after_first_pass") return LengthMode::eos_after_first_pass;
  throw ConfigError("decode: unknown length mode '" + name + "'");
}

CommitmentSchedule left_to_right_schedule(int length) {
  if (length < 1) throw ConfigError("schedule: length must be at least 1");
  CommitmentSchedule s;
  s.sets.emplace_back();
  for (int t = 0; t < length; ++t) {
    std::vector<int> z = s.sets.back();
    z.push_back(t);
    s.sets.push_back(std::move(z));
  }
  return s;
}

CommitmentSchedule right_to_left_schedule(int length) {
  if (length < 1) throw ConfigError("schedule: length must be at least 1");
  CommitmentSchedule s;
  s.sets.emplace_back();
  for (int t = length - 1; t >= 0; --t) {
    std::vector<int> z = s.sets.back();
    z.push_back(t);
    s.sets.push_back(std::move(z));
  }
  return s;
}

CommitmentSchedule one_shot_schedule(int length) {
  if (length < 1) throw ConfigError("schedule: length must be at least 1");
  CommitmentSchedule s;
  s.sets.emplace_back();
  std::vector<int> all(static_cast<size_t>(length));
  std::iota(all.begin(), all.end(), 0);
  s.sets.push_back(std::move(all));
  return s;
}

void validate_schedule(const CommitmentSchedule& schedule, int length) {
  if (schedule.sets.size() < 2)
    throw ConfigError("schedule: need the empty set plus at least one step");
  if (!schedule.sets.front().empty()) throw ConfigError("schedule: first set must be empty");
  std::set<int> prev;
  for (size_t t = 1; t < schedule.sets.size(); ++t) {
    std::set<int> cur;
    for (int pos : schedule.sets[t]) {
      if (pos < 0 || pos >= length)
        throw ConfigError("schedule: position " + std::to_string(pos) + " outside hypothesis of length " +
                          std::to_string(length));
      if (!cur.insert(pos).second)
        throw ConfigError("schedule: duplicate position " + std::to_string(pos) + " in one set");
    }
    if (cur.size() <= prev.size())
      throw ConfigError("schedule: sets must grow strictly at step " + std::to_string(t));
    for (int pos : prev)
      if (!cur.count(pos))
        throw ConfigError("schedule: set at step " + std::to_string(t) +
                          " drops previously committed position " + std::to_string(pos));
    prev = std::move(cur);
  }
  if (static_cast<int>(prev.size()) != length)
    throw ConfigError("schedule: final set must cover all " + std::to_string(length) + " positions");
}

void DecodeConfig::validate() const {
  if (k < 1) throw ConfigError("decode: K must be at least 1");
  if (l_init < 1) throw ConfigError("decode: L_init must be at least 1");
  if (strategy == Strategy::custom && length_mode != LengthMode::fixed)
    throw ConfigError("decode: a custom schedule requires the fixed length mode");
}

double confidence(const double* row, int vocab) {
  double denom = 0.0;
  double best = 0.0;
  for (int v = 0; v < vocab; ++v) {
    if (v == kMaskId || v == kPadId) continue;
    denom += row[v];
    best = std::max(best, row[v]);
  }
  if (denom < 1e-300) throw NumericError("confidence: no probability mass on real tokens");
  return best / denom;
}

int argmax_legal(const double* row, int vocab) {
  int best = -1;
  double best_p = -1.0;
  for (int v = 0; v < vocab; ++v) {
    if (v == kMaskId || v == kPadId) continue;
    if (row[v] > best_p) {
      best_p = row[v];
      best = v;
    }
  }
  if (best < 0) throw NumericError("argmax: no legal token available");
  return best;
}

int infer_length(const PosteriorGrid& first_pass, int l_init) {
  if (first_pass.t_out != l_init)
    throw ShapeError("infer_length: grid has " + std::to_string(first_pass.t_out) +
                     " rows, expected " + std::to_string(l_init));
  for (int t = 0; t < first_pass.t_out; ++t)
    if (argmax_legal(first_pass.row(t), first_pass.vocab) == kEosId) return t + 1;
  return l_init;
}

}  // namespace nart
