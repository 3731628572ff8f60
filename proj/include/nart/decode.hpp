#pragma once

// Iterative inference over the masked decoder. A hypothesis starts as
// L_init MASK slots; each iteration runs one parallel decoder pass and
// commits some slots according to the strategy:
//
//  - easy_first:   commit the C = ceil(L/K) most confident still-masked
//                  positions per iteration; commitments are final.
//  - mask_predict: refresh retained posterior rows at positions that were
//                  masked entering the iteration, then re-mask the
//                  ceil(L*(1-k/K)) least confident positions globally;
//                  earlier commitments may be reverted.
//  - schedules:    commit a fixed position chain (left-to-right is the
//                  autoregressive special case; right-to-left mirrored;
//                  custom chains supported).
//
// Output length is either fixed at L_init or inferred from the first pass
// by scanning for the first predicted EOS; shrinking the hypothesis costs
// one extra decoder pass.
//
// The engine is generic over the model: anything with
// decoder_posteriors(tokens, encoded) -> PosteriorGrid works, which is how
// the tests drive it with scripted grids.

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "nart/common.hpp"
#include "nart/model.hpp"
#include "nart/vocab.hpp"

namespace nart {

enum class Strategy { easy_first, mask_predict, left_to_right, right_to_left, custom };
enum class LengthMode { fixed, eos_after_first_pass };

std::string strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& name);
std::string length_mode_name(LengthMode m);
LengthMode length_mode_from_name(const std::string& name);

// Chain of committed-position sets, starting empty and growing to cover
// {0..L-1}.
struct CommitmentSchedule {
  std::vector<std::vector<int>> sets;  // sets[0] must be empty
  int n_steps() const { return static_cast<int>(sets.size()) - 1; }
};

CommitmentSchedule left_to_right_schedule(int length);
CommitmentSchedule right_to_left_schedule(int length);
CommitmentSchedule one_shot_schedule(int length);
void validate_schedule(const CommitmentSchedule& schedule, int length);

struct DecodeConfig {
  Strategy strategy = Strategy::easy_first;
  int k = 3;       // iteration budget
  int l_init = 1;  // initial hypothesis length
  LengthMode length_mode = LengthMode::fixed;
  CommitmentSchedule custom_schedule;  // only read when strategy == custom

  void validate() const;
};

// Sum of probability over real tokens (MASK and PAD excluded); the
// confidence is the renormalized maximum.
double confidence(const double* row, int vocab);

// Argmax over the same legal set.
int argmax_legal(const double* row, int vocab);

// 1 + index of the first row whose legal argmax is EOS; l_init when no row
// predicts EOS. Never grows the hypothesis.
int infer_length(const PosteriorGrid& first_pass, int l_init);

struct IterationTrace {
  int iteration = 0;  // 1-based strategy iteration; 0 marks the length pre-pass
  std::vector<std::pair<int, int>> committed;  // (position, token) set this iteration
  std::vector<int> refreshed;  // positions whose retained row was replaced
  std::vector<int> masked_positions;  // slots still/again masked afterwards
  int masked_after = 0;               // == masked_positions.size()
};

struct DecodeResult {
  std::vector<int> tokens;     // committed sequence truncated before the first EOS
  std::vector<int> committed;  // full committed slots, length L
  int length = 0;              // hypothesis length after any inference
  bool resized = false;
  int passes = 0;  // decoder invocations, including any resize re-pass
  std::vector<IterationTrace> trace;
};

namespace detail {

constexpr int kSlotMasked = -1;

struct HypothesisState {
  int length = 0;
  std::vector<int> slots;                  // token id or kSlotMasked
  std::vector<std::vector<double>> rows;   // retained posterior per position
  std::vector<double> conf;                // confidence of the retained row
  std::vector<int> iteration_committed;    // -1 while masked

  explicit HypothesisState(int l)
      : length(l),
        slots(static_cast<size_t>(l), kSlotMasked),
        rows(static_cast<size_t>(l)),
        conf(static_cast<size_t>(l), 0.0),
        iteration_committed(static_cast<size_t>(l), -1) {}

  std::vector<int> decoder_input() const {
    std::vector<int> input(static_cast<size_t>(length));
    for (int j = 0; j < length; ++j)
      input[static_cast<size_t>(j)] =
          slots[static_cast<size_t>(j)] == kSlotMasked ? kMaskId : slots[static_cast<size_t>(j)];
    return input;
  }

  int masked_count() const {
    int n = 0;
    for (int s : slots) n += s == kSlotMasked ? 1 : 0;
    return n;
  }

  std::vector<int> masked_positions() const {
    std::vector<int> out;
    for (int j = 0; j < length; ++j)
      if (slots[static_cast<size_t>(j)] == kSlotMasked) out.push_back(j);
    return out;
  }
};

// Positions ordered by confidence; ties go to the lower index.
inline std::vector<int> order_by_confidence(const std::vector<double>& conf,
                                            const std::vector<int>& candidates, bool descending) {
  std::vector<int> order = candidates;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double ca = conf[static_cast<size_t>(a)], cb = conf[static_cast<size_t>(b)];
    if (ca != cb) return descending ? ca > cb : ca < cb;
    return a < b;
  });
  return order;
}

inline void finish_result(const HypothesisState& hyp, DecodeResult& res) {
  res.length = hyp.length;
  res.committed.assign(hyp.slots.begin(), hyp.slots.end());
  for (int id : res.committed) {
    if (id == kSlotMasked) throw DecodeError("decode: masked slot survived the iteration budget");
    if (id == kMaskId || id == kPadId)
      throw DecodeError("decode: committed slot holds a reserved token");
  }
  res.tokens.clear();
  for (int id : res.committed) {
    if (id == kEosId) break;
    res.tokens.push_back(id);
  }
}

}  // namespace detail

template <typename Model, typename Enc>
DecodeResult run_decode(const Model& model, const Enc& encoded, const DecodeConfig& cfg) {
  cfg.validate();

  DecodeResult res;
  int length = cfg.l_init;

  // Length pre-pass: decode the all-MASK hypothesis once. With a fixed
  // length (or when inference keeps L_init) this grid doubles as the first
  // iteration's decode; a shrink costs one fresh pass on the new length.
  PosteriorGrid pending;
  bool have_pending = false;
  if (cfg.length_mode == LengthMode::eos_after_first_pass) {
    std::vector<int> all_mask(static_cast<size_t>(length), kMaskId);
    PosteriorGrid first = model.decoder_posteriors(all_mask, encoded);
    ++res.passes;
    const int inferred = infer_length(first, length);
    IterationTrace pre;
    pre.iteration = 0;
    pre.masked_after = inferred;
    for (int j = 0; j < inferred; ++j) pre.masked_positions.push_back(j);
    res.trace.push_back(pre);
    if (inferred != length) {
      length = inferred;
      res.resized = true;
    } else {
      pending = std::move(first);
      have_pending = true;
    }
  }
  if (length < 1) throw DecodeError("decode: inferred an empty hypothesis");

  detail::HypothesisState hyp(length);
  auto next_grid = [&]() {
    if (have_pending) {
      have_pending = false;
      return std::move(pending);
    }
    PosteriorGrid grid = model.decoder_posteriors(hyp.decoder_input(), encoded);
    ++res.passes;
    return grid;
  };

  if (cfg.strategy == Strategy::easy_first) {
    const int c = (length + cfg.k - 1) / cfg.k;
    for (int k = 1; k <= cfg.k && hyp.masked_count() > 0; ++k) {
      PosteriorGrid grid = next_grid();
      if (grid.t_out != length) throw DecodeError("decode: grid length mismatch");
      IterationTrace it;
      it.iteration = k;
      std::vector<int> masked;
      for (int j = 0; j < length; ++j) {
        if (hyp.slots[static_cast<size_t>(j)] != detail::kSlotMasked) continue;
        masked.push_back(j);
        hyp.rows[static_cast<size_t>(j)].assign(grid.row(j), grid.row(j) + grid.vocab);
        hyp.conf[static_cast<size_t>(j)] = confidence(grid.row(j), grid.vocab);
        it.refreshed.push_back(j);
      }
      // Final iteration commits everything still masked.
      const int commit_now =
          k == cfg.k ? static_cast<int>(masked.size())
                     : std::min<int>(c, static_cast<int>(masked.size()));
      std::vector<int> order = detail::order_by_confidence(hyp.conf, masked, true);
      for (int i = 0; i < commit_now; ++i) {
        const int pos = order[static_cast<size_t>(i)];
        const int token = argmax_legal(hyp.rows[static_cast<size_t>(pos)].data(), grid.vocab);
        hyp.slots[static_cast<size_t>(pos)] = token;
        hyp.iteration_committed[static_cast<size_t>(pos)] = k;
        it.committed.emplace_back(pos, token);
      }
      it.masked_positions = hyp.masked_positions();
      it.masked_after = static_cast<int>(it.masked_positions.size());
      res.trace.push_back(it);
    }
  } else if (cfg.strategy == Strategy::mask_predict) {
    for (int k = 1; k <= cfg.k; ++k) {
      PosteriorGrid grid = next_grid();
      if (grid.t_out != length) throw DecodeError("decode: grid length mismatch");
      IterationTrace it;
      it.iteration = k;
      // Retained rows refresh only where the decoder saw MASK.
      for (int j = 0; j < length; ++j) {
        if (hyp.slots[static_cast<size_t>(j)] != detail::kSlotMasked) continue;
        hyp.rows[static_cast<size_t>(j)].assign(grid.row(j), grid.row(j) + grid.vocab);
        hyp.conf[static_cast<size_t>(j)] = confidence(grid.row(j), grid.vocab);
        it.refreshed.push_back(j);
      }
      const int n_mask = static_cast<int>(
          (static_cast<long long>(length) * (cfg.k - k) + cfg.k - 1) / cfg.k);
      std::vector<int> all(static_cast<size_t>(length));
      std::iota(all.begin(), all.end(), 0);
      std::vector<int> order = detail::order_by_confidence(hyp.conf, all, false);
      std::vector<uint8_t> mask_next(static_cast<size_t>(length), 0);
      for (int i = 0; i < n_mask; ++i) mask_next[static_cast<size_t>(order[static_cast<size_t>(i)])] = 1;
      for (int j = 0; j < length; ++j) {
        if (mask_next[static_cast<size_t>(j)]) {
          hyp.slots[static_cast<size_t>(j)] = detail::kSlotMasked;
          hyp.iteration_committed[static_cast<size_t>(j)] = -1;
        } else {
          const int token = argmax_legal(hyp.rows[static_cast<size_t>(j)].data(), grid.vocab);
          if (hyp.slots[static_cast<size_t>(j)] != token ||
              hyp.iteration_committed[static_cast<size_t>(j)] == -1)
            it.committed.emplace_back(j, token);
          hyp.slots[static_cast<size_t>(j)] = token;
          if (hyp.iteration_committed[static_cast<size_t>(j)] == -1)
            hyp.iteration_committed[static_cast<size_t>(j)] = k;
        }
      }
      it.masked_positions = hyp.masked_positions();
      it.masked_after = static_cast<int>(it.masked_positions.size());
      res.trace.push_back(it);
      if (it.masked_after != n_mask)
        throw DecodeError("decode: mask-predict masked count drifted from schedule");
    }
  } else {
    CommitmentSchedule schedule;
    if (cfg.strategy == Strategy::left_to_right) {
      schedule = left_to_right_schedule(length);
    } else if (cfg.strategy == Strategy::right_to_left) {
      schedule = right_to_left_schedule(length);
    } else {
      schedule = cfg.custom_schedule;
    }
    validate_schedule(schedule, length);
    for (int step = 1; step <= schedule.n_steps(); ++step) {
      PosteriorGrid grid = next_grid();
      if (grid.t_out != length) throw DecodeError("decode: grid length mismatch");
      IterationTrace it;
      it.iteration = step;
      // The chain property makes Z_t minus Z_{t-1} exactly the members of
      // Z_t whose slot is still masked.
      for (int pos : schedule.sets[static_cast<size_t>(step)]) {
        if (hyp.slots[static_cast<size_t>(pos)] != detail::kSlotMasked) continue;
        hyp.rows[static_cast<size_t>(pos)].assign(grid.row(pos), grid.row(pos) + grid.vocab);
        hyp.conf[static_cast<size_t>(pos)] = confidence(grid.row(pos), grid.vocab);
        const int token = argmax_legal(grid.row(pos), grid.vocab);
        hyp.slots[static_cast<size_t>(pos)] = token;
        hyp.iteration_committed[static_cast<size_t>(pos)] = step;
        it.committed.emplace_back(pos, token);
        it.refreshed.push_back(pos);
      }
      it.masked_positions = hyp.masked_positions();
      it.masked_after = static_cast<int>(it.masked_positions.size());
      res.trace.push_back(it);
    }
  }

  detail::finish_result(hyp, res);
  return res;
}

// Decode a batch by looping the per-utterance engine; results are
// independent of grouping by construction.
template <typename Model, typename Enc>
std::vector<DecodeResult> decode_many(const Model& model, const std::vector<Enc>& encoded,
                                      const DecodeConfig& cfg) {
  std::vector<DecodeResult> out;
  out.reserve(encoded.size());
  for (const Enc& e : encoded) out.push_back(run_decode(model, e, cfg));
  return out;
}

// Greedy autoregressive baseline: one pass per emitted token, stopping at
// the first predicted EOS (or at max_len). Pass count therefore equals the
// emitted token count including EOS.
template <typename Model, typename Enc>
DecodeResult decode_ar_greedy(const Model& model, const Enc& encoded, int max_len) {
  if (max_len < 1) throw ConfigError("decode: max_len must be at least 1");
  DecodeResult res;
  detail::HypothesisState hyp(max_len);
  int emitted = 0;
  for (int i = 0; i < max_len; ++i) {
    PosteriorGrid grid = model.decoder_posteriors(hyp.decoder_input(), encoded);
    ++res.passes;
    if (grid.t_out != max_len) throw DecodeError("decode: grid length mismatch");
    const int token = argmax_legal(grid.row(i), grid.vocab);
    hyp.slots[static_cast<size_t>(i)] = token;
    hyp.iteration_committed[static_cast<size_t>(i)] = i + 1;
    IterationTrace it;
    it.iteration = i + 1;
    it.committed.emplace_back(i, token);
    it.refreshed.push_back(i);
    for (int j = i + 1; j < max_len; ++j) it.masked_positions.push_back(j);
    it.masked_after = max_len - i - 1;
    res.trace.push_back(it);
    emitted = i + 1;
    if (token == kEosId) break;
  }
  res.length = emitted;
  res.resized = false;
  res.committed.assign(hyp.slots.begin(), hyp.slots.begin() + emitted);
  res.tokens.clear();
  for (int id : res.committed) {
    if (id == kEosId) break;
    res.tokens.push_back(id);
  }
  return res;
}

}  // namespace nart
