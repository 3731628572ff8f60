#pragma once

// Decoder-pass benchmark: the autoregressive greedy baseline against the
// iterative strategies at several iteration budgets, over one corpus split.
// Pass counts come from the model's own decoder counter, wall time is the
// median over repetitions, and speedups are pass-count ratios against the
// baseline, so they do not depend on machine load.

#include <cstdint>
#include <string>
#include <vector>

#include "nart/config.hpp"
#include "nart/data.hpp"
#include "nart/eval.hpp"
#include "nart/model.hpp"

namespace nart {

struct BenchRow {
  std::string name;
  std::string strategy;  // "ar_greedy" or an iterative strategy name
  int k = 0;             // iteration budget; 0 for the baseline
  int64_t total_passes = 0;
  double mean_passes = 0.0;
  double mean_length = 0.0;
  double wall_seconds = 0.0;  // median over repetitions, decode only
  double cer = 0.0;
  double speedup_passes = 1.0;  // baseline mean passes / this system's
};

struct BenchReport {
  int n_utterances = 0;
  int repetitions = 0;
  std::vector<BenchRow> rows;
};

Json bench_to_json(const BenchReport& report);

// Decodes `split` with the baseline and with each iterative strategy at each
// budget in `ks`. Length handling (l_init, length_mode) comes from `decode`;
// its strategy/k fields are ignored in favor of the matrix.
BenchReport run_bench(Transformer<float>& model, const std::vector<Utterance>& split,
                      const DecodeConfig& decode, const std::vector<int>& ks, int repetitions);

}  // namespace nart
