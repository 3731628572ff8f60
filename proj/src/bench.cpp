#include "nart/bench.hpp"

#include <algorithm>
#include <chrono>
#include <functional>

#include "nart/decode.hpp"

namespace nart {

namespace {

std::vector<int> strip_eos(const std::vector<int>& tokens) {
  std::vector<int> out;
  for (int t : tokens) {
    if (t == kEosId) break;
    out.push_back(t);
  }
  return out;
}

struct SystemRun {
  int64_t passes = 0;
  double wall = 0.0;
  std::vector<TokenPair> pairs;
  double mean_length = 0.0;
};

// One timed sweep over the split. The encoder is shared by every system and
// costs the same regardless of strategy, so encoding happens outside the
// timed region and only decoder work is measured.
SystemRun run_system(Transformer<float>& model, const std::vector<Utterance>& split,
                     const std::vector<Encoded<float>>& encoded,
                     const std::function<DecodeResult(const Encoded<float>&)>& decode_one) {
  SystemRun run;
  model.reset_decoder_pass_count();
  const auto start = std::chrono::steady_clock::now();
  std::vector<DecodeResult> results;
  results.reserve(split.size());
  for (const auto& enc : encoded) results.push_back(decode_one(enc));
  run.wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  run.passes = static_cast<int64_t>(model.decoder_pass_count());
  for (size_t i = 0; i < split.size(); ++i) {
    run.pairs.push_back({strip_eos(split[i].tokens), results[i].tokens});
    run.mean_length += static_cast<double>(results[i].tokens.size());
  }
  if (!split.empty()) run.mean_length /= static_cast<double>(split.size());
  return run;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

BenchReport run_bench(Transformer<float>& model, const std::vector<Utterance>& split,
                      const DecodeConfig& decode, const std::vector<int>& ks, int repetitions) {
  if (split.empty()) throw EvalError("bench: empty split");
  if (repetitions < 1) throw ConfigError("bench: repetitions must be >= 1");
  for (int k : ks)
    if (k < 1) throw ConfigError("bench: iteration budgets must be >= 1");

  std::vector<Encoded<float>> encoded;
  encoded.reserve(split.size());
  for (const auto& utt : split) encoded.push_back(model.encode(utt.frames));

  struct System {
    std::string name;
    std::string strategy;
    int k;
    std::function<DecodeResult(const Encoded<float>&)> decode_one;
  };
  std::vector<System> systems;
  systems.push_back({"ar_greedy", "ar_greedy", 0, [&](const Encoded<float>& enc) {
                       return decode_ar_greedy(model, enc, decode.l_init);
                     }});
  for (Strategy strategy : {Strategy::easy_first, Strategy::mask_predict})
    for (int k : ks) {
      DecodeConfig cfg = decode;
      cfg.strategy = strategy;
      cfg.k = k;
      cfg.validate();
      systems.push_back({strategy_name(strategy) + "_k" + std::to_string(k),
                         strategy_name(strategy), k,
                         [&model, cfg](const Encoded<float>& enc) {
                           return run_decode(model, enc, cfg);
                         }});
    }

  BenchReport report;
  report.n_utterances = static_cast<int>(split.size());
  report.repetitions = repetitions;
  double baseline_mean_passes = 0.0;
  for (const auto& system : systems) {
    std::vector<double> walls;
    SystemRun first;
    for (int rep = 0; rep < repetitions; ++rep) {
      SystemRun run = run_system(model, split, encoded, system.decode_one);
      if (rep == 0) first = std::move(run);
      walls.push_back(rep == 0 ? first.wall : run.wall);
    }

    BenchRow row;
    row.name = system.name;
    row.strategy = system.strategy;
    row.k = system.k;
    row.total_passes = first.passes;
    row.mean_passes = static_cast<double>(first.passes) / static_cast<double>(split.size());
    row.mean_length = first.mean_length;
    row.wall_seconds = median(std::move(walls));
    row.cer = corpus_cer(first.pairs);
    if (system.strategy == "ar_greedy") baseline_mean_passes = row.mean_passes;
    row.speedup_passes = baseline_mean_passes / row.mean_passes;
    report.rows.push_back(std::move(row));
  }
  return report;
}

Json bench_to_json(const BenchReport& report) {
  Json rows = Json::array();
  for (const auto& row : report.rows) {
    Json r;
    r["name"] = row.name;
    r["strategy"] = row.strategy;
    r["k"] = row.k;
    r["total_passes"] = row.total_passes;
    r["mean_passes"] = row.mean_passes;
    r["mean_length"] = row.mean_length;
    r["wall_seconds"] = row.wall_seconds;
    r["cer"] = row.cer;
    r["speedup_passes"] = row.speedup_passes;
    rows.push_back(std::move(r));
  }
  Json j;
  j["n_utterances"] = report.n_utterances;
  j["repetitions"] = report.repetitions;
  j["rows"] = std::move(rows);
  return j;
}

}  // namespace nart
