#pragma once

// Training loop shared by both masked objectives. One Adam step per batch
// under the inverse-square-root warmup schedule; batch order, mask draws and
// dropout all come from streams derived from the run seed, so a rerun with
// the same seed touches the same numbers in the same order.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "nart/data.hpp"
#include "nart/jsonutil.hpp"
#include "nart/model.hpp"

namespace nart {

struct TrainConfig {
  int epochs = 8;
  int batch_size = 32;
  double base_lr = 1.0;
  int warmup_steps = 800;
  std::string framework = "cmlm";  // or "fmlm"
  double label_smoothing = 0.1;

  void validate() const;
};

Json train_to_json(const TrainConfig& cfg);
TrainConfig train_from_json(const Json& j, const std::string& context);

// base_lr * d_model^-1/2 * min(step^-1/2, step * warmup^-3/2); step counts
// from 1.
double warmup_lr(double base_lr, int d_model, int64_t step, int warmup_steps);

struct EpochStats {
  int epoch = 0;  // 1-based
  double mean_loss = 0.0;
  int64_t global_step = 0;
  double lr = 0.0;               // after the epoch's last batch
  double val_cer = -1.0;         // -1 when no validator was supplied
  double seconds = 0.0;
};

// Returns dev CER (or any scalar worth tracking) for the current weights.
using ValidateFn = std::function<double(Transformer<float>&)>;
using EpochHook = std::function<void(const EpochStats&)>;

std::vector<EpochStats> train(Transformer<float>& model, const std::vector<Utterance>& train_set,
                              const TrainConfig& cfg, uint64_t seed,
                              const ValidateFn& validate = nullptr,
                              const EpochHook& hook = nullptr);

}  // namespace nart
