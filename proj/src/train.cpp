#include "nart/train.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

#include "nart/masking.hpp"

namespace nart {

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("train.epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(base_lr > 0.0)) throw ConfigError("train.base_lr must be positive");
  if (warmup_steps < 1) throw ConfigError("train.warmup_steps must be >= 1");
  if (framework != "cmlm" && framework != "fmlm")
    throw ConfigError("train.framework must be cmlm or fmlm, got " + framework);
  if (label_smoothing < 0.0 || label_smoothing >= 1.0)
    throw ConfigError("train.label_smoothing must be in [0, 1)");
}

Json train_to_json(const TrainConfig& cfg) {
  Json j;
  j["epochs"] = cfg.epochs;
  j["batch_size"] = cfg.batch_size;
  j["base_lr"] = cfg.base_lr;
  j["warmup_steps"] = cfg.warmup_steps;
  j["framework"] = cfg.framework;
  j["label_smoothing"] = cfg.label_smoothing;
  return j;
}

TrainConfig train_from_json(const Json& j, const std::string& context) {
  check_keys(j, context, {},
             {"epochs", "batch_size", "base_lr", "warmup_steps", "framework", "label_smoothing"});
  TrainConfig cfg;
  cfg.epochs = json_get_or(j, context, "epochs", cfg.epochs);
  cfg.batch_size = json_get_or(j, context, "batch_size", cfg.batch_size);
  cfg.base_lr = json_get_or(j, context, "base_lr", cfg.base_lr);
  cfg.warmup_steps = json_get_or(j, context, "warmup_steps", cfg.warmup_steps);
  cfg.framework = json_get_or(j, context, "framework", cfg.framework);
  cfg.label_smoothing = json_get_or(j, context, "label_smoothing", cfg.label_smoothing);
  cfg.validate();
  return cfg;
}

double warmup_lr(double base_lr, int d_model, int64_t step, int warmup_steps) {
  if (step < 1) throw ConfigError("warmup_lr: step counts from 1");
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(warmup_steps);
  return base_lr / std::sqrt(static_cast<double>(d_model)) *
         std::min(1.0 / std::sqrt(s), s / (w * std::sqrt(w)));
}

std::vector<EpochStats> train(Transformer<float>& model, const std::vector<Utterance>& train_set,
                              const TrainConfig& cfg, uint64_t seed, const ValidateFn& validate,
                              const EpochHook& hook) {
  cfg.validate();
  if (cfg.epochs > 0 && train_set.empty()) throw TrainError("training set is empty");

  model.set_requires_grad(true);
  AdamState<float> opt;
  Rng base(seed);
  int64_t global_step = 0;
  double lr = 0.0;

  std::vector<EpochStats> stats;
  stats.reserve(static_cast<size_t>(cfg.epochs));
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto epoch_start = std::chrono::steady_clock::now();
    std::vector<size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), size_t{0});
    Rng order_rng = base.derive("order", static_cast<uint64_t>(epoch));
    order_rng.shuffle(order);

    double loss_weighted = 0.0;
    int64_t tokens_charged = 0;
    for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(order.size(), begin + static_cast<size_t>(cfg.batch_size));
      std::vector<TrainExample<float>> batch;
      batch.reserve(end - begin);
      for (size_t i = begin; i < end; ++i)
        batch.push_back({train_set[order[i]].frames, train_set[order[i]].tokens});

      global_step += 1;
      lr = warmup_lr(cfg.base_lr, model.config().d_model, global_step, cfg.warmup_steps);
      Rng mask_rng = base.derive("mask", static_cast<uint64_t>(global_step));
      Rng dropout_rng = base.derive("dropout", static_cast<uint64_t>(global_step));

      Tape<float> tape;
      Tensor<float> loss;
      int64_t charged = 0;
      if (cfg.framework == "cmlm") {
        auto res = cmlm_loss(model, batch, mask_rng, &dropout_rng, cfg.label_smoothing);
        loss = res.loss;
        charged = res.total_masked;
      } else {
        auto res = fmlm_forward(model, batch, mask_rng, &dropout_rng, cfg.label_smoothing);
        loss = res.loss;
        charged = res.total_positions;
      }
      const double value = static_cast<double>(loss.item());
      if (!std::isfinite(value))
        throw TrainError("loss diverged at epoch " + std::to_string(epoch) + " step " +
                         std::to_string(global_step) + "; lower base_lr or raise warmup_steps");
      model.zero_grad();
      tape.backward(loss);
      adam_step(model.parameters(), opt, lr);

      loss_weighted += value * static_cast<double>(charged);
      tokens_charged += charged;
    }

    EpochStats es;
    es.epoch = epoch;
    es.mean_loss = tokens_charged > 0 ? loss_weighted / static_cast<double>(tokens_charged) : 0.0;
    es.global_step = global_step;
    es.lr = lr;
    if (validate) es.val_cer = validate(model);
    es.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start)
                     .count();
    if (hook) hook(es);
    stats.push_back(es);
  }
  return stats;
}

}  // namespace nart
