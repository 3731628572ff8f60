#include "nart/model.hpp"

#include <string>

namespace nart {

void ModelConfig::validate() const {
  if (d_model < 1) throw ConfigError("model: d_model must be positive");
  if (n_heads < 1) throw ConfigError("model: n_heads must be positive");
  if (d_model % n_heads != 0)
    throw ConfigError("model: d_model (" + std::to_string(d_model) +
                      ") must be divisible by n_heads (" + std::to_string(n_heads) + ")");
  if (n_encoder_blocks < 0) throw ConfigError("model: n_encoder_blocks must be >= 0");
  if (n_decoder_blocks < 0) throw ConfigError("model: n_decoder_blocks must be >= 0");
  if (feedforward_dim < 1) throw ConfigError("model: feedforward_dim must be positive");
  if (subsample_factor < 1) throw ConfigError("model: subsample_factor must be positive");
  if (vocab_size < kNumSpecials + 1)
    throw ConfigError("model: vocab_size must be at least " + std::to_string(kNumSpecials + 1) +
                      " (specials plus one content token)");
  if (max_positions < 1) throw ConfigError("model: max_positions must be positive");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    throw ConfigError("model: dropout_rate must lie in [0, 1)");
  if (d_feat < 1) throw ConfigError("model: d_feat must be positive");
}

Json model_to_json(const ModelConfig& cfg) {
  return Json{{"d_model", cfg.d_model},
              {"n_heads", cfg.n_heads},
              {"n_encoder_blocks", cfg.n_encoder_blocks},
              {"n_decoder_blocks", cfg.n_decoder_blocks},
              {"feedforward_dim", cfg.feedforward_dim},
              {"subsample_factor", cfg.subsample_factor},
              {"vocab_size", cfg.vocab_size},
              {"max_positions", cfg.max_positions},
              {"dropout_rate", cfg.dropout_rate},
              {"d_feat", cfg.d_feat}};
}

ModelConfig model_from_json(const Json& j, const std::string& context) {
  check_keys(j, context, {},
             {"d_model", "n_heads", "n_encoder_blocks", "n_decoder_blocks", "feedforward_dim",
              "subsample_factor", "vocab_size", "max_positions", "dropout_rate", "d_feat"});
  ModelConfig cfg;
  cfg.d_model = json_get_or(j, context, "d_model", cfg.d_model);
  cfg.n_heads = json_get_or(j, context, "n_heads", cfg.n_heads);
  cfg.n_encoder_blocks = json_get_or(j, context, "n_encoder_blocks", cfg.n_encoder_blocks);
  cfg.n_decoder_blocks = json_get_or(j, context, "n_decoder_blocks", cfg.n_decoder_blocks);
  cfg.feedforward_dim = json_get_or(j, context, "feedforward_dim", cfg.feedforward_dim);
  cfg.subsample_factor = json_get_or(j, context, "subsample_factor", cfg.subsample_factor);
  cfg.vocab_size = json_get_or(j, context, "vocab_size", cfg.vocab_size);
  cfg.max_positions = json_get_or(j, context, "max_positions", cfg.max_positions);
  cfg.dropout_rate = json_get_or(j, context, "dropout_rate", cfg.dropout_rate);
  cfg.d_feat = json_get_or(j, context, "d_feat", cfg.d_feat);
  cfg.validate();
  return cfg;
}

uint64_t model_config_digest(const ModelConfig& cfg) {
  // dropout_rate is a training-time knob, not part of the architecture, so
  // it stays out of the digest.
  Json j = model_to_json(cfg);
  j.erase("dropout_rate");
  return fnv1a64(j.dump());
}

}  // namespace nart
