#include "nart/config.hpp"

namespace nart {

void RunConfig::validate() const {
  task.validate();
  model.validate();
  train.validate();
  decode.validate();
  if (model.vocab_size != task.vocabulary().size())
    throw ConfigError("model.vocab_size is " + std::to_string(model.vocab_size) +
                      " but the task needs " + std::to_string(task.vocabulary().size()) +
                      " (content tokens plus specials)");
  if (model.d_feat != task.d_feat)
    throw ConfigError("model.d_feat is " + std::to_string(model.d_feat) +
                      " but the task emits " + std::to_string(task.d_feat) + "-dim frames");
  if (eval.bucket_edges.size() < 2)
    throw ConfigError("eval.bucket_edges needs at least two edges");
  for (size_t i = 1; i < eval.bucket_edges.size(); ++i)
    if (eval.bucket_edges[i] <= eval.bucket_edges[i - 1])
      throw ConfigError("eval.bucket_edges must be strictly increasing");
  if (paths.corpus_dir.empty() || paths.checkpoint.empty() || paths.out_dir.empty())
    throw ConfigError("paths.corpus_dir, paths.checkpoint and paths.out_dir must be non-empty");
}

Json decode_to_json(const DecodeConfig& cfg) {
  Json j;
  j["strategy"] = strategy_name(cfg.strategy);
  j["k"] = cfg.k;
  j["l_init"] = cfg.l_init;
  j["length_mode"] = length_mode_name(cfg.length_mode);
  if (cfg.strategy == Strategy::custom) j["custom_schedule"] = cfg.custom_schedule.sets;
  return j;
}

DecodeConfig decode_from_json(const Json& j, const std::string& context) {
  check_keys(j, context, {}, {"strategy", "k", "l_init", "length_mode", "custom_schedule"});
  DecodeConfig cfg;
  if (j.contains("strategy"))
    cfg.strategy = strategy_from_name(j.at("strategy").get<std::string>());
  cfg.k = json_get_or(j, context, "k", cfg.k);
  cfg.l_init = json_get_or(j, context, "l_init", cfg.l_init);
  if (j.contains("length_mode"))
    cfg.length_mode = length_mode_from_name(j.at("length_mode").get<std::string>());
  if (j.contains("custom_schedule"))
    cfg.custom_schedule.sets = j.at("custom_schedule").get<std::vector<std::vector<int>>>();
  if (cfg.strategy == Strategy::custom && cfg.custom_schedule.sets.empty())
    throw ConfigError(context + ": strategy custom needs a custom_schedule");
  cfg.validate();
  return cfg;
}

namespace {

Json eval_to_json(const EvalSettings& cfg) {
  Json j;
  j["bucket_edges"] = cfg.bucket_edges;
  return j;
}

EvalSettings eval_from_json(const Json& j) {
  check_keys(j, "eval config", {}, {"bucket_edges"});
  EvalSettings cfg;
  cfg.bucket_edges = json_get_or(j, "eval config", "bucket_edges", cfg.bucket_edges);
  return cfg;
}

Json paths_to_json(const PathsConfig& cfg) {
  Json j;
  j["corpus_dir"] = cfg.corpus_dir;
  j["checkpoint"] = cfg.checkpoint;
  j["out_dir"] = cfg.out_dir;
  return j;
}

PathsConfig paths_from_json(const Json& j) {
  check_keys(j, "paths config", {}, {"corpus_dir", "checkpoint", "out_dir"});
  PathsConfig cfg;
  cfg.corpus_dir = json_get_or(j, "paths config", "corpus_dir", cfg.corpus_dir);
  cfg.checkpoint = json_get_or(j, "paths config", "checkpoint", cfg.checkpoint);
  cfg.out_dir = json_get_or(j, "paths config", "out_dir", cfg.out_dir);
  return cfg;
}

}  // namespace

Json run_to_json(const RunConfig& cfg) {
  Json j;
  j["seed"] = cfg.seed;
  j["task"] = task_to_json(cfg.task);
  j["model"] = model_to_json(cfg.model);
  j["train"] = train_to_json(cfg.train);
  j["decode"] = decode_to_json(cfg.decode);
  j["eval"] = eval_to_json(cfg.eval);
  j["paths"] = paths_to_json(cfg.paths);
  return j;
}

RunConfig run_from_json(const Json& j) {
  check_keys(j, "run config", {},
             {"seed", "task", "model", "train", "decode", "eval", "paths"});
  RunConfig cfg;
  cfg.seed = json_get_or(j, "run config", "seed", cfg.seed);
  if (j.contains("task")) cfg.task = task_from_json(j.at("task"), "task config");
  if (j.contains("model")) cfg.model = model_from_json(j.at("model"), "model config");
  if (j.contains("train")) cfg.train = train_from_json(j.at("train"), "train config");
  if (j.contains("decode")) cfg.decode = decode_from_json(j.at("decode"), "decode config");
  if (j.contains("eval")) cfg.eval = eval_from_json(j.at("eval"));
  if (j.contains("paths")) cfg.paths = paths_from_json(j.at("paths"));
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  return run_from_json(parse_json_file(path.string()));
}

void apply_override(Json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("--set expects section.key=value, got " + assignment);
  const std::string dotted = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);

  Json value = Json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;  // bare strings like fmlm

  Json* node = &j;
  size_t begin = 0;
  while (true) {
    const size_t dot = dotted.find('.', begin);
    const std::string key = dotted.substr(begin, dot - begin);
    if (key.empty()) throw ConfigError("--set path has an empty segment: " + dotted);
    if (dot == std::string::npos) {
      (*node)[key] = std::move(value);
      return;
    }
    node = &(*node)[key];
    begin = dot + 1;
  }
}

}  // namespace nart
