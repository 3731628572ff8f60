// Command line front end: gen | train | decode | eval | bench. Every verb is
// driven by one JSON run config (all sections optional, unknown keys
// rejected) plus --set overrides applied to the raw JSON before parsing.
// Artifacts embed the resolved config so any output can be traced back to
// the exact settings that produced it.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nart/bench.hpp"
#include "nart/checkpoint.hpp"
#include "nart/config.hpp"
#include "nart/decode.hpp"
#include "nart/eval.hpp"
#include "nart/train.hpp"

namespace fs = std::filesystem;
using nart::Json;

namespace {

struct CliArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  std::string split = "test";
  std::string hyp_path;
  std::vector<int> ks = {1, 2, 3};
  int repetitions = 3;
};

nart::RunConfig resolve_config(const CliArgs& args) {
  Json raw = Json::object();
  if (!args.config_path.empty()) raw = nart::parse_json_file(args.config_path);
  for (const auto& assignment : args.overrides) nart::apply_override(raw, assignment);
  nart::RunConfig cfg = nart::run_from_json(raw);
  if (!args.out_dir.empty()) {
    cfg.paths.out_dir = args.out_dir;
  } else if (const char* env = std::getenv("NART_OUT"); env && *env) {
    cfg.paths.out_dir = env;
  }
  return cfg;
}

fs::path ensure_out_dir(const nart::RunConfig& cfg) {
  fs::path dir(cfg.paths.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw nart::IoError("cannot create " + dir.string() + ": " + ec.message());
  return dir;
}

// The corpus a model trains or decodes on must be the one the config
// describes; meta.json carries the generating task config for this check.
void require_matching_task(const nart::TaskConfig& corpus_task, const nart::TaskConfig& cfg_task,
                           const std::string& dir) {
  if (nart::task_to_json(corpus_task) != nart::task_to_json(cfg_task))
    throw nart::ConfigError("corpus in " + dir +
                            " was generated with a different task config; regenerate it or fix "
                            "the task section");
}

// The model registers pointers to its own members, so it never moves; the
// checkpoint is peeked first to learn the architecture, then loaded into a
// freshly constructed instance.
std::unique_ptr<nart::Transformer<float>> load_model(const nart::RunConfig& cfg) {
  const auto info = nart::peek_checkpoint(cfg.paths.checkpoint);
  auto model = std::make_unique<nart::Transformer<float>>(info.config,
                                                          nart::Rng(info.seed).derive("init"));
  nart::load_checkpoint(cfg.paths.checkpoint, *model);
  return model;
}

double split_cer(nart::Transformer<float>& model, const std::vector<nart::Utterance>& split,
                 const nart::DecodeConfig& dcfg) {
  std::vector<nart::TokenPair> pairs;
  pairs.reserve(split.size());
  for (const auto& utt : split) {
    auto res = nart::run_decode(model, model.encode(utt.frames), dcfg);
    std::vector<int> ref = utt.tokens;
    while (!ref.empty() && ref.back() == nart::kEosId) ref.pop_back();
    pairs.push_back({std::move(ref), res.tokens});
  }
  return nart::corpus_cer(pairs);
}

int cmd_gen(const CliArgs& args) {
  const nart::RunConfig cfg = resolve_config(args);
  const nart::Corpus corpus = nart::gen_corpus(cfg.task);
  nart::save_corpus(cfg.paths.corpus_dir, corpus, cfg.task);
  std::printf("gen: wrote %zu train / %zu dev / %zu test / %zu stress utterances to %s\n",
              corpus.train.size(), corpus.dev.size(), corpus.test.size(), corpus.stress.size(),
              cfg.paths.corpus_dir.c_str());
  return 0;
}

int cmd_train(const CliArgs& args) {
  const nart::RunConfig cfg = resolve_config(args);
  const auto loaded = nart::load_corpus(cfg.paths.corpus_dir);
  require_matching_task(loaded.task, cfg.task, cfg.paths.corpus_dir);

  nart::Transformer<float> model(cfg.model, nart::Rng(cfg.seed).derive("init"));

  nart::DecodeConfig val_cfg = cfg.decode;
  val_cfg.strategy = nart::Strategy::easy_first;
  val_cfg.k = 1;
  val_cfg.custom_schedule = {};
  val_cfg.validate();
  const auto validate = [&](nart::Transformer<float>& m) {
    return split_cer(m, loaded.corpus.dev, val_cfg);
  };

  std::printf("train: %s on %zu utterances, %d epochs, batch %d\n", cfg.train.framework.c_str(),
              loaded.corpus.train.size(), cfg.train.epochs, cfg.train.batch_size);
  const auto stats =
      nart::train(model, loaded.corpus.train, cfg.train, cfg.seed, validate,
                  [](const nart::EpochStats& es) {
                    std::printf("epoch %d  loss %.4f  lr %.5f  dev_cer %.4f  (%.1f s)\n",
                                es.epoch, es.mean_loss, es.lr, es.val_cer, es.seconds);
                    std::fflush(stdout);
                  });

  Json meta;
  meta["run"] = nart::run_to_json(cfg);
  const uint64_t step = stats.empty() ? 0 : static_cast<uint64_t>(stats.back().global_step);
  nart::save_checkpoint(cfg.paths.checkpoint, model, step, cfg.seed, meta);
  std::printf("train: saved %s after %llu steps\n", cfg.paths.checkpoint.c_str(),
              static_cast<unsigned long long>(step));
  return 0;
}

int cmd_decode(const CliArgs& args) {
  const nart::RunConfig cfg = resolve_config(args);
  const auto loaded = nart::load_corpus(cfg.paths.corpus_dir);
  require_matching_task(loaded.task, cfg.task, cfg.paths.corpus_dir);
  const auto& split = nart::corpus_split(loaded.corpus, args.split);
  const auto model_ptr = load_model(cfg);
  nart::Transformer<float>& model = *model_ptr;
  const nart::Vocabulary vocab = loaded.task.vocabulary();

  const fs::path out = ensure_out_dir(cfg);
  const fs::path hyp_path = out / "hypotheses.jsonl";
  std::ofstream os(hyp_path, std::ios::trunc);
  if (!os) throw nart::IoError("cannot open " + hyp_path.string() + " for writing");

  model.reset_decoder_pass_count();
  const auto start = std::chrono::steady_clock::now();
  int64_t total_length = 0;
  for (const auto& utt : split) {
    const auto res = nart::run_decode(model, model.encode(utt.frames), cfg.decode);
    std::string text;
    for (size_t i = 0; i < res.tokens.size(); ++i) {
      if (i) text += ' ';
      text += vocab.token_text(res.tokens[i]);
    }
    Json trace = Json::array();
    for (const auto& it : res.trace) {
      Json step;
      step["iteration"] = it.iteration;
      step["committed"] = it.committed;
      step["refreshed"] = it.refreshed;
      trace.push_back(std::move(step));
    }
    Json row;
    row["id"] = utt.id;
    row["tokens"] = res.tokens;
    row["text"] = text;
    row["length"] = res.length;
    row["passes"] = res.passes;
    row["resized"] = res.resized;
    row["trace"] = std::move(trace);
    os << row.dump() << '\n';
    total_length += static_cast<int64_t>(res.tokens.size());
  }
  os.flush();
  if (!os) throw nart::IoError("write failed for " + hyp_path.string());
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  Json meta;
  meta["run"] = nart::run_to_json(cfg);
  meta["split"] = args.split;
  meta["n_utterances"] = split.size();
  meta["total_passes"] = model.decoder_pass_count();
  meta["mean_passes"] =
      static_cast<double>(model.decoder_pass_count()) / static_cast<double>(split.size());
  meta["mean_length"] = static_cast<double>(total_length) / static_cast<double>(split.size());
  meta["wall_seconds"] = wall;
  nart::write_json_file((out / "decode_meta.json").string(), meta);

  std::printf("decode: %zu utterances, %.2f passes/utt, %.1f s -> %s\n", split.size(),
              static_cast<double>(model.decoder_pass_count()) /
                  static_cast<double>(split.size()),
              wall, hyp_path.string().c_str());
  return 0;
}

int cmd_eval(const CliArgs& args) {
  const nart::RunConfig cfg = resolve_config(args);
  const auto loaded = nart::load_corpus(cfg.paths.corpus_dir);
  require_matching_task(loaded.task, cfg.task, cfg.paths.corpus_dir);
  const auto& split = nart::corpus_split(loaded.corpus, args.split);

  const fs::path out = ensure_out_dir(cfg);
  const fs::path hyp_path =
      args.hyp_path.empty() ? out / "hypotheses.jsonl" : fs::path(args.hyp_path);
  std::ifstream is(hyp_path);
  if (!is) throw nart::IoError("cannot open " + hyp_path.string());

  std::map<std::string, std::vector<int>> hyps;
  std::string line;
  size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    Json row = Json::parse(line, nullptr, false);
    if (row.is_discarded())
      throw nart::EvalError(hyp_path.string() + ":" + std::to_string(line_no) +
                            ": not valid JSON");
    hyps[row.at("id").get<std::string>()] = row.at("tokens").get<std::vector<int>>();
  }

  std::vector<nart::TokenPair> pairs;
  pairs.reserve(split.size());
  for (const auto& utt : split) {
    const auto it = hyps.find(utt.id);
    if (it == hyps.end())
      throw nart::EvalError("no hypothesis for utterance " + utt.id + " in " +
                            hyp_path.string());
    std::vector<int> ref = utt.tokens;
    while (!ref.empty() && ref.back() == nart::kEosId) ref.pop_back();
    pairs.push_back({std::move(ref), it->second});
  }

  const auto totals = nart::corpus_totals(pairs);
  const double cer = nart::corpus_cer(pairs);
  const auto buckets = nart::length_bucket_report(pairs, cfg.eval.bucket_edges);

  Json report;
  report["run"] = nart::run_to_json(cfg);
  report["split"] = args.split;
  report["n_utterances"] = pairs.size();
  report["cer"] = cer;
  report["substitutions"] = totals.substitutions;
  report["deletions"] = totals.deletions;
  report["insertions"] = totals.insertions;
  report["correct"] = totals.correct;
  report["ref_len"] = totals.ref_len;
  report["hyp_len"] = totals.hyp_len;
  Json rows = Json::array();
  for (const auto& b : buckets) {
    Json r;
    r["lo"] = b.lo;
    r["hi"] = b.hi;
    r["n"] = b.n;
    r["substitutions"] = b.totals.substitutions;
    r["deletions"] = b.totals.deletions;
    r["insertions"] = b.totals.insertions;
    r["ref_len"] = b.totals.ref_len;
    if (b.cer) r["cer"] = *b.cer;
    if (b.sub_rate) r["sub_rate"] = *b.sub_rate;
    if (b.del_rate) r["del_rate"] = *b.del_rate;
    if (b.ins_rate) r["ins_rate"] = *b.ins_rate;
    rows.push_back(std::move(r));
  }
  report["buckets"] = std::move(rows);
  nart::write_json_file((out / "report.json").string(), report);

  std::printf("eval: CER %.4f  S %lld  D %lld  I %lld over %zu utterances -> %s\n", cer,
              static_cast<long long>(totals.substitutions),
              static_cast<long long>(totals.deletions),
              static_cast<long long>(totals.insertions), pairs.size(),
              (out / "report.json").string().c_str());
  return 0;
}

int cmd_bench(const CliArgs& args) {
  const nart::RunConfig cfg = resolve_config(args);
  const auto loaded = nart::load_corpus(cfg.paths.corpus_dir);
  require_matching_task(loaded.task, cfg.task, cfg.paths.corpus_dir);
  const auto& split = nart::corpus_split(loaded.corpus, args.split);
  const auto model_ptr = load_model(cfg);
  nart::Transformer<float>& model = *model_ptr;

  const auto report = nart::run_bench(model, split, cfg.decode, args.ks, args.repetitions);

  Json j = nart::bench_to_json(report);
  j["run"] = nart::run_to_json(cfg);
  j["split"] = args.split;
  const fs::path out = ensure_out_dir(cfg);
  nart::write_json_file((out / "bench.json").string(), j);

  std::printf("%-18s %8s %12s %10s %8s %10s\n", "system", "k", "mean_passes", "wall_s", "cer",
              "speedup");
  for (const auto& row : report.rows)
    std::printf("%-18s %8d %12.2f %10.3f %8.4f %10.2f\n", row.name.c_str(), row.k,
                row.mean_passes, row.wall_seconds, row.cer, row.speedup_passes);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"non-autoregressive masked-transformer toolkit"};
  app.require_subcommand(1);
  CliArgs args;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", args.config_path, "run config JSON file");
    sub->add_option("--set", args.overrides,
                    "override a config entry, e.g. --set train.epochs=2");
    sub->add_option("--out", args.out_dir, "output directory (also NART_OUT env var)");
    return sub;
  };

  add_common(app.add_subcommand("gen", "generate a synthetic corpus"));
  add_common(app.add_subcommand("train", "train a model on a generated corpus"));
  auto* dec = add_common(app.add_subcommand("decode", "decode a corpus split"));
  dec->add_option("--split", args.split, "corpus split (train|dev|test|stress)");
  auto* ev = add_common(app.add_subcommand("eval", "score hypotheses against references"));
  ev->add_option("--split", args.split, "corpus split (train|dev|test|stress)");
  ev->add_option("--hyp", args.hyp_path, "hypotheses file (default <out>/hypotheses.jsonl)");
  auto* be = add_common(app.add_subcommand("bench", "compare decoder pass counts"));
  be->add_option("--split", args.split, "corpus split (train|dev|test|stress)");
  be->add_option("--ks", args.ks, "iteration budgets for the iterative systems");
  be->add_option("--reps", args.repetitions, "timed repetitions per system");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: config: %s\n", e.what());
    return 2;
  }

  try {
    if (app.got_subcommand("gen")) return cmd_gen(args);
    if (app.got_subcommand("train")) return cmd_train(args);
    if (app.got_subcommand("decode")) return cmd_decode(args);
    if (app.got_subcommand("eval")) return cmd_eval(args);
    return cmd_bench(args);
  } catch (const nart::ConfigError& e) {
    std::fprintf(stderr, "error: config: %s\n", e.what());
    return 2;
  } catch (const nart::IoError& e) {
    std::fprintf(stderr, "error: io: %s\n", e.what());
    return 3;
  } catch (const nart::CheckpointError& e) {
    std::fprintf(stderr, "error: checkpoint: %s\n", e.what());
    return 4;
  } catch (const nart::ShapeError& e) {
    std::fprintf(stderr, "error: shape: %s\n", e.what());
    return 5;
  } catch (const nart::NumericError& e) {
    std::fprintf(stderr, "error: numeric: %s\n", e.what());
    return 5;
  } catch (const nart::TrainError& e) {
    std::fprintf(stderr, "error: train: %s\n", e.what());
    return 6;
  } catch (const nart::DecodeError& e) {
    std::fprintf(stderr, "error: decode: %s\n", e.what());
    return 7;
  } catch (const nart::EvalError& e) {
    std::fprintf(stderr, "error: eval: %s\n", e.what());
    return 8;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: internal: %s\n", e.what());
    return 1;
  }
}
