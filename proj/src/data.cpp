#include "nart/data.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include "nart/binio.hpp"
#include "nart/jsonutil.hpp"

namespace fs = std::filesystem;

namespace nart {

void TaskConfig::validate() const {
  if (vocab_size < 1) throw ConfigError("task: vocab_size must be >= 1");
  if (d_feat < 1) throw ConfigError("task: d_feat must be >= 1");
  if (r_min < 1 || r_max < r_min) throw ConfigError("task: need 1 <= r_min <= r_max");
  if (len_min < 1 || len_max < len_min) throw ConfigError("task: need 1 <= len_min <= len_max");
  if (noise_sigma < 0) throw ConfigError("task: noise_sigma must be >= 0");
  if (ambiguity_rate < 0 || ambiguity_rate > 1)
    throw ConfigError("task: ambiguity_rate must lie in [0, 1]");
  if (n_train < 0 || n_dev < 0 || n_test < 0) throw ConfigError("task: negative split size");
}

Tensor<float> base_embeddings(const TaskConfig& cfg) {
  Rng rng = Rng(cfg.seed).derive("base-embedding");
  Tensor<float> base = Tensor<float>::zeros({cfg.vocab_size, cfg.d_feat});
  for (int k = 0; k < cfg.vocab_size; ++k)
    for (int j = 0; j < cfg.d_feat; ++j) base.at(k, j) = static_cast<float>(rng.normal());
  return base;
}

Utterance gen_utterance(const TaskConfig& cfg, const Tensor<float>& base, Rng& rng,
                        std::string id) {
  const Vocabulary vocab = cfg.vocabulary();
  Utterance utt;
  utt.id = std::move(id);
  const int len = static_cast<int>(rng.uniform_int(cfg.len_min, cfg.len_max));

  // Per position the draw order is fixed (token, ambiguity, frame count,
  // then frame noise); the sequence of rng consumption is part of the
  // reproducibility contract.
  std::vector<float> frame_data;
  std::vector<int> frame_rows;
  for (int pos = 0; pos < len; ++pos) {
    const int sampled = static_cast<int>(rng.uniform_int(0, cfg.vocab_size - 1));
    const bool amb_draw = rng.uniform_real() < cfg.ambiguity_rate;
    const int partner = sampled ^ 1;
    const bool ambiguous = amb_draw && partner < cfg.vocab_size;

    int truth = sampled;
    std::vector<double> center(static_cast<size_t>(cfg.d_feat));
    if (ambiguous) {
      // Frames land midway between the pair's embeddings; the position's
      // parity picks which pair member is the reference token.
      const int pair_lo = sampled & ~1;
      truth = pair_lo + (pos % 2);
      for (int j = 0; j < cfg.d_feat; ++j)
        center[static_cast<size_t>(j)] =
            0.5 * (static_cast<double>(base.at(pair_lo, j)) +
                   static_cast<double>(base.at(pair_lo + 1, j)));
    } else {
      for (int j = 0; j < cfg.d_feat; ++j)
        center[static_cast<size_t>(j)] = static_cast<double>(base.at(sampled, j));
    }
    utt.tokens.push_back(vocab.content_id(truth));

    const int r = static_cast<int>(rng.uniform_int(cfg.r_min, cfg.r_max));
    frame_rows.push_back(r);
    for (int f = 0; f < r; ++f)
      for (int j = 0; j < cfg.d_feat; ++j)
        frame_data.push_back(static_cast<float>(center[static_cast<size_t>(j)] +
                                                cfg.noise_sigma * rng.normal()));
  }
  utt.tokens.push_back(kEosId);

  int t_in = 0;
  for (int r : frame_rows) t_in += r;
  utt.frames = Tensor<float>::from({t_in, cfg.d_feat}, std::move(frame_data));
  return utt;
}

namespace {

std::vector<Utterance> gen_split(const TaskConfig& cfg, const std::string& name, int count) {
  const Tensor<float> base = base_embeddings(cfg);
  const Rng seed_rng(cfg.seed);
  std::vector<Utterance> out;
  out.reserve(static_cast<size_t>(count));
  char id[64];
  for (int i = 0; i < count; ++i) {
    std::snprintf(id, sizeof(id), "%s-%05d", name.c_str(), i);
    Rng utt_rng = seed_rng.derive(name, static_cast<uint64_t>(i));
    out.push_back(gen_utterance(cfg, base, utt_rng, id));
  }
  return out;
}

}  // namespace

Corpus gen_corpus(const TaskConfig& cfg) {
  cfg.validate();
  Corpus corpus;
  corpus.train = gen_split(cfg, "train", cfg.n_train);
  corpus.dev = gen_split(cfg, "dev", cfg.n_dev);
  corpus.test = gen_split(cfg, "test", cfg.n_test);
  TaskConfig stress_cfg = cfg;
  stress_cfg.len_min = 2 * cfg.len_max;
  stress_cfg.len_max = 3 * cfg.len_max;
  corpus.stress = gen_split(stress_cfg, "stress", cfg.n_test);

  std::set<std::string> ids;
  for (const auto* split : {&corpus.train, &corpus.dev, &corpus.test, &corpus.stress})
    for (const auto& utt : *split)
      if (!ids.insert(utt.id).second)
        throw ConfigError("gen_corpus: duplicate utterance id " + utt.id);
  return corpus;
}

const std::vector<Utterance>& corpus_split(const Corpus& corpus, const std::string& name) {
  if (name == "train") return corpus.train;
  if (name == "dev") return corpus.dev;
  if (name == "test") return corpus.test;
  if (name == "stress") return corpus.stress;
  throw ConfigError("unknown split '" + name + "' (expected train|dev|test|stress)");
}

Batch make_batch(const std::vector<Utterance>& utterances) {
  if (utterances.empty()) throw ShapeError("make_batch: empty utterance list");
  Batch b;
  b.n = static_cast<int>(utterances.size());
  b.d_feat = utterances[0].frames.dim(1);
  for (const auto& u : utterances) {
    if (u.frames.dim(1) != b.d_feat) throw ShapeError("make_batch: mixed feature widths");
    b.max_frames = std::max(b.max_frames, u.frames.dim(0));
    b.max_tokens = std::max(b.max_tokens, static_cast<int>(u.tokens.size()));
  }
  b.frames.assign(static_cast<size_t>(b.n) * b.max_frames * b.d_feat, 0.0f);
  b.frame_valid.assign(static_cast<size_t>(b.n) * b.max_frames, 0);
  b.tokens.assign(static_cast<size_t>(b.n) * b.max_tokens, kPadId);
  b.token_valid.assign(static_cast<size_t>(b.n) * b.max_tokens, 0);
  for (int u = 0; u < b.n; ++u) {
    const Utterance& utt = utterances[static_cast<size_t>(u)];
    const int t_in = utt.frames.dim(0);
    const int t_out = static_cast<int>(utt.tokens.size());
    b.ids.push_back(utt.id);
    b.frame_len.push_back(t_in);
    b.token_len.push_back(t_out);
    for (int t = 0; t < t_in; ++t) {
      b.frame_valid[static_cast<size_t>(u) * b.max_frames + t] = 1;
      for (int j = 0; j < b.d_feat; ++j)
        b.frames[(static_cast<size_t>(u) * b.max_frames + t) * b.d_feat + j] = utt.frames.at(t, j);
    }
    for (int t = 0; t < t_out; ++t) {
      b.token_valid[static_cast<size_t>(u) * b.max_tokens + t] = 1;
      b.tokens[static_cast<size_t>(u) * b.max_tokens + t] = utt.tokens[static_cast<size_t>(t)];
    }
  }
  return b;
}

std::vector<Utterance> unbatch(const Batch& batch) {
  std::vector<Utterance> out;
  for (int u = 0; u < batch.n; ++u) {
    Utterance utt;
    utt.id = batch.ids[static_cast<size_t>(u)];
    const int t_in = batch.frame_len[static_cast<size_t>(u)];
    const int t_out = batch.token_len[static_cast<size_t>(u)];
    utt.frames = Tensor<float>::zeros({t_in, batch.d_feat});
    for (int t = 0; t < t_in; ++t)
      for (int j = 0; j < batch.d_feat; ++j)
        utt.frames.at(t, j) =
            batch.frames[(static_cast<size_t>(u) * batch.max_frames + t) * batch.d_feat + j];
    for (int t = 0; t < t_out; ++t)
      utt.tokens.push_back(batch.tokens[static_cast<size_t>(u) * batch.max_tokens + t]);
    out.push_back(std::move(utt));
  }
  return out;
}

// ---- persistence ------------------------------------------------------------

namespace {

constexpr char kCorpusMagic[8] = {'N', 'A', 'R', 'T', 'C', 'O', 'R', 'P'};
constexpr uint32_t kCorpusVersion = 1;

void write_split(const fs::path& path, const std::vector<Utterance>& split) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  detail::write_bytes(out, kCorpusMagic, sizeof(kCorpusMagic));
  detail::write_pod<uint32_t>(out, kCorpusVersion);
  detail::write_pod<uint64_t>(out, split.size());
  for (const Utterance& utt : split) {
    detail::write_pod<uint32_t>(out, static_cast<uint32_t>(utt.id.size()));
    detail::write_bytes(out, utt.id.data(), utt.id.size());
    detail::write_pod<uint32_t>(out, static_cast<uint32_t>(utt.tokens.size()));
    for (int t : utt.tokens) detail::write_pod<int32_t>(out, t);
    detail::write_pod<uint32_t>(out, static_cast<uint32_t>(utt.frames.dim(0)));
    detail::write_pod<uint32_t>(out, static_cast<uint32_t>(utt.frames.dim(1)));
    detail::write_bytes(out, utt.frames.data(), sizeof(float) * utt.frames.values().size());
  }
}

std::vector<Utterance> read_split(const fs::path& path, uint64_t expected_count,
                                  const Vocabulary& vocab) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[8];
  detail::read_bytes(in, magic, sizeof(magic), "corpus magic");
  if (std::memcmp(magic, kCorpusMagic, sizeof(magic)) != 0)
    throw IoError(path.string() + ": not a corpus file (bad magic)");
  const auto version = detail::read_pod<uint32_t>(in, "corpus version");
  if (version != kCorpusVersion)
    throw IoError(path.string() + ": unsupported corpus version " + std::to_string(version));
  const auto count = detail::read_pod<uint64_t>(in, "record count");
  if (count != expected_count)
    throw IoError(path.string() + ": record count " + std::to_string(count) +
                  " does not match meta.json (" + std::to_string(expected_count) + ")");
  std::vector<Utterance> split;
  split.reserve(count);
  for (uint64_t i = 0; i < count; ++i) {
    Utterance utt;
    const auto id_len = detail::read_pod<uint32_t>(in, "id length");
    utt.id.resize(id_len);
    detail::read_bytes(in, utt.id.data(), id_len, "id");
    const auto n_tokens = detail::read_pod<uint32_t>(in, "token count");
    for (uint32_t t = 0; t < n_tokens; ++t) {
      const auto tok = detail::read_pod<int32_t>(in, "token");
      if (!vocab.valid_id(tok) || tok == kPadId || tok == kMaskId)
        throw IoError(path.string() + ": utterance " + utt.id + " has illegal token id " +
                      std::to_string(tok));
      utt.tokens.push_back(tok);
    }
    const auto t_in = detail::read_pod<uint32_t>(in, "frame count");
    const auto d_feat = detail::read_pod<uint32_t>(in, "feature width");
    std::vector<float> data(static_cast<size_t>(t_in) * d_feat);
    detail::read_bytes(in, data.data(), sizeof(float) * data.size(), "frame data");
    utt.frames =
        Tensor<float>::from({static_cast<int>(t_in), static_cast<int>(d_feat)}, std::move(data));
    split.push_back(std::move(utt));
  }
  return split;
}

void write_manifest(const fs::path& path, const std::vector<Utterance>& split,
                    const Vocabulary& vocab) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "id\tn_frames\ttokens\n";
  for (const Utterance& utt : split) {
    out << utt.id << "\t" << utt.frames.dim(0) << "\t";
    for (size_t t = 0; t < utt.tokens.size(); ++t)
      out << (t ? " " : "") << vocab.token_text(utt.tokens[t]);
    out << "\n";
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace

Json task_to_json(const TaskConfig& cfg) {
  return Json{{"vocab_size", cfg.vocab_size},
              {"d_feat", cfg.d_feat},
              {"r_min", cfg.r_min},
              {"r_max", cfg.r_max},
              {"noise_sigma", cfg.noise_sigma},
              {"len_min", cfg.len_min},
              {"len_max", cfg.len_max},
              {"n_train", cfg.n_train},
              {"n_dev", cfg.n_dev},
              {"n_test", cfg.n_test},
              {"seed", cfg.seed},
              {"ambiguity_rate", cfg.ambiguity_rate}};
}

TaskConfig task_from_json(const Json& j, const std::string& context) {
  check_keys(j, context, {},
             {"vocab_size", "d_feat", "r_min", "r_max", "noise_sigma", "len_min", "len_max",
              "n_train", "n_dev", "n_test", "seed", "ambiguity_rate"});
  TaskConfig cfg;
  cfg.vocab_size = json_get_or(j, context, "vocab_size", cfg.vocab_size);
  cfg.d_feat = json_get_or(j, context, "d_feat", cfg.d_feat);
  cfg.r_min = json_get_or(j, context, "r_min", cfg.r_min);
  cfg.r_max = json_get_or(j, context, "r_max", cfg.r_max);
  cfg.noise_sigma = json_get_or(j, context, "noise_sigma", cfg.noise_sigma);
  cfg.len_min = json_get_or(j, context, "len_min", cfg.len_min);
  cfg.len_max = json_get_or(j, context, "len_max", cfg.len_max);
  cfg.n_train = json_get_or(j, context, "n_train", cfg.n_train);
  cfg.n_dev = json_get_or(j, context, "n_dev", cfg.n_dev);
  cfg.n_test = json_get_or(j, context, "n_test", cfg.n_test);
  cfg.seed = json_get_or(j, context, "seed", cfg.seed);
  cfg.ambiguity_rate = json_get_or(j, context, "ambiguity_rate", cfg.ambiguity_rate);
  cfg.validate();
  return cfg;
}

void save_corpus(const std::string& dir, const Corpus& corpus, const TaskConfig& cfg) {
  const fs::path root(dir);
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw IoError("cannot create directory " + root.string() + ": " + ec.message());
  const Vocabulary vocab = cfg.vocabulary();

  Json meta{{"format", "nart-corpus"},
            {"version", 1},
            {"task", task_to_json(cfg)},
            {"splits",
             Json{{"train", corpus.train.size()},
                  {"dev", corpus.dev.size()},
                  {"test", corpus.test.size()},
                  {"stress", corpus.stress.size()}}}};
  write_json_file(root / "meta.json", meta);

  const std::pair<const char*, const std::vector<Utterance>*> splits[] = {
      {"train", &corpus.train}, {"dev", &corpus.dev}, {"test", &corpus.test},
      {"stress", &corpus.stress}};
  for (const auto& [name, split] : splits) {
    write_split(root / (std::string(name) + ".bin"), *split);
    write_manifest(root / (std::string(name) + ".manifest.tsv"), *split, vocab);
  }
}

LoadedCorpus load_corpus(const std::string& dir) {
  const fs::path root(dir);
  const Json meta = parse_json_file(root / "meta.json");
  check_keys(meta, "meta.json", {"format", "version", "task", "splits"});
  if (json_get<std::string>(meta, "meta.json", "format") != "nart-corpus")
    throw IoError(dir + ": meta.json is not a corpus description");
  if (json_get<int>(meta, "meta.json", "version") != 1)
    throw IoError(dir + ": unsupported corpus version");
  LoadedCorpus loaded;
  loaded.task = task_from_json(meta.at("task"), "meta.json task");
  const Json& splits = meta.at("splits");
  check_keys(splits, "meta.json splits", {"train", "dev", "test", "stress"});
  const Vocabulary vocab = loaded.task.vocabulary();
  loaded.corpus.train = read_split(root / "train.bin",
                                   json_get<uint64_t>(splits, "splits", "train"), vocab);
  loaded.corpus.dev =
      read_split(root / "dev.bin", json_get<uint64_t>(splits, "splits", "dev"), vocab);
  loaded.corpus.test =
      read_split(root / "test.bin", json_get<uint64_t>(splits, "splits", "test"), vocab);
  loaded.corpus.stress =
      read_split(root / "stress.bin", json_get<uint64_t>(splits, "splits", "stress"), vocab);
  return loaded;
}

}  // namespace nart
