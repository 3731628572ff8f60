#pragma once

// Synthetic frames-to-tokens task. Every content token owns a fixed base
// embedding drawn once from the task seed; an utterance emits a few noisy
// frames per token. A configurable fraction of tokens is rendered
// ambiguously: their frames sit at the midpoint of a token pair's
// embeddings and only the position's parity decides which pair member is
// the ground truth, so a model has to use token context, not just acoustics.

#include <cstdint>
#include <string>
#include <vector>

#include "nart/common.hpp"
#include "nart/jsonutil.hpp"
#include "nart/tensor.hpp"
#include "nart/vocab.hpp"

namespace nart {

struct TaskConfig {
  int vocab_size = 32;  // content tokens; specials come on top
  int d_feat = 16;
  int r_min = 2;  // frames emitted per token
  int r_max = 4;
  double noise_sigma = 0.3;
  int len_min = 3;  // content tokens per utterance, EOS excluded
  int len_max = 20;
  int n_train = 20000;
  int n_dev = 1000;
  int n_test = 1000;
  uint64_t seed = 1;
  double ambiguity_rate = 0.2;

  void validate() const;
  Vocabulary vocabulary() const { return Vocabulary(vocab_size); }
};

Json task_to_json(const TaskConfig& cfg);
TaskConfig task_from_json(const Json& j, const std::string& context);

struct Utterance {
  std::string id;
  Tensor<float> frames;     // [T_in, d_feat]
  std::vector<int> tokens;  // content token ids, terminated by exactly one EOS
};

// One row per content token, drawn from a stream derived from the task seed
// only, so corpora and models can recompute it independently.
Tensor<float> base_embeddings(const TaskConfig& cfg);

Utterance gen_utterance(const TaskConfig& cfg, const Tensor<float>& base, Rng& rng,
                        std::string id);

struct Corpus {
  std::vector<Utterance> train, dev, test, stress;
};

// Pure function of the config: regenerating yields identical corpora. The
// stress split reuses the config with lengths in [2*len_max, 3*len_max] and
// n_test utterances, for out-of-distribution length analysis.
Corpus gen_corpus(const TaskConfig& cfg);

const std::vector<Utterance>& corpus_split(const Corpus& corpus, const std::string& name);

// ---- batching ---------------------------------------------------------------

struct Batch {
  int n = 0;
  int max_frames = 0;
  int d_feat = 0;
  int max_tokens = 0;
  std::vector<std::string> ids;
  std::vector<int> frame_len;
  std::vector<int> token_len;
  std::vector<float> frames;         // [n, max_frames, d_feat], zero padded
  std::vector<uint8_t> frame_valid;  // [n, max_frames]
  std::vector<int> tokens;           // [n, max_tokens], kPadId outside valid region
  std::vector<uint8_t> token_valid;  // [n, max_tokens]
};

Batch make_batch(const std::vector<Utterance>& utterances);
std::vector<Utterance> unbatch(const Batch& batch);

// ---- persistence ------------------------------------------------------------

// Directory layout: meta.json (task config + split sizes), one binary record
// file per split, and a tab-separated human-readable manifest per split.
void save_corpus(const std::string& dir, const Corpus& corpus, const TaskConfig& cfg);

struct LoadedCorpus {
  Corpus corpus;
  TaskConfig task;
};
LoadedCorpus load_corpus(const std::string& dir);

}  // namespace nart
