#include <doctest.h>

#include <cmath>

#include "nart/decode.hpp"
#include "nart/eval.hpp"
#include "nart/masking.hpp"
#include "nart/train.hpp"

// Slower checks that actually fit models: a few seconds each, still far from
// the acceptance-scale runs.

using nart::DecodeConfig;
using nart::ModelConfig;
using nart::Rng;
using nart::TaskConfig;
using nart::Transformer;

namespace {

ModelConfig small_model(int vocab, int d_feat, int d_model = 16) {
  ModelConfig cfg;
  cfg.d_model = d_model;
  cfg.n_heads = 2;
  cfg.n_encoder_blocks = 1;
  cfg.n_decoder_blocks = 1;
  cfg.feedforward_dim = 2 * d_model;
  cfg.vocab_size = vocab;
  cfg.d_feat = d_feat;
  cfg.dropout_rate = 0.0;
  return cfg;
}

}  // namespace

TEST_SUITE_BEGIN("train_integration");

TEST_CASE("decoder posteriors condition on tokens to the right") {
  // Non-causal decoder: the distribution at a masked slot must react to an
  // edit strictly to its right, even with random weights.
  Transformer<float> model(small_model(9, 4), Rng(3));
  Rng frame_rng(5);
  const auto frames = nart::Tensor<float>::randn({6, 4}, frame_rng);
  const auto enc = model.encode(frames);
  const auto a = model.decoder_posteriors({nart::kMaskId, 4, 5, nart::kEosId}, enc);
  const auto b = model.decoder_posteriors({nart::kMaskId, 4, 6, nart::kEosId}, enc);
  double max_diff = 0.0;
  for (int v = 0; v < a.vocab; ++v) max_diff = std::max(max_diff, std::abs(a.at(0, v) - b.at(0, v)));
  CHECK(max_diff > 1e-6);
}

TEST_CASE("training halves the held-out masked loss of an untrained model") {
  // Dev-set comparison against the untrained weights, so the bar measures
  // generalization rather than the epoch-1 mean (which already includes
  // most of the warmup-ramp learning).
  TaskConfig task;
  task.vocab_size = 8;
  task.d_feat = 8;
  task.r_min = 2;
  task.r_max = 3;
  task.noise_sigma = 0.15;
  task.len_min = 2;
  task.len_max = 6;
  task.n_train = 1200;
  task.n_dev = 100;
  task.n_test = 1;
  task.seed = 11;
  task.ambiguity_rate = 0.1;
  const auto corpus = nart::gen_corpus(task);

  Transformer<float> model(small_model(11, 8, 32), Rng(4));
  const auto dev_masked_loss = [&](Transformer<float>& m) {
    double total = 0.0;
    int charged = 0;
    Rng mask_rng(77);
    for (const auto& utt : corpus.dev) {
      std::vector<nart::TrainExample<float>> batch{{utt.frames, utt.tokens}};
      const auto res = nart::cmlm_loss(m, batch, mask_rng);
      total += res.loss.item() * res.total_masked;
      charged += res.total_masked;
    }
    return total / charged;
  };

  const double untrained = dev_masked_loss(model);
  nart::TrainConfig tcfg;
  tcfg.epochs = 12;
  tcfg.batch_size = 8;
  tcfg.base_lr = 1.5;
  tcfg.warmup_steps = 100;
  tcfg.label_smoothing = 0.0;
  const auto stats = nart::train(model, corpus.train, tcfg, 21);
  REQUIRE(stats.size() == 12);
  CHECK(stats.back().mean_loss < stats.front().mean_loss);
  CHECK(dev_masked_loss(model) < 0.5 * untrained);
}

TEST_CASE("a trained model recovers utterance lengths from the eos pre-pass") {
  // Fixed content length and a fixed frame rate, so length inference has a
  // single right answer per utterance.
  TaskConfig task;
  task.vocab_size = 8;
  task.d_feat = 4;
  task.r_min = 3;
  task.r_max = 3;
  task.len_min = 7;
  task.len_max = 7;
  task.n_train = 600;
  task.n_dev = 100;
  task.n_test = 1;
  task.seed = 13;
  task.ambiguity_rate = 0.0;
  const auto corpus = nart::gen_corpus(task);

  Transformer<float> model(small_model(11, 4), Rng(6));
  nart::TrainConfig tcfg;
  tcfg.epochs = 4;
  tcfg.batch_size = 16;
  tcfg.base_lr = 1.0;
  tcfg.warmup_steps = 60;
  tcfg.label_smoothing = 0.0;
  nart::train(model, corpus.train, tcfg, 22);

  DecodeConfig dcfg;
  dcfg.strategy = nart::Strategy::easy_first;
  dcfg.k = 2;
  dcfg.l_init = 30;
  dcfg.length_mode = nart::LengthMode::eos_after_first_pass;
  int correct = 0;
  for (const auto& utt : corpus.dev) {
    const auto res = nart::run_decode(model, model.encode(utt.frames), dcfg);
    // 7 content tokens plus the eos terminator.
    if (res.length == 8) ++correct;
    CHECK(res.resized);
  }
  CHECK(correct >= 95);
}

TEST_CASE("training improves easy-first decoding, not just the loss") {
  // Decodes at the reference length so the check isolates content quality;
  // length inference has its own case above and saturates much more slowly
  // than per-token accuracy at this scale.
  TaskConfig task;
  task.vocab_size = 8;
  task.d_feat = 8;
  task.r_min = 2;
  task.r_max = 3;
  task.noise_sigma = 0.15;
  task.len_min = 2;
  task.len_max = 6;
  task.n_train = 1200;
  task.n_dev = 50;
  task.n_test = 1;
  task.seed = 19;
  task.ambiguity_rate = 0.0;
  const auto corpus = nart::gen_corpus(task);

  Transformer<float> model(small_model(11, 8, 32), Rng(8));
  const auto oracle_len_cer = [&](Transformer<float>& m) {
    std::vector<nart::TokenPair> pairs;
    for (const auto& utt : corpus.dev) {
      DecodeConfig dcfg;
      dcfg.strategy = nart::Strategy::easy_first;
      dcfg.k = 2;
      dcfg.l_init = static_cast<int>(utt.tokens.size());
      dcfg.length_mode = nart::LengthMode::fixed;
      const auto res = nart::run_decode(m, m.encode(utt.frames), dcfg);
      std::vector<int> ref = utt.tokens;
      while (!ref.empty() && ref.back() == nart::kEosId) ref.pop_back();
      pairs.push_back({std::move(ref), res.tokens});
    }
    return nart::corpus_cer(pairs);
  };

  const double before = oracle_len_cer(model);
  nart::TrainConfig tcfg;
  tcfg.epochs = 8;
  tcfg.batch_size = 8;
  tcfg.base_lr = 1.5;
  tcfg.warmup_steps = 200;
  tcfg.label_smoothing = 0.0;
  nart::train(model, corpus.train, tcfg, 23);
  const double after = oracle_len_cer(model);

  CHECK(after < 0.5 * before);
  CHECK(after < 0.35);
}

TEST_SUITE_END();
