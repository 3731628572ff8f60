#pragma once

// Training objectives for the masked decoder. Both treat the decoder as a
// conditional masked language model: ground-truth tokens are partially
// replaced by MASK, and cross-entropy is charged where the schedule says a
// position must be predicted.
//
//  - Conditional masking (cmlm_loss): per utterance, mask a uniformly
//    drawn number of positions at uniformly drawn locations (EOS included)
//    and charge loss on the masked rows only.
//  - Two-pass factorized objective (fmlm_forward): pass 1 decodes from an
//    all-MASK input; its per-position confidences pick which positions are
//    revealed as ground truth to pass 2. Revealed positions take their loss
//    from pass 1, the rest from pass 2, so every position is charged
//    exactly once. Gradients flow through both passes and the encoder.
//
// Batch losses are token-weighted means, composed on the tape from
// per-utterance terms; an independent recomputation from the reported
// posterior grids must agree.

#include <string>
#include <vector>

#include "nart/common.hpp"
#include "nart/model.hpp"
#include "nart/tensor.hpp"
#include "nart/vocab.hpp"

namespace nart {

struct MaskPartition {
  std::vector<uint8_t> masked;  // 1 = predict here, 0 = visible context
  int n_masked = 0;
};

// |masked| ~ Uniform{1..t}, locations uniform without replacement. Exactly
// one uniform_int draw plus one sample_without_replacement call, in that
// order; callers rely on this for reproducibility.
MaskPartition sample_cmlm_partition(int t, Rng& rng);

std::vector<int> build_masked_input(const std::vector<int>& tokens,
                                    const std::vector<uint8_t>& masked);

// Number of positions kept masked for pass 2: Uniform{0..t} inclusive, one
// draw. t - result positions are revealed.
int sample_fmlm_keep_masked(int t, Rng& rng);

// Reveal the n_reveal most confident positions; ties go to the lower
// index. Returns the indicator vector.
std::vector<uint8_t> fmlm_reveal_mask(const std::vector<double>& confidence, int n_reveal);

// One (frames, reference) pair at the model's scalar type.
template <typename S>
struct TrainExample {
  Tensor<S> frames;
  std::vector<int> tokens;  // ground truth, ends with EOS
};

namespace detail {

template <typename S>
void check_example(const TrainExample<S>& ex, size_t index) {
  if (ex.tokens.empty())
    throw TrainError("batch item " + std::to_string(index) + ": empty token sequence");
  for (int id : ex.tokens)
    if (id == kPadId || id == kMaskId)
      throw TrainError("batch item " + std::to_string(index) +
                       ": ground truth contains a reserved PAD/MASK token");
}

}  // namespace detail

// ---- conditional masked LM ---------------------------------------------------

template <typename S>
struct CmlmUtterance {
  MaskPartition partition;
  std::vector<int> input;  // tokens with MASK written over the partition
  Tensor<S> logits;        // tape-linked, [t, vocab]
  PosteriorGrid grid;
};

template <typename S>
struct CmlmResult {
  Tensor<S> loss;  // scalar: sum of masked-position losses / total masked
  std::vector<CmlmUtterance<S>> utterances;
  int total_masked = 0;
};

template <typename S>
CmlmResult<S> cmlm_loss(const Transformer<S>& model, const std::vector<TrainExample<S>>& batch,
                        Rng& mask_rng, Rng* dropout_rng = nullptr, double label_smoothing = 0.0,
                        const std::vector<MaskPartition>* forced_partitions = nullptr) {
  if (batch.empty()) throw ShapeError("cmlm_loss: empty batch");
  if (forced_partitions && forced_partitions->size() != batch.size())
    throw ShapeError("cmlm_loss: forced partition count does not match batch");

  CmlmResult<S> res;
  Tensor<S> acc;
  bool have_acc = false;
  for (size_t i = 0; i < batch.size(); ++i) {
    const TrainExample<S>& ex = batch[i];
    detail::check_example(ex, i);
    const int t = static_cast<int>(ex.tokens.size());

    CmlmUtterance<S> u;
    if (forced_partitions) {
      u.partition = (*forced_partitions)[i];
      if (static_cast<int>(u.partition.masked.size()) != t)
        throw ShapeError("cmlm_loss: forced partition length mismatch at item " +
                         std::to_string(i));
      u.partition.n_masked = 0;
      for (uint8_t m : u.partition.masked) u.partition.n_masked += m ? 1 : 0;
    } else {
      u.partition = sample_cmlm_partition(t, mask_rng);
    }
    u.input = build_masked_input(ex.tokens, u.partition.masked);

    auto enc = model.encode(ex.frames, dropout_rng);
    u.logits = model.decoder_logits(u.input, enc, dropout_rng);
    u.grid = posteriors_from_logits(u.logits);

    if (u.partition.n_masked > 0) {
      std::vector<S> weights(static_cast<size_t>(t));
      for (int j = 0; j < t; ++j)
        weights[static_cast<size_t>(j)] = u.partition.masked[static_cast<size_t>(j)] ? S(1) : S(0);
      Tensor<S> term =
          scale(cross_entropy(u.logits, ex.tokens, weights, label_smoothing),
                static_cast<double>(u.partition.n_masked));
      acc = have_acc ? add(acc, term) : term;
      have_acc = true;
      res.total_masked += u.partition.n_masked;
    }
    res.utterances.push_back(std::move(u));
  }
  res.loss = have_acc ? scale(acc, 1.0 / res.total_masked) : Tensor<S>::scalar(S(0));
  return res;
}

// ---- two-pass factorized objective -----------------------------------------

template <typename S>
struct FmlmUtterance {
  std::vector<uint8_t> revealed;  // 1 = ground truth shown to pass 2, loss from pass 1
  int n_revealed = 0;
  std::vector<int> pass2_input;
  Tensor<S> pass1_logits, pass2_logits;
  PosteriorGrid combined;          // row j from pass 1 when revealed[j], else pass 2
  std::vector<uint8_t> from_pass1;  // provenance, equals revealed
};

template <typename S>
struct FmlmResult {
  Tensor<S> loss;  // scalar: every position charged exactly once, token mean
  std::vector<FmlmUtterance<S>> utterances;
  int total_positions = 0;
};

template <typename S>
FmlmResult<S> fmlm_forward(const Transformer<S>& model, const std::vector<TrainExample<S>>& batch,
                           Rng& mask_rng, Rng* dropout_rng = nullptr,
                           double label_smoothing = 0.0,
                           const std::vector<std::vector<uint8_t>>* forced_reveal = nullptr) {
  if (batch.empty()) throw ShapeError("fmlm_forward: empty batch");
  if (forced_reveal && forced_reveal->size() != batch.size())
    throw ShapeError("fmlm_forward: forced reveal count does not match batch");

  FmlmResult<S> res;
  Tensor<S> acc;
  bool have_acc = false;
  for (size_t i = 0; i < batch.size(); ++i) {
    const TrainExample<S>& ex = batch[i];
    detail::check_example(ex, i);
    const int t = static_cast<int>(ex.tokens.size());

    auto enc = model.encode(ex.frames, dropout_rng);

    FmlmUtterance<S> u;
    const std::vector<int> all_mask(static_cast<size_t>(t), kMaskId);
    u.pass1_logits = model.decoder_logits(all_mask, enc, dropout_rng);
    PosteriorGrid grid1 = posteriors_from_logits(u.pass1_logits);

    if (forced_reveal) {
      u.revealed = (*forced_reveal)[i];
      if (static_cast<int>(u.revealed.size()) != t)
        throw ShapeError("fmlm_forward: forced reveal length mismatch at item " +
                         std::to_string(i));
    } else {
      std::vector<double> confidence(static_cast<size_t>(t));
      for (int j = 0; j < t; ++j) {
        double best = 0.0;
        for (int v = 0; v < grid1.vocab; ++v) best = std::max(best, grid1.at(j, v));
        confidence[static_cast<size_t>(j)] = best;
      }
      const int keep_masked = sample_fmlm_keep_masked(t, mask_rng);
      u.revealed = fmlm_reveal_mask(confidence, t - keep_masked);
    }
    for (uint8_t r : u.revealed) u.n_revealed += r ? 1 : 0;

    u.pass2_input = ex.tokens;
    for (int j = 0; j < t; ++j)
      if (!u.revealed[static_cast<size_t>(j)]) u.pass2_input[static_cast<size_t>(j)] = kMaskId;
    u.pass2_logits = model.decoder_logits(u.pass2_input, enc, dropout_rng);
    PosteriorGrid grid2 = posteriors_from_logits(u.pass2_logits);

    std::vector<S> w1(static_cast<size_t>(t)), w2(static_cast<size_t>(t));
    for (int j = 0; j < t; ++j) {
      w1[static_cast<size_t>(j)] = u.revealed[static_cast<size_t>(j)] ? S(1) : S(0);
      w2[static_cast<size_t>(j)] = u.revealed[static_cast<size_t>(j)] ? S(0) : S(1);
    }
    if (u.n_revealed > 0) {
      Tensor<S> term = scale(cross_entropy(u.pass1_logits, ex.tokens, w1, label_smoothing),
                             static_cast<double>(u.n_revealed));
      acc = have_acc ? add(acc, term) : term;
      have_acc = true;
    }
    if (t - u.n_revealed > 0) {
      Tensor<S> term = scale(cross_entropy(u.pass2_logits, ex.tokens, w2, label_smoothing),
                             static_cast<double>(t - u.n_revealed));
      acc = have_acc ? add(acc, term) : term;
      have_acc = true;
    }

    u.from_pass1 = u.revealed;
    u.combined.t_out = t;
    u.combined.vocab = grid1.vocab;
    u.combined.p.resize(static_cast<size_t>(t) * grid1.vocab);
    for (int j = 0; j < t; ++j) {
      const double* src = u.revealed[static_cast<size_t>(j)] ? grid1.row(j) : grid2.row(j);
      std::copy(src, src + grid1.vocab,
                u.combined.p.begin() + static_cast<size_t>(j) * grid1.vocab);
    }

    res.total_positions += t;
    res.utterances.push_back(std::move(u));
  }
  res.loss = scale(acc, 1.0 / res.total_positions);
  return res;
}

}  // namespace nart
