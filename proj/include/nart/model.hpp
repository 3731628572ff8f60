#pragma once

// Encoder-decoder transformer. The encoder subsamples feature frames with a
// strided conv stack and runs pre-norm self-attention blocks; the decoder
// consumes a (partially masked) token sequence with NO causal mask, attends
// over the encoder output, and emits per-position vocabulary logits in one
// parallel pass. Per-utterance forwards at true lengths; key-validity masks
// exist for callers that feed padded inputs.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "nart/common.hpp"
#include "nart/jsonutil.hpp"
#include "nart/tensor.hpp"
#include "nart/vocab.hpp"

namespace nart {

struct ModelConfig {
  int d_model = 64;
  int n_heads = 2;
  int n_encoder_blocks = 2;
  int n_decoder_blocks = 2;
  int feedforward_dim = 128;
  int subsample_factor = 2;
  int vocab_size = 35;  // includes PAD, EOS, MASK
  int max_positions = 512;
  double dropout_rate = 0.1;
  int d_feat = 16;  // encoder input feature width

  void validate() const;
};

Json model_to_json(const ModelConfig& cfg);
ModelConfig model_from_json(const Json& j, const std::string& context);

// Digest of the architecture-defining fields; checkpoints refuse to load
// into a differently shaped model.
uint64_t model_config_digest(const ModelConfig& cfg);

// Per-position vocabulary distributions, always at double precision.
struct PosteriorGrid {
  int t_out = 0;
  int vocab = 0;
  std::vector<double> p;  // [t_out, vocab]

  double at(int t, int v) const { return p[static_cast<size_t>(t) * vocab + v]; }
  const double* row(int t) const { return p.data() + static_cast<size_t>(t) * vocab; }
};

// ---- positional encoding ------------------------------------------------------

template <typename S>
Tensor<S> positional_encoding(int t, int d_model, int max_positions) {
  if (t < 1) throw ShapeError("positional_encoding: need at least one position");
  if (t > max_positions)
    throw ConfigError("positional_encoding: " + std::to_string(t) +
                      " positions exceed max_positions " + std::to_string(max_positions));
  Tensor<S> pe = Tensor<S>::zeros({t, d_model});
  for (int pos = 0; pos < t; ++pos) {
    for (int j = 0; j < d_model; ++j) {
      const int i = j / 2;
      const double angle = pos * std::exp(-std::log(10000.0) * (2.0 * i) / d_model);
      pe.at(pos, j) = static_cast<S>((j % 2 == 0) ? std::sin(angle) : std::cos(angle));
    }
  }
  return pe;
}

// ---- attention ------------------------------------------------------------------

template <typename S>
struct AttentionParams {
  Tensor<S> wq, wk, wv, wo;  // [d, d]
  Tensor<S> bq, bk, bv, bo;  // [d]
};

template <typename S>
struct AttentionOut {
  Tensor<S> out;                        // [Tq, d] after the output projection
  std::vector<Tensor<S>> head_weights;  // per head [Tq, Tk], rows sum to 1
  std::vector<Tensor<S>> head_values;   // per head [Tk, dk]
  std::vector<Tensor<S>> head_context;  // per head [Tq, dk] = weights x values
};

// Scaled dot-product multi-head attention over `source`; queries may equal
// source (self-attention) or come from the decoder while source is the
// encoder output (cross-attention). Invalid key positions get weight
// exactly zero; a row with no valid key is an error.
template <typename S>
AttentionOut<S> attention(const AttentionParams<S>& p, const Tensor<S>& queries,
                          const Tensor<S>& source, const std::vector<uint8_t>& key_valid,
                          int n_heads) {
  const int d = queries.dim(1);
  if (source.dim(1) != d) throw ShapeError("attention: query/source width mismatch");
  if (d % n_heads != 0) throw ShapeError("attention: d_model not divisible by head count");
  const int dk = d / n_heads;
  Tensor<S> q = add_rowvec(matmul(queries, p.wq), p.bq);
  Tensor<S> k = add_rowvec(matmul(source, p.wk), p.bk);
  Tensor<S> v = add_rowvec(matmul(source, p.wv), p.bv);

  AttentionOut<S> res;
  std::vector<Tensor<S>> contexts;
  for (int h = 0; h < n_heads; ++h) {
    Tensor<S> qh = slice_cols(q, h * dk, dk);
    Tensor<S> kh = slice_cols(k, h * dk, dk);
    Tensor<S> vh = slice_cols(v, h * dk, dk);
    Tensor<S> scores = scale(matmul(qh, transpose(kh)), 1.0 / std::sqrt(static_cast<double>(dk)));
    Tensor<S> weights = masked_softmax_rows(scores, key_valid);
    if (debug_checks_enabled()) {
      const int tq = weights.dim(0), tk = weights.dim(1);
      for (int i = 0; i < tq; ++i) {
        double row_sum = 0.0;
        for (int j = 0; j < tk; ++j) {
          const double w = static_cast<double>(weights.at(i, j));
          if (!key_valid[static_cast<size_t>(j)] && w >= 1e-9)
            throw NumericError("attention: masked key received nonzero weight");
          row_sum += w;
        }
        if (std::abs(row_sum - 1.0) > 1e-6)
          throw NumericError("attention: weight row does not sum to 1");
      }
    }
    Tensor<S> ctx = matmul(weights, vh);
    res.head_weights.push_back(weights);
    res.head_values.push_back(vh);
    res.head_context.push_back(ctx);
    contexts.push_back(ctx);
  }
  Tensor<S> merged = n_heads == 1 ? contexts[0] : concat_cols(contexts);
  res.out = add_rowvec(matmul(merged, p.wo), p.bo);
  return res;
}

// ---- building blocks ---------------------------------------------------------

template <typename S>
struct LayerNormParams {
  Tensor<S> gain, bias;
};

template <typename S>
struct FeedForwardParams {
  Tensor<S> w1, b1, w2, b2;
};

template <typename S>
struct EncoderBlock {
  LayerNormParams<S> ln1, ln2;
  AttentionParams<S> attn;
  FeedForwardParams<S> ff;
};

template <typename S>
struct DecoderBlock {
  LayerNormParams<S> ln1, ln2, ln3;
  AttentionParams<S> self_attn;
  AttentionParams<S> cross_attn;
  FeedForwardParams<S> ff;
};

template <typename S>
struct Encoded {
  Tensor<S> hidden;            // [T_sub, d_model]
  std::vector<uint8_t> valid;  // position maps to at least one valid frame
};

// ---- the model ------------------------------------------------------------------

template <typename S>
class Transformer {
 public:
  Transformer(ModelConfig cfg, Rng init_rng) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const int d = cfg_.d_model;
    std::tie(stride1_, stride2_) = conv_strides(cfg_.subsample_factor);
    conv1_w_ = he_init({kConvKernel, cfg_.d_feat, d}, kConvKernel * cfg_.d_feat, init_rng);
    conv1_b_ = Tensor<S>::zeros({d});
    conv2_w_ = he_init({kConvKernel, d, d}, kConvKernel * d, init_rng);
    conv2_b_ = Tensor<S>::zeros({d});
    for (int b = 0; b < cfg_.n_encoder_blocks; ++b) {
      EncoderBlock<S> blk;
      blk.ln1 = make_ln(d);
      blk.attn = make_attention(d, init_rng);
      blk.ln2 = make_ln(d);
      blk.ff = make_ff(d, cfg_.feedforward_dim, init_rng);
      encoder_blocks_.push_back(std::move(blk));
    }
    encoder_ln_ = make_ln(d);
    embedding_ = Tensor<S>::randn({cfg_.vocab_size, d}, init_rng, 0.02);
    for (int b = 0; b < cfg_.n_decoder_blocks; ++b) {
      DecoderBlock<S> blk;
      blk.ln1 = make_ln(d);
      blk.self_attn = make_attention(d, init_rng);
      blk.ln2 = make_ln(d);
      blk.cross_attn = make_attention(d, init_rng);
      blk.ln3 = make_ln(d);
      blk.ff = make_ff(d, cfg_.feedforward_dim, init_rng);
      decoder_blocks_.push_back(std::move(blk));
    }
    decoder_ln_ = make_ln(d);
    out_w_ = xavier_init({d, cfg_.vocab_size}, d, cfg_.vocab_size, init_rng);
    out_b_ = Tensor<S>::zeros({cfg_.vocab_size});
    register_parameters();
  }

  const ModelConfig& config() const { return cfg_; }

  int subsampled_length(int t_in) const {
    const int a = (t_in + stride1_ - 1) / stride1_;
    return (a + stride2_ - 1) / stride2_;
  }

  Encoded<S> encode(const Tensor<S>& frames, const std::vector<uint8_t>& frame_valid,
                    Rng* dropout_rng = nullptr) const {
    if (frames.ndim() != 2 || frames.dim(1) != cfg_.d_feat)
      throw ShapeError("encode: frames must be [T_in, " + std::to_string(cfg_.d_feat) + "]");
    const int t_in = frames.dim(0);
    if (t_in < 1) throw ShapeError("encode: empty frame sequence");
    if (t_in < cfg_.subsample_factor)
      throw ShapeError("encode: need at least subsample_factor (" +
                       std::to_string(cfg_.subsample_factor) + ") frames, got " +
                       std::to_string(t_in));
    if (static_cast<int>(frame_valid.size()) != t_in)
      throw ShapeError("encode: frame validity mask length mismatch");

    Tensor<S> x = relu(conv1d(frames, conv1_w_, conv1_b_, stride1_));
    x = relu(conv1d(x, conv2_w_, conv2_b_, stride2_));
    const int t_sub = x.dim(0);
    x = add(x, positional_encoding<S>(t_sub, cfg_.d_model, cfg_.max_positions));
    x = maybe_dropout(x, dropout_rng);

    Encoded<S> enc;
    // A subsampled position is valid when its input window holds at least
    // one valid frame; with per-utterance true-length inputs this is all 1s.
    enc.valid.assign(static_cast<size_t>(t_sub), 0);
    const int factor = stride1_ * stride2_;
    for (int t = 0; t < t_sub; ++t) {
      const int lo = t * factor;
      const int hi = std::min(t_in, (t + 1) * factor);
      for (int q = lo; q < hi; ++q)
        if (frame_valid[static_cast<size_t>(q)]) enc.valid[static_cast<size_t>(t)] = 1;
    }

    for (const auto& blk : encoder_blocks_) {
      Tensor<S> normed = layer_norm(x, blk.ln1.gain, blk.ln1.bias);
      auto att = attention(blk.attn, normed, normed, enc.valid, cfg_.n_heads);
      x = add(x, maybe_dropout(att.out, dropout_rng));
      x = add(x, maybe_dropout(feed_forward(blk.ff, layer_norm(x, blk.ln2.gain, blk.ln2.bias)),
                               dropout_rng));
    }
    enc.hidden = layer_norm(x, encoder_ln_.gain, encoder_ln_.bias);
    return enc;
  }

  Encoded<S> encode(const Tensor<S>& frames, Rng* dropout_rng = nullptr) const {
    return encode(frames, std::vector<uint8_t>(static_cast<size_t>(frames.dim(0)), 1),
                  dropout_rng);
  }

  // One parallel decoder pass: logits at every position, full bidirectional
  // self-attention (PAD keys masked, nothing causal).
  Tensor<S> decoder_logits(const std::vector<int>& tokens, const Encoded<S>& encoded,
                           Rng* dropout_rng = nullptr) const {
    const int t_out = static_cast<int>(tokens.size());
    if (t_out < 1) throw ShapeError("decoder: empty token sequence");
    for (int id : tokens)
      if (id < 0 || id >= cfg_.vocab_size)
        throw std::out_of_range("decoder: token id " + std::to_string(id) +
                                " outside vocabulary of size " + std::to_string(cfg_.vocab_size));
    decoder_passes_.fetch_add(1, std::memory_order_relaxed);

    std::vector<uint8_t> token_valid(static_cast<size_t>(t_out));
    for (int t = 0; t < t_out; ++t)
      token_valid[static_cast<size_t>(t)] = tokens[static_cast<size_t>(t)] != kPadId ? 1 : 0;

    Tensor<S> x = scale(embedding_lookup(embedding_, tokens),
                        std::sqrt(static_cast<double>(cfg_.d_model)));
    x = add(x, positional_encoding<S>(t_out, cfg_.d_model, cfg_.max_positions));
    x = maybe_dropout(x, dropout_rng);

    for (const auto& blk : decoder_blocks_) {
      Tensor<S> normed = layer_norm(x, blk.ln1.gain, blk.ln1.bias);
      auto self_att = attention(blk.self_attn, normed, normed, token_valid, cfg_.n_heads);
      x = add(x, maybe_dropout(self_att.out, dropout_rng));
      auto cross_att = attention(blk.cross_attn, layer_norm(x, blk.ln2.gain, blk.ln2.bias),
                                 encoded.hidden, encoded.valid, cfg_.n_heads);
      x = add(x, maybe_dropout(cross_att.out, dropout_rng));
      x = add(x, maybe_dropout(feed_forward(blk.ff, layer_norm(x, blk.ln3.gain, blk.ln3.bias)),
                               dropout_rng));
    }
    x = layer_norm(x, decoder_ln_.gain, decoder_ln_.bias);
    return add_rowvec(matmul(x, out_w_), out_b_);
  }

  PosteriorGrid decoder_posteriors(const std::vector<int>& tokens, const Encoded<S>& encoded,
                                   Rng* dropout_rng = nullptr) const {
    return posteriors_from_logits(decoder_logits(tokens, encoded, dropout_rng));
  }

  uint64_t decoder_pass_count() const { return decoder_passes_.load(std::memory_order_relaxed); }
  void reset_decoder_pass_count() const { decoder_passes_.store(0, std::memory_order_relaxed); }

  const std::vector<std::pair<std::string, Tensor<S>*>>& named_parameters() { return named_; }
  std::vector<Tensor<S>*> parameters() {
    std::vector<Tensor<S>*> out;
    for (auto& [name, t] : named_) out.push_back(t);
    return out;
  }
  void set_requires_grad(bool on) {
    for (auto& [name, t] : named_) t->set_requires_grad(on);
  }
  void zero_grad() {
    for (auto& [name, t] : named_) t->zero_grad();
  }

 private:
  static constexpr int kConvKernel = 3;

  static std::pair<int, int> conv_strides(int factor) {
    if (factor == 1) return {1, 1};
    if (factor % 2 == 0) return {2, factor / 2};
    return {factor, 1};
  }

  static Tensor<S> he_init(Shape shape, int fan_in, Rng& rng) {
    return Tensor<S>::randn(std::move(shape), rng, std::sqrt(2.0 / fan_in));
  }
  static Tensor<S> xavier_init(Shape shape, int fan_in, int fan_out, Rng& rng) {
    return Tensor<S>::randn(std::move(shape), rng, std::sqrt(2.0 / (fan_in + fan_out)));
  }
  LayerNormParams<S> make_ln(int d) {
    return {Tensor<S>::full({d}, S(1)), Tensor<S>::zeros({d})};
  }
  AttentionParams<S> make_attention(int d, Rng& rng) {
    AttentionParams<S> p;
    p.wq = xavier_init({d, d}, d, d, rng);
    p.wk = xavier_init({d, d}, d, d, rng);
    p.wv = xavier_init({d, d}, d, d, rng);
    p.wo = xavier_init({d, d}, d, d, rng);
    p.bq = Tensor<S>::zeros({d});
    p.bk = Tensor<S>::zeros({d});
    p.bv = Tensor<S>::zeros({d});
    p.bo = Tensor<S>::zeros({d});
    return p;
  }
  FeedForwardParams<S> make_ff(int d, int ff, Rng& rng) {
    FeedForwardParams<S> p;
    p.w1 = xavier_init({d, ff}, d, ff, rng);
    p.b1 = Tensor<S>::zeros({ff});
    p.w2 = xavier_init({ff, d}, ff, d, rng);
    p.b2 = Tensor<S>::zeros({d});
    return p;
  }

  Tensor<S> feed_forward(const FeedForwardParams<S>& p, const Tensor<S>& x) const {
    return add_rowvec(matmul(relu(add_rowvec(matmul(x, p.w1), p.b1)), p.w2), p.b2);
  }

  Tensor<S> maybe_dropout(const Tensor<S>& x, Rng* rng) const {
    if (!rng || cfg_.dropout_rate == 0.0) return x;
    return dropout(x, cfg_.dropout_rate, *rng);
  }

  void register_attention(const std::string& prefix, AttentionParams<S>& p) {
    named_.emplace_back(prefix + ".wq", &p.wq);
    named_.emplace_back(prefix + ".wk", &p.wk);
    named_.emplace_back(prefix + ".wv", &p.wv);
    named_.emplace_back(prefix + ".wo", &p.wo);
    named_.emplace_back(prefix + ".bq", &p.bq);
    named_.emplace_back(prefix + ".bk", &p.bk);
    named_.emplace_back(prefix + ".bv", &p.bv);
    named_.emplace_back(prefix + ".bo", &p.bo);
  }
  void register_ln(const std::string& prefix, LayerNormParams<S>& p) {
    named_.emplace_back(prefix + ".gain", &p.gain);
    named_.emplace_back(prefix + ".bias", &p.bias);
  }
  void register_ff(const std::string& prefix, FeedForwardParams<S>& p) {
    named_.emplace_back(prefix + ".w1", &p.w1);
    named_.emplace_back(prefix + ".b1", &p.b1);
    named_.emplace_back(prefix + ".w2", &p.w2);
    named_.emplace_back(prefix + ".b2", &p.b2);
  }
  void register_parameters() {
    named_.emplace_back("encoder.conv1.weight", &conv1_w_);
    named_.emplace_back("encoder.conv1.bias", &conv1_b_);
    named_.emplace_back("encoder.conv2.weight", &conv2_w_);
    named_.emplace_back("encoder.conv2.bias", &conv2_b_);
    for (size_t b = 0; b < encoder_blocks_.size(); ++b) {
      const std::string prefix = "encoder.block" + std::to_string(b);
      register_ln(prefix + ".ln1", encoder_blocks_[b].ln1);
      register_attention(prefix + ".attn", encoder_blocks_[b].attn);
      register_ln(prefix + ".ln2", encoder_blocks_[b].ln2);
      register_ff(prefix + ".ff", encoder_blocks_[b].ff);
    }
    register_ln("encoder.final_ln", encoder_ln_);
    named_.emplace_back("decoder.embedding", &embedding_);
    for (size_t b = 0; b < decoder_blocks_.size(); ++b) {
      const std::string prefix = "decoder.block" + std::to_string(b);
      register_ln(prefix + ".ln1", decoder_blocks_[b].ln1);
      register_attention(prefix + ".self_attn", decoder_blocks_[b].self_attn);
      register_ln(prefix + ".ln2", decoder_blocks_[b].ln2);
      register_attention(prefix + ".cross_attn", decoder_blocks_[b].cross_attn);
      register_ln(prefix + ".ln3", decoder_blocks_[b].ln3);
      register_ff(prefix + ".ff", decoder_blocks_[b].ff);
    }
    register_ln("decoder.final_ln", decoder_ln_);
    named_.emplace_back("output.weight", &out_w_);
    named_.emplace_back("output.bias", &out_b_);
  }

  ModelConfig cfg_;
  int stride1_ = 1, stride2_ = 1;
  Tensor<S> conv1_w_, conv1_b_, conv2_w_, conv2_b_;
  std::vector<EncoderBlock<S>> encoder_blocks_;
  LayerNormParams<S> encoder_ln_;
  Tensor<S> embedding_;
  std::vector<DecoderBlock<S>> decoder_blocks_;
  LayerNormParams<S> decoder_ln_;
  Tensor<S> out_w_, out_b_;
  std::vector<std::pair<std::string, Tensor<S>*>> named_;
  mutable std::atomic<uint64_t> decoder_passes_{0};
};

// Stable row softmax of logits at double precision, with normalization
// verified when debug checks are on.
template <typename S>
PosteriorGrid posteriors_from_logits(const Tensor<S>& logits) {
  if (logits.ndim() != 2) throw ShapeError("posteriors: expected [T_out, vocab] logits");
  PosteriorGrid grid;
  grid.t_out = logits.dim(0);
  grid.vocab = logits.dim(1);
  grid.p.resize(static_cast<size_t>(grid.t_out) * grid.vocab);
  for (int t = 0; t < grid.t_out; ++t) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int v = 0; v < grid.vocab; ++v)
      mx = std::max(mx, static_cast<double>(logits.at(t, v)));
    double denom = 0.0;
    for (int v = 0; v < grid.vocab; ++v)
      denom += std::exp(static_cast<double>(logits.at(t, v)) - mx);
    for (int v = 0; v < grid.vocab; ++v)
      grid.p[static_cast<size_t>(t) * grid.vocab + v] =
          std::exp(static_cast<double>(logits.at(t, v)) - mx) / denom;
    if (debug_checks_enabled()) {
      double sum = 0.0;
      for (int v = 0; v < grid.vocab; ++v) sum += grid.at(t, v);
      if (std::abs(sum - 1.0) > 1e-6)
        throw NumericError("posteriors: row does not sum to 1");
    }
  }
  return grid;
}

}  // namespace nart
