#include <cmath>
#include <set>
#include <vector>

#include <doctest.h>

#include "gradcheck.hpp"
#include "nart/model.hpp"
#include "nart/vocab.hpp"

using nart::AttentionParams;
using nart::ModelConfig;
using nart::Rng;
using nart::Tensor;
using nart::Transformer;

namespace {

template <typename S>
Tensor<S> rand_mat(int rows, int cols, uint64_t seed) {
  Rng rng(seed);
  return Tensor<S>::randn({rows, cols}, rng);
}

ModelConfig toy_config() {
  ModelConfig cfg;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.n_encoder_blocks = 1;
  cfg.n_decoder_blocks = 1;
  cfg.feedforward_dim = 16;
  cfg.subsample_factor = 2;
  cfg.vocab_size = 9;
  cfg.max_positions = 64;
  cfg.dropout_rate = 0.0;
  cfg.d_feat = 4;
  return cfg;
}

// Identity-projection attention parameters so scores and contexts can be
// predicted by hand.
template <typename S>
AttentionParams<S> identity_attention(int d) {
  AttentionParams<S> p;
  p.wq = Tensor<S>::zeros({d, d});
  p.wk = Tensor<S>::zeros({d, d});
  p.wv = Tensor<S>::zeros({d, d});
  p.wo = Tensor<S>::zeros({d, d});
  for (int i = 0; i < d; ++i) {
    p.wq.at(i, i) = 1;
    p.wk.at(i, i) = 1;
    p.wv.at(i, i) = 1;
    p.wo.at(i, i) = 1;
  }
  p.bq = Tensor<S>::zeros({d});
  p.bk = Tensor<S>::zeros({d});
  p.bv = Tensor<S>::zeros({d});
  p.bo = Tensor<S>::zeros({d});
  return p;
}

}  // namespace

TEST_SUITE("transformer") {

TEST_CASE("model config validation") {
  CHECK_NOTHROW(ModelConfig{}.validate());

  ModelConfig bad = toy_config();
  bad.d_model = 7;  // not divisible by 2 heads
  CHECK_THROWS_AS(bad.validate(), nart::ConfigError);

  bad = toy_config();
  bad.vocab_size = nart::kNumSpecials;  // no room for content tokens
  CHECK_THROWS_AS(bad.validate(), nart::ConfigError);

  bad = toy_config();
  bad.dropout_rate = 1.0;
  CHECK_THROWS_AS(bad.validate(), nart::ConfigError);

  bad = toy_config();
  bad.subsample_factor = 0;
  CHECK_THROWS_AS(bad.validate(), nart::ConfigError);

  bad = toy_config();
  bad.n_encoder_blocks = -1;
  CHECK_THROWS_AS(bad.validate(), nart::ConfigError);

  // Zero blocks is a legal degenerate shape.
  bad = toy_config();
  bad.n_encoder_blocks = 0;
  bad.n_decoder_blocks = 0;
  CHECK_NOTHROW(bad.validate());
}

TEST_CASE("model config json round trip and digest") {
  ModelConfig cfg = toy_config();
  ModelConfig back = nart::model_from_json(nart::model_to_json(cfg), "model");
  CHECK(nart::model_to_json(back) == nart::model_to_json(cfg));

  nart::Json j = nart::model_to_json(cfg);
  j["n_head"] = 2;  // typo must be rejected, not ignored
  CHECK_THROWS_AS(nart::model_from_json(j, "model"), nart::ConfigError);

  ModelConfig other = cfg;
  other.d_model = 16;
  CHECK(nart::model_config_digest(cfg) != nart::model_config_digest(other));
  other = cfg;
  other.dropout_rate = 0.5;  // training knob, same architecture
  CHECK(nart::model_config_digest(cfg) == nart::model_config_digest(other));
}

TEST_CASE("positional encoding closed form") {
  const int d = 16;
  Tensor<double> pe = nart::positional_encoding<double>(20, d, 512);
  REQUIRE(pe.dim(0) == 20);
  REQUIRE(pe.dim(1) == d);

  // Position zero: sin(0) on even dims, cos(0) on odd dims.
  for (int j = 0; j < d; ++j) CHECK(pe.at(0, j) == (j % 2 == 0 ? 0.0 : 1.0));

  for (int t : {1, 7, 19}) {
    for (int j = 0; j < d; ++j) {
      const double angle = t / std::pow(10000.0, (2.0 * (j / 2)) / d);
      const double want = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
      CHECK(pe.at(t, j) == doctest::Approx(want).epsilon(1e-12));
    }
  }

  CHECK_THROWS_AS(nart::positional_encoding<double>(513, d, 512), nart::ConfigError);
  CHECK_THROWS_AS(nart::positional_encoding<double>(0, d, 512), nart::ShapeError);
}

TEST_CASE("positional encoding rows are pairwise distinct up to 512") {
  const int d = 64;
  const int t = 512;
  Tensor<float> pe = nart::positional_encoding<float>(t, d, 512);
  for (int a = 0; a < t; ++a) {
    for (int b = a + 1; b < t; ++b) {
      double max_diff = 0.0;
      for (int j = 0; j < d; ++j)
        max_diff = std::max(max_diff, std::abs(static_cast<double>(pe.at(a, j)) - pe.at(b, j)));
      if (max_diff <= 1e-6) {
        CAPTURE(a);
        CAPTURE(b);
        FAIL_CHECK("positions share an encoding row");
      }
    }
  }
}

TEST_CASE("encoder output length follows the subsampling formula") {
  for (int factor : {1, 2, 3, 4, 6, 7}) {
    ModelConfig cfg = toy_config();
    cfg.n_encoder_blocks = 0;  // conv stack only, cheap enough to sweep wide
    cfg.n_decoder_blocks = 0;
    cfg.subsample_factor = factor;
    cfg.max_positions = 512;
    Transformer<float> model(cfg, Rng(7));

    std::vector<int> lengths;
    for (int t = factor; t <= 40; ++t) lengths.push_back(t);
    for (int t : {127, 128, 129, 511, 512}) lengths.push_back(t);
    for (int t_in : lengths) {
      Tensor<float> frames = rand_mat<float>(t_in, cfg.d_feat, 3);
      auto enc = model.encode(frames);
      const int want = (t_in + factor - 1) / factor;
      CAPTURE(factor);
      CAPTURE(t_in);
      CHECK(enc.hidden.dim(0) == want);
      CHECK(enc.hidden.dim(1) == cfg.d_model);
      CHECK(model.subsampled_length(t_in) == want);
      REQUIRE(enc.valid.size() == static_cast<size_t>(want));
      for (uint8_t v : enc.valid) CHECK(v == 1);
    }

    if (factor > 1) {
      Tensor<float> too_short = rand_mat<float>(factor - 1, cfg.d_feat, 3);
      CHECK_THROWS_AS(model.encode(too_short), nart::ShapeError);
    }
  }
}

TEST_CASE("attention with a single key puts weight one on it") {
  const int d = 4;
  auto p = identity_attention<double>(d);
  Tensor<double> queries = rand_mat<double>(3, d, 11);
  Tensor<double> source = Tensor<double>::from({1, d}, {0.5, -1.0, 2.0, 0.25});

  auto att = nart::attention(p, queries, source, {1}, 1);
  REQUIRE(att.head_weights.size() == 1);
  for (int i = 0; i < 3; ++i) {
    CHECK(att.head_weights[0].at(i, 0) == 1.0);
    for (int j = 0; j < d; ++j) CHECK(att.out.at(i, j) == source.at(0, j));
  }
}

TEST_CASE("attention splits weight equally over identical keys") {
  const int d = 4;
  auto p = identity_attention<double>(d);
  Tensor<double> queries = rand_mat<double>(2, d, 12);
  Tensor<double> source = Tensor<double>::from({2, d}, {1.0, 2.0, 3.0, 4.0,  //
                                                        1.0, 2.0, 3.0, 4.0});

  auto att = nart::attention(p, queries, source, {1, 1}, 2);
  for (const auto& w : att.head_weights)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) CHECK(w.at(i, j) == 0.5);
  for (int j = 0; j < d; ++j) CHECK(att.out.at(0, j) == doctest::Approx(source.at(0, j)));
}

TEST_CASE("attention gives masked keys exactly zero weight") {
  const int d = 4;
  auto p = identity_attention<double>(d);
  Tensor<double> queries = rand_mat<double>(2, d, 13);
  Tensor<double> source = rand_mat<double>(3, d, 14);

  auto att = nart::attention(p, queries, source, {1, 0, 1}, 1);
  const auto& w = att.head_weights[0];
  for (int i = 0; i < 2; ++i) {
    CHECK(w.at(i, 1) == 0.0);
    CHECK(w.at(i, 0) + w.at(i, 2) == doctest::Approx(1.0).epsilon(1e-12));
  }

  CHECK_THROWS_AS(nart::attention(p, queries, source, {0, 0, 0}, 1), nart::NumericError);
}

TEST_CASE("attention context is the weight-by-value sum per head") {
  const int d = 8;
  const int heads = 2;
  const int dk = d / heads;
  Rng rng(21);
  AttentionParams<double> p;
  p.wq = Tensor<double>::randn({d, d}, rng, 0.3);
  p.wk = Tensor<double>::randn({d, d}, rng, 0.3);
  p.wv = Tensor<double>::randn({d, d}, rng, 0.3);
  p.wo = Tensor<double>::randn({d, d}, rng, 0.3);
  p.bq = Tensor<double>::randn({d}, rng, 0.1);
  p.bk = Tensor<double>::randn({d}, rng, 0.1);
  p.bv = Tensor<double>::randn({d}, rng, 0.1);
  p.bo = Tensor<double>::randn({d}, rng, 0.1);
  Tensor<double> queries = Tensor<double>::randn({5, d}, rng);
  Tensor<double> source = Tensor<double>::randn({4, d}, rng);
  std::vector<uint8_t> valid = {1, 1, 0, 1};

  auto att = nart::attention(p, queries, source, valid, heads);
  REQUIRE(att.head_weights.size() == static_cast<size_t>(heads));
  REQUIRE(att.head_values.size() == static_cast<size_t>(heads));
  REQUIRE(att.head_context.size() == static_cast<size_t>(heads));

  // Rebuild each context row from the reported weights and values, then the
  // output through wo, entirely outside the op.
  for (int h = 0; h < heads; ++h) {
    for (int i = 0; i < 5; ++i) {
      for (int j = 0; j < dk; ++j) {
        double want = 0.0;
        for (int s = 0; s < 4; ++s)
          want += att.head_weights[h].at(i, s) * att.head_values[h].at(s, j);
        CHECK(att.head_context[h].at(i, j) == doctest::Approx(want).epsilon(1e-12));
      }
    }
  }
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < d; ++j) {
      double want = p.bo.at(j);
      for (int c = 0; c < d; ++c) {
        const int h = c / dk;
        want += att.head_context[h].at(i, c % dk) * p.wo.at(c, j);
      }
      CHECK(att.out.at(i, j) == doctest::Approx(want).epsilon(1e-10));
    }
  }
}

TEST_CASE("full model gradient check at double precision") {
  ModelConfig cfg = toy_config();
  Transformer<double> model(cfg, Rng(42));

  Tensor<double> frames = rand_mat<double>(6, cfg.d_feat, 43);
  const std::vector<int> tokens = {nart::kMaskId, 4, nart::kMaskId, nart::kEosId};
  const std::vector<int> targets = {5, 4, 6, nart::kEosId};
  const std::vector<double> weights = {1.0, 0.0, 1.0, 1.0};

  auto forward = [&]() {
    auto enc = model.encode(frames);
    Tensor<double> logits = model.decoder_logits(tokens, enc);
    return nart::cross_entropy(logits, targets, weights, 0.1);
  };
  nart_test::gradcheck(model.parameters(), forward);
}

TEST_CASE("same seed builds bit-identical models, different seed does not") {
  ModelConfig cfg = toy_config();
  Transformer<float> a(cfg, Rng(5));
  Transformer<float> b(cfg, Rng(5));
  Transformer<float> c(cfg, Rng(6));

  auto& na = a.named_parameters();
  auto& nb = b.named_parameters();
  REQUIRE(na.size() == nb.size());
  bool any_diff_c = false;
  for (size_t i = 0; i < na.size(); ++i) {
    CHECK(na[i].first == nb[i].first);
    CHECK(na[i].second->values() == nb[i].second->values());
    if (c.named_parameters()[i].second->values() != na[i].second->values()) any_diff_c = true;
  }
  CHECK(any_diff_c);

  Tensor<float> frames = rand_mat<float>(8, cfg.d_feat, 9);
  const std::vector<int> tokens = {nart::kMaskId, nart::kMaskId, nart::kEosId};
  Tensor<float> la = a.decoder_logits(tokens, a.encode(frames));
  Tensor<float> lb = b.decoder_logits(tokens, b.encode(frames));
  CHECK(la.values() == lb.values());
}

TEST_CASE("parameter names are unique and cover both stacks") {
  ModelConfig cfg = toy_config();
  cfg.n_encoder_blocks = 2;
  cfg.n_decoder_blocks = 2;
  Transformer<float> model(cfg, Rng(1));
  std::set<std::string> names;
  for (auto& [name, t] : model.named_parameters()) {
    CHECK(names.insert(name).second);
    CHECK(t != nullptr);
  }
  CHECK(names.count("encoder.conv1.weight") == 1);
  CHECK(names.count("encoder.block1.attn.wq") == 1);
  CHECK(names.count("decoder.embedding") == 1);
  CHECK(names.count("decoder.block1.cross_attn.wo") == 1);
  CHECK(names.count("output.bias") == 1);
}

TEST_CASE("decoder pass counter tracks decoder forwards only") {
  ModelConfig cfg = toy_config();
  Transformer<float> model(cfg, Rng(2));
  Tensor<float> frames = rand_mat<float>(6, cfg.d_feat, 3);

  CHECK(model.decoder_pass_count() == 0);
  auto enc = model.encode(frames);
  CHECK(model.decoder_pass_count() == 0);

  const std::vector<int> tokens = {nart::kMaskId, nart::kMaskId};
  model.decoder_logits(tokens, enc);
  CHECK(model.decoder_pass_count() == 1);
  model.decoder_posteriors(tokens, enc);
  CHECK(model.decoder_pass_count() == 2);
  model.reset_decoder_pass_count();
  CHECK(model.decoder_pass_count() == 0);
}

TEST_CASE("posterior grid rows are normalized distributions") {
  ModelConfig cfg = toy_config();
  Transformer<float> model(cfg, Rng(4));
  Tensor<float> frames = rand_mat<float>(10, cfg.d_feat, 5);
  auto enc = model.encode(frames);

  std::vector<int> all_mask(5, nart::kMaskId);
  nart::PosteriorGrid grid = model.decoder_posteriors(all_mask, enc);
  CHECK(grid.t_out == 5);
  CHECK(grid.vocab == cfg.vocab_size);
  for (int t = 0; t < grid.t_out; ++t) {
    double sum = 0.0;
    for (int v = 0; v < grid.vocab; ++v) {
      CHECK(grid.at(t, v) > 0.0);
      sum += grid.at(t, v);
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("model input validation") {
  ModelConfig cfg = toy_config();
  Transformer<float> model(cfg, Rng(8));
  Tensor<float> frames = rand_mat<float>(6, cfg.d_feat, 9);
  auto enc = model.encode(frames);

  Tensor<float> bad_width = rand_mat<float>(6, cfg.d_feat + 1, 9);
  CHECK_THROWS_AS(model.encode(bad_width), nart::ShapeError);
  CHECK_THROWS_AS(model.decoder_logits({}, enc), nart::ShapeError);
  CHECK_THROWS_AS(model.decoder_logits({cfg.vocab_size}, enc), std::out_of_range);
  CHECK_THROWS_AS(model.decoder_logits({-1}, enc), std::out_of_range);
  // None of the failed calls may count as a decoder pass.
  CHECK(model.decoder_pass_count() == 0);
}

TEST_CASE("dropout changes activations only when an rng is supplied") {
  ModelConfig cfg = toy_config();
  cfg.dropout_rate = 0.5;
  Transformer<float> model(cfg, Rng(10));
  Tensor<float> frames = rand_mat<float>(6, cfg.d_feat, 11);
  const std::vector<int> tokens = {nart::kMaskId, nart::kMaskId, nart::kEosId};

  Tensor<float> quiet1 = model.decoder_logits(tokens, model.encode(frames));
  Tensor<float> quiet2 = model.decoder_logits(tokens, model.encode(frames));
  CHECK(quiet1.values() == quiet2.values());

  Rng drop(12);
  Tensor<float> noisy =
      model.decoder_logits(tokens, model.encode(frames, &drop), &drop);
  CHECK(noisy.values() != quiet1.values());

  Rng drop_a(12), drop_b(12);
  Tensor<float> noisy_a =
      model.decoder_logits(tokens, model.encode(frames, &drop_a), &drop_a);
  Tensor<float> noisy_b =
      model.decoder_logits(tokens, model.encode(frames, &drop_b), &drop_b);
  CHECK(noisy_a.values() == noisy_b.values());
}

}  // TEST_SUITE
