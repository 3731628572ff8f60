// Acceptance harness: one line per criterion, [PASS]/[FAIL], exit code is
// the number of failures. Runs standalone (not under doctest) because the
// training criteria take minutes and print their own progress.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "nart/checkpoint.hpp"
#include "nart/decode.hpp"
#include "nart/eval.hpp"
#include "nart/masking.hpp"
#include "nart/train.hpp"

using namespace nart;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int idx, bool pass, const std::string& detail) {
  std::printf("[%s] criterion %2d: %s\n", pass ? "PASS" : "FAIL", idx, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof(buf), f, ap);
  va_end(ap);
  return buf;
}

double now_seconds(const std::chrono::steady_clock::time_point& from) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - from).count();
}

// ---- criterion 1: finite-difference gradient integrity ---------------------

ModelConfig toy_config() {
  ModelConfig cfg;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.n_encoder_blocks = 1;
  cfg.n_decoder_blocks = 1;
  cfg.feedforward_dim = 16;
  cfg.vocab_size = 9;
  cfg.d_feat = 4;
  cfg.dropout_rate = 0.0;
  return cfg;
}

std::vector<TrainExample<double>> toy_batch() {
  Rng rng(31);
  std::vector<TrainExample<double>> batch;
  batch.push_back({Tensor<double>::randn({6, 4}, rng), {5, 4, 6, kEosId}});
  batch.push_back({Tensor<double>::randn({4, 4}, rng), {7, 3, kEosId}});
  return batch;
}

// Central finite differences against one taped backward pass; the loss runs
// through every differentiable op in the stack (frame projection, attention,
// layer norm, feedforward, embedding, softmax cross-entropy).
double max_grad_rel_err(Transformer<double>& model,
                        const std::function<Tensor<double>()>& forward) {
  const auto params = model.parameters();
  for (auto* p : params) {
    p->set_requires_grad(true);
    p->node->grad.assign(p->values().size(), 0.0);
  }
  std::vector<std::vector<double>> analytic;
  {
    Tape<double> tape;
    Tensor<double> loss = forward();
    tape.backward(loss);
  }
  for (auto* p : params) analytic.push_back(p->node->grad);

  const auto eval = [&] {
    Tape<double> tape;
    return forward().item();
  };
  const double h = 1e-5;
  double worst = 0.0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& vals = params[pi]->values();
    for (size_t i = 0; i < vals.size(); ++i) {
      const double keep = vals[i];
      vals[i] = keep + h;
      const double up = eval();
      vals[i] = keep - h;
      const double dn = eval();
      vals[i] = keep;
      const double fd = (up - dn) / (2.0 * h);
      // The denominator floor absorbs rounding noise on parameters whose
      // true gradient is exactly zero (key-projection biases cancel in the
      // attention softmax).
      const double rel = std::abs(fd - analytic[pi][i]) /
                         std::max({std::abs(fd), std::abs(analytic[pi][i]), 1e-6});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

void criterion_1() {
  const auto start = std::chrono::steady_clock::now();
  Transformer<double> model(toy_config(), Rng(7));
  const auto batch = toy_batch();

  std::vector<MaskPartition> parts;
  parts.push_back({{1, 0, 1, 0}, 2});
  parts.push_back({{0, 1, 1}, 2});
  const double cmlm_err = max_grad_rel_err(model, [&] {
    Rng r(2);
    return cmlm_loss(model, batch, r, nullptr, 0.1, &parts).loss;
  });

  std::vector<std::vector<uint8_t>> reveal;
  reveal.push_back({1, 0, 0, 1});
  reveal.push_back({0, 1, 0});
  const double fmlm_err = max_grad_rel_err(model, [&] {
    Rng r(3);
    return fmlm_forward(model, batch, r, nullptr, 0.1, &reveal).loss;
  });

  const double secs = now_seconds(start);
  const double worst = std::max(cmlm_err, fmlm_err);
  report(1, worst < 1e-4 && secs < 120.0,
         fmt("gradient integrity: max rel err %.2e (cmlm %.2e, fmlm %.2e) in %.1f s "
             "(tol 1e-4, budget 120 s)",
             worst, cmlm_err, fmlm_err, secs));
}

// ---- criterion 2: left-to-right chain == naive greedy loop -----------------

void criterion_2() {
  int mismatches = 0;
  int pairs = 0;
  for (int trial = 0; trial < 100; ++trial) {
    ModelConfig cfg = toy_config();
    Transformer<float> model(cfg, Rng(1000 + static_cast<uint64_t>(trial)));
    Rng rng(2000 + static_cast<uint64_t>(trial));
    const int t_in = 4 + static_cast<int>(rng.uniform_int(0, 8));
    const int length = 2 + static_cast<int>(rng.uniform_int(0, 6));
    const auto frames = Tensor<float>::randn({t_in, cfg.d_feat}, rng);
    const auto enc = model.encode(frames);

    DecodeConfig dcfg;
    dcfg.strategy = Strategy::left_to_right;
    dcfg.k = length;
    dcfg.l_init = length;
    dcfg.length_mode = LengthMode::fixed;
    const auto res = run_decode(model, enc, dcfg);

    // Greedy reference: commit position i from a decode over the current
    // prefix plus masks, exactly one position per pass.
    std::vector<int> hyp(static_cast<size_t>(length), kMaskId);
    for (int i = 0; i < length; ++i) {
      const auto grid = model.decoder_posteriors(hyp, enc);
      hyp[static_cast<size_t>(i)] = argmax_legal(grid.row(i), grid.vocab);
    }
    ++pairs;
    if (hyp != res.committed) ++mismatches;
  }
  report(2, mismatches == 0,
         fmt("autoregressive equivalence: %d mismatches over %d (model, input) pairs",
             mismatches, pairs));
}

// ---- criteria 3/4/5: schedule counts on scripted posteriors ----------------

// Deterministic fake model: the grid is a pure function of the decoder
// input, so strategy mechanics can be checked for any length without
// training anything and identical hypotheses always see identical rows.
struct RandomGridModel {
  int vocab = 9;
  uint64_t seed = 1;

  PosteriorGrid decoder_posteriors(const std::vector<int>& tokens, const int& /*enc*/) const {
    uint64_t h = seed;
    for (int t : tokens) h = mix64(h ^ static_cast<uint64_t>(t + 1));
    Rng rng(h);
    PosteriorGrid g;
    g.t_out = static_cast<int>(tokens.size());
    g.vocab = vocab;
    g.p.assign(static_cast<size_t>(g.t_out) * static_cast<size_t>(vocab), 0.0);
    for (int t = 0; t < g.t_out; ++t) {
      double sum = 0.0;
      std::vector<double> row(static_cast<size_t>(vocab));
      for (int v = 0; v < vocab; ++v) {
        row[static_cast<size_t>(v)] = 0.05 + rng.uniform_real();
        sum += row[static_cast<size_t>(v)];
      }
      for (int v = 0; v < vocab; ++v)
        g.p[static_cast<size_t>(t) * static_cast<size_t>(vocab) + static_cast<size_t>(v)] =
            row[static_cast<size_t>(v)] / sum;
    }
    return g;
  }
};

void criterion_3() {
  int deviations = 0;
  int64_t checked = 0;
  for (int length = 1; length <= 64; ++length) {
    for (int k = 1; k <= 8; ++k) {
      RandomGridModel model;
      model.seed = static_cast<uint64_t>(length) * 100 + static_cast<uint64_t>(k);
      const int enc = 0;

      DecodeConfig ef;
      ef.strategy = Strategy::easy_first;
      ef.k = k;
      ef.l_init = length;
      ef.length_mode = LengthMode::fixed;
      const auto res = run_decode(model, enc, ef);
      const int c = (length + k - 1) / k;
      int remaining = length;
      for (size_t i = 0; i < res.trace.size(); ++i) {
        const bool final_iter = i + 1 == res.trace.size();
        const int expect = final_iter ? remaining : std::min(c, remaining);
        if (static_cast<int>(res.trace[i].committed.size()) != expect) ++deviations;
        remaining -= static_cast<int>(res.trace[i].committed.size());
        ++checked;
      }
      if (remaining != 0) ++deviations;

      DecodeConfig mp = ef;
      mp.strategy = Strategy::mask_predict;
      const auto mres = run_decode(model, enc, mp);
      if (static_cast<int>(mres.trace.size()) != k) ++deviations;
      for (int it = 1; it <= static_cast<int>(mres.trace.size()); ++it) {
        const auto expect = static_cast<int>(
            (static_cast<long long>(length) * (k - it) + k - 1) / k);
        if (mres.trace[static_cast<size_t>(it - 1)].masked_after != expect) ++deviations;
        ++checked;
      }
    }
  }
  report(3, deviations == 0,
         fmt("schedule-count exactness: %d deviations over %lld iteration checks "
             "(L in [1,64], K in [1,8])",
             deviations, static_cast<long long>(checked)));
}

void criterion_4() {
  int mismatches = 0;
  for (int trial = 0; trial < 40; ++trial) {
    RandomGridModel model;
    model.seed = 500 + static_cast<uint64_t>(trial);
    const int enc = 0;
    const int length = 1 + trial % 12;

    DecodeConfig base;
    base.k = 1;
    base.l_init = length;
    base.length_mode = LengthMode::fixed;

    DecodeConfig ef = base;
    ef.strategy = Strategy::easy_first;
    DecodeConfig mp = base;
    mp.strategy = Strategy::mask_predict;
    DecodeConfig os = base;
    os.strategy = Strategy::custom;
    os.custom_schedule = one_shot_schedule(length);

    const auto a = run_decode(model, enc, ef);
    const auto b = run_decode(model, enc, mp);
    const auto c = run_decode(model, enc, os);
    if (a.committed != b.committed || a.committed != c.committed) ++mismatches;
    if (a.tokens != b.tokens || a.tokens != c.tokens) ++mismatches;
  }
  report(4, mismatches == 0,
         fmt("one-pass degeneracy: %d mismatches over 40 inputs (easy-first, mask-predict, "
             "one-shot schedule at K=1)",
             mismatches));
}

void criterion_5() {
  RandomGridModel model;
  model.seed = 99;
  const int enc = 0;

  DecodeConfig ef;
  ef.strategy = Strategy::easy_first;
  ef.k = 3;
  ef.l_init = 5;
  ef.length_mode = LengthMode::fixed;
  const auto eres = run_decode(model, enc, ef);
  std::vector<int> commits;
  for (const auto& it : eres.trace) commits.push_back(static_cast<int>(it.committed.size()));

  DecodeConfig mp = ef;
  mp.strategy = Strategy::mask_predict;
  const auto mres = run_decode(model, enc, mp);
  std::vector<int> masked;
  for (const auto& it : mres.trace) masked.push_back(it.masked_after);

  const bool pass = commits == std::vector<int>{2, 2, 1} && masked == std::vector<int>{4, 2, 0};
  report(5, pass,
         fmt("worked example L=5 K=3: easy-first commits %d/%d/%d (want 2/2/1), mask-predict "
             "masked %d/%d/%d (want 4/2/0)",
             commits.size() > 0 ? commits[0] : -1, commits.size() > 1 ? commits[1] : -1,
             commits.size() > 2 ? commits[2] : -1, masked.size() > 0 ? masked[0] : -1,
             masked.size() > 1 ? masked[1] : -1, masked.size() > 2 ? masked[2] : -1));
}

// ---- criterion 6: masking distributions ------------------------------------

void criterion_6() {
  const int n = 100000;
  const int t = 7;
  Rng rng(123);

  std::vector<int> count_hist(static_cast<size_t>(t) + 1, 0);
  std::vector<int> pos_hist(static_cast<size_t>(t), 0);
  for (int i = 0; i < n; ++i) {
    const auto part = sample_cmlm_partition(t, rng);
    ++count_hist[static_cast<size_t>(part.n_masked)];
    for (int p = 0; p < t; ++p)
      if (part.masked[static_cast<size_t>(p)]) ++pos_hist[static_cast<size_t>(p)];
  }
  double worst_sigma = 0.0;
  for (int c = 1; c <= t; ++c) {
    const double expect = static_cast<double>(n) / t;
    const double sd = std::sqrt(static_cast<double>(n) * (1.0 / t) * (1.0 - 1.0 / t));
    worst_sigma = std::max(worst_sigma, std::abs(count_hist[static_cast<size_t>(c)] - expect) / sd);
  }
  // Position marginal: P(masked) = E[|T_M|]/T = (T+1)/(2T).
  const double p_pos = static_cast<double>(t + 1) / (2.0 * t);
  for (int p = 0; p < t; ++p) {
    const double expect = n * p_pos;
    const double sd = std::sqrt(n * p_pos * (1.0 - p_pos));
    worst_sigma = std::max(worst_sigma, std::abs(pos_hist[static_cast<size_t>(p)] - expect) / sd);
  }

  // A-FMLM: Z = number of positions staying masked, uniform over {0..T}.
  std::vector<int> z_hist(static_cast<size_t>(t) + 1, 0);
  Rng zrng(321);
  for (int i = 0; i < n; ++i) ++z_hist[static_cast<size_t>(sample_fmlm_keep_masked(t, zrng))];
  for (int z = 0; z <= t; ++z) {
    const double p = 1.0 / (t + 1);
    const double expect = n * p;
    const double sd = std::sqrt(n * p * (1.0 - p));
    worst_sigma = std::max(worst_sigma, std::abs(z_hist[static_cast<size_t>(z)] - expect) / sd);
  }
  report(6, worst_sigma < 3.0,
         fmt("mask distributions over %dk draws: worst deviation %.2f sigma (limit 3)", n / 1000,
             worst_sigma));
}

// ---- criteria 7/8/9: end-to-end training, speedup, length stress -----------

std::unique_ptr<Transformer<float>> train_framework(const Corpus& corpus,
                                                    const std::string& framework, int epochs,
                                                    double* minutes) {
  TrainConfig tcfg;
  tcfg.epochs = epochs;
  tcfg.batch_size = 32;
  tcfg.base_lr = 2.0;
  tcfg.warmup_steps = 800;
  tcfg.framework = framework;
  tcfg.label_smoothing = 0.1;

  auto model =
      std::make_unique<Transformer<float>>(ModelConfig{}, Rng(404).derive(framework));
  const auto start = std::chrono::steady_clock::now();
  train(*model, corpus.train, tcfg, 404, nullptr, [&](const EpochStats& es) {
    std::printf("  %s epoch %2d/%d  loss %.4f  (%.0f s)\n", framework.c_str(), es.epoch,
                tcfg.epochs, es.mean_loss, es.seconds);
    std::fflush(stdout);
  });
  *minutes = now_seconds(start) / 60.0;
  return model;
}

struct ScoredDecode {
  double cer = 0.0;
  double mean_passes = 0.0;
  double mean_emitted = 0.0;  // committed slots incl. EOS (AR: emitted count)
  AlignmentStats totals;
  bool passes_match_budget = true;  // every utterance: passes == K (+1 on resize)
};

std::vector<int> strip_eos_copy(std::vector<int> tokens) {
  while (!tokens.empty() && tokens.back() == kEosId) tokens.pop_back();
  return tokens;
}

enum class Protocol { ar_loop, nat, oracle_length };

// ar_loop and nat infer the output length (EOS stop / first-pass EOS scan);
// oracle_length decodes at the reference length to isolate content quality.
ScoredDecode decode_split(Transformer<float>& model, const std::vector<Utterance>& split,
                          DecodeConfig dcfg, Protocol protocol) {
  ScoredDecode out;
  std::vector<TokenPair> pairs;
  model.reset_decoder_pass_count();
  for (const auto& utt : split) {
    const auto enc = model.encode(utt.frames);
    if (protocol == Protocol::oracle_length) {
      dcfg.l_init = static_cast<int>(utt.tokens.size());
      dcfg.length_mode = LengthMode::fixed;
    }
    const auto res = protocol == Protocol::ar_loop ? decode_ar_greedy(model, enc, dcfg.l_init)
                                                   : run_decode(model, enc, dcfg);
    if (protocol == Protocol::nat && res.passes != dcfg.k + (res.resized ? 1 : 0))
      out.passes_match_budget = false;
    pairs.push_back({strip_eos_copy(utt.tokens), res.tokens});
    out.mean_emitted += static_cast<double>(res.committed.size());
  }
  out.mean_passes =
      static_cast<double>(model.decoder_pass_count()) / static_cast<double>(split.size());
  out.mean_emitted /= static_cast<double>(split.size());
  out.cer = corpus_cer(pairs);
  out.totals = corpus_totals(pairs);
  return out;
}

void criteria_7_8_9() {
  const TaskConfig task;
  std::printf("  generating default corpus (%d train utterances)...\n", task.n_train);
  std::fflush(stdout);
  const Corpus corpus = gen_corpus(task);

  double cmlm_minutes = 0.0, fmlm_minutes = 0.0;
  const auto cmlm = train_framework(corpus, "cmlm", 60, &cmlm_minutes);
  const auto fmlm = train_framework(corpus, "fmlm", 30, &fmlm_minutes);

  DecodeConfig nat3;
  nat3.strategy = Strategy::easy_first;
  nat3.k = 3;
  nat3.l_init = task.len_max + 1;
  nat3.length_mode = LengthMode::eos_after_first_pass;
  DecodeConfig nat1 = nat3;
  nat1.k = 1;

  const auto ar = decode_split(*cmlm, corpus.test, nat3, Protocol::ar_loop);
  const auto cm = decode_split(*cmlm, corpus.test, nat3, Protocol::nat);
  const auto fm = decode_split(*fmlm, corpus.test, nat1, Protocol::nat);

  // Oracle-length companions separate content accuracy from length
  // inference when judging a failure.
  DecodeConfig ltr = nat3;
  ltr.strategy = Strategy::left_to_right;
  const auto ar_o = decode_split(*cmlm, corpus.test, ltr, Protocol::oracle_length);
  const auto cm_o = decode_split(*cmlm, corpus.test, nat3, Protocol::oracle_length);
  const auto fm_o = decode_split(*fmlm, corpus.test, nat1, Protocol::oracle_length);
  std::printf("  [diagnostic] oracle-length cer: left-to-right %.4f, "
              "A-CMLM easy-first K=3 %.4f, A-FMLM easy-first K=1 %.4f\n",
              ar_o.cer, cm_o.cer, fm_o.cer);

  const bool c7 = ar.cer <= 0.02 && cm.cer <= ar.cer + 0.03 && fm.cer <= ar.cer + 0.03 &&
                  cmlm_minutes < 30.0 && fmlm_minutes < 30.0;
  report(7, c7,
         fmt("end-to-end: AR greedy cer %.4f (need <= 0.02), A-CMLM easy-first K=3 cer %.4f, "
             "A-FMLM easy-first K=1 cer %.4f (each <= AR+0.03); training %.1f / %.1f min (< 30)",
             ar.cer, cm.cer, fm.cer, cmlm_minutes, fmlm_minutes));

  const double speedup = ar.mean_passes / cm.mean_passes;
  const bool c8 = cm.passes_match_budget && ar.mean_emitted >= 12.0 && speedup >= 3.0;
  report(8, c8,
         fmt("speedup structure: passes == K(+1 on resize) %s; AR emits %.1f tokens/utt "
             "(>= 12) in %.1f passes vs NAT %.2f passes, pass-ratio speedup %.2f (>= 3.0)",
             cm.passes_match_budget ? "holds" : "VIOLATED", ar.mean_emitted, ar.mean_passes,
             cm.mean_passes, speedup));

  // Criterion 9: stress split lengths sit in [2*len_max, 3*len_max].
  DecodeConfig nat_stress = nat3;
  nat_stress.l_init = 3 * task.len_max + 1;
  const auto cm_stress = decode_split(*cmlm, corpus.stress, nat_stress, Protocol::nat);
  const auto ar_stress = decode_split(*cmlm, corpus.stress, nat_stress, Protocol::ar_loop);

  const auto del_rate = [](const AlignmentStats& s) {
    return static_cast<double>(s.deletions) / static_cast<double>(s.ref_len);
  };
  const double nat_factor = del_rate(cm_stress.totals) / std::max(del_rate(cm.totals), 1e-9);
  const double ar_factor = del_rate(ar_stress.totals) / std::max(del_rate(ar.totals), 1e-9);
  const bool c9 = nat_factor >= 2.0 && ar_factor < nat_factor;
  report(9, c9,
         fmt("length stress: NAT deletion rate %.4f -> %.4f (factor %.1f, need >= 2), AR "
             "%.4f -> %.4f (factor %.1f, must stay below NAT)",
             del_rate(cm.totals), del_rate(cm_stress.totals), nat_factor, del_rate(ar.totals),
             del_rate(ar_stress.totals), ar_factor));
}

// ---- criterion 10: Levenshtein vs brute force -------------------------------

int brute_distance(const std::vector<int>& a, const std::vector<int>& b, size_t i, size_t j,
                   std::vector<int>& memo, size_t cols) {
  int& slot = memo[i * cols + j];
  if (slot >= 0) return slot;
  int best;
  if (i == a.size())
    best = static_cast<int>(b.size() - j);
  else if (j == b.size())
    best = static_cast<int>(a.size() - i);
  else {
    best = brute_distance(a, b, i + 1, j + 1, memo, cols) + (a[i] == b[j] ? 0 : 1);
    best = std::min(best, brute_distance(a, b, i + 1, j, memo, cols) + 1);
    best = std::min(best, brute_distance(a, b, i, j + 1, memo, cols) + 1);
  }
  return slot = best;
}

void criterion_10() {
  // All sequences of length 0..6 over a 3-symbol alphabet.
  std::vector<std::vector<int>> all;
  all.push_back({});
  size_t begin = 0;
  for (int len = 1; len <= 6; ++len) {
    const size_t end = all.size();
    for (size_t i = begin; i < end; ++i)
      for (int s = 0; s < 3; ++s) {
        auto next = all[i];
        next.push_back(s);
        all.push_back(std::move(next));
      }
    begin = end;
  }

  int64_t mismatches = 0;
  int64_t checked = 0;
  for (const auto& ref : all) {
    for (const auto& hyp : all) {
      std::vector<int> memo((ref.size() + 1) * (hyp.size() + 1), -1);
      const int want = brute_distance(ref, hyp, 0, 0, memo, hyp.size() + 1);
      const auto got = levenshtein_align(ref, hyp);
      if (got.distance() != want) ++mismatches;
      if (got.correct + got.substitutions + got.deletions !=
          static_cast<int64_t>(ref.size()))
        ++mismatches;
      ++checked;
    }
  }

  const auto as_ids = [](const std::string& word) {
    std::vector<int> ids;
    for (char ch : word) ids.push_back(static_cast<int>(ch));
    return ids;
  };
  const auto ks = levenshtein_align(as_ids("kitten"), as_ids("sitting"));
  if (ks.distance() != 3) ++mismatches;

  report(10, mismatches == 0,
         fmt("levenshtein: %lld mismatches against brute force over %lld pairs; "
             "kitten/sitting distance %lld (want 3)",
             static_cast<long long>(mismatches), static_cast<long long>(checked),
             static_cast<long long>(ks.distance())));
}

// ---- criterion 11: bit-identical artifacts across reruns -------------------

std::vector<char> file_bytes(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) return {};
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void criterion_11() {
  const fs::path root = fs::path(NART_TEST_TMPDIR) / "acceptance_repro";
  fs::remove_all(root);
  const std::string sets =
      " --set task.vocab_size=6 --set task.d_feat=4 --set task.r_min=1 --set task.r_max=2"
      " --set task.len_min=2 --set task.len_max=5 --set task.n_train=48 --set task.n_dev=8"
      " --set task.n_test=8 --set model.vocab_size=9 --set model.d_feat=4"
      " --set model.d_model=8 --set model.n_heads=2 --set model.n_encoder_blocks=1"
      " --set model.n_decoder_blocks=1 --set model.feedforward_dim=16 --set train.epochs=2"
      " --set train.batch_size=8 --set train.warmup_steps=10 --set decode.l_init=8"
      " --set decode.length_mode=eos_after_first_pass --set seed=42";
  bool commands_ok = true;
  for (const char* leaf : {"a", "b"}) {
    const fs::path dir = root / leaf;
    fs::create_directories(dir);
    for (const std::string verb : {"gen", "train", "decode"}) {
      const std::string cmd = "cd " + dir.string() + " && " + NART_CLI_PATH + " " + verb + sets +
                              " > cli_" + verb + ".log 2>&1";
      if (std::system(cmd.c_str()) != 0) commands_ok = false;
    }
  }
  const auto ckpt_a = file_bytes(root / "a" / "model.ckpt");
  const auto hyp_a = file_bytes(root / "a" / "out" / "hypotheses.jsonl");
  const bool pass = commands_ok && !ckpt_a.empty() && !hyp_a.empty() &&
                    ckpt_a == file_bytes(root / "b" / "model.ckpt") &&
                    hyp_a == file_bytes(root / "b" / "out" / "hypotheses.jsonl");
  report(11, pass,
         fmt("determinism: cmd_train + cmd_decode rerun %s (checkpoint %zu bytes, hypotheses "
             "%zu bytes)",
             pass ? "bit-identical" : "DIFFERS OR FAILED", ckpt_a.size(), hyp_a.size()));
}

}  // namespace

int main(int argc, char** argv) {
  // --quick skips the end-to-end training criteria (7/8/9) for fast
  // iteration on the structural ones; the registered ctest entry runs all.
  const bool quick = argc > 1 && std::string(argv[1]) == "--quick";
  const auto start = std::chrono::steady_clock::now();
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_10();
  criterion_11();
  if (!quick) criteria_7_8_9();
  std::printf("%d of %d criteria failed (%.1f min total)\n", failures, quick ? 8 : 11,
              now_seconds(start) / 60.0);
  return failures;
}
