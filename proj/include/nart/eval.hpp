#pragma once

// Token error rate via Levenshtein alignment with substitution / deletion /
// insertion decomposition, plus length-bucketed reporting.

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "nart/common.hpp"

namespace nart {

struct AlignmentStats {
  int64_t substitutions = 0;
  int64_t deletions = 0;
  int64_t insertions = 0;
  int64_t correct = 0;
  int64_t ref_len = 0;
  int64_t hyp_len = 0;

  int64_t distance() const { return substitutions + deletions + insertions; }

  AlignmentStats& operator+=(const AlignmentStats& o) {
    substitutions += o.substitutions;
    deletions += o.deletions;
    insertions += o.insertions;
    correct += o.correct;
    ref_len += o.ref_len;
    hyp_len += o.hyp_len;
    return *this;
  }
};

// Unit-cost edit alignment. When several alignments are minimal the
// backtrace prefers substitution over deletion over insertion, so the
// S/D/I split is deterministic.
AlignmentStats levenshtein_align(const std::vector<int>& ref, const std::vector<int>& hyp);

// (reference, hypothesis) token sequences.
using TokenPair = std::pair<std::vector<int>, std::vector<int>>;

AlignmentStats corpus_totals(const std::vector<TokenPair>& pairs);

// (S + D + I) / total reference length.
double corpus_cer(const std::vector<TokenPair>& pairs);

struct BucketReportRow {
  int64_t lo = 0;  // bucket covers ref_len in [lo, hi)
  int64_t hi = 0;
  int64_t n = 0;   // pairs that fell in the bucket
  AlignmentStats totals;
  // Rates are normalized by the bucket's total reference length and absent
  // (not zero) for empty buckets.
  std::optional<double> sub_rate, del_rate, ins_rate, cer;
};

// Buckets are the half-open intervals between consecutive edges; pairs whose
// reference length falls outside every bucket are ignored.
std::vector<BucketReportRow> length_bucket_report(const std::vector<TokenPair>& pairs,
                                                  const std::vector<int64_t>& bucket_edges);

}  // namespace nart
