#include "nart/eval.hpp"

#include <string>

namespace nart {

AlignmentStats levenshtein_align(const std::vector<int>& ref, const std::vector<int>& hyp) {
  const size_t r = ref.size(), h = hyp.size();
  // dist[i][j]: edit distance between ref[0..i) and hyp[0..j).
  std::vector<std::vector<int64_t>> dist(r + 1, std::vector<int64_t>(h + 1, 0));
  for (size_t i = 0; i <= r; ++i) dist[i][0] = static_cast<int64_t>(i);
  for (size_t j = 0; j <= h; ++j) dist[0][j] = static_cast<int64_t>(j);
  for (size_t i = 1; i <= r; ++i) {
    for (size_t j = 1; j <= h; ++j) {
      const int64_t diag = dist[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      const int64_t del = dist[i - 1][j] + 1;
      const int64_t ins = dist[i][j - 1] + 1;
      dist[i][j] = std::min(diag, std::min(del, ins));
    }
  }
  AlignmentStats st;
  st.ref_len = static_cast<int64_t>(r);
  st.hyp_len = static_cast<int64_t>(h);
  // Backtrace; on cost ties prefer the diagonal move (match/substitution),
  // then deletion, then insertion.
  size_t i = r, j = h;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const bool match = ref[i - 1] == hyp[j - 1];
      const int64_t diag = dist[i - 1][j - 1] + (match ? 0 : 1);
      if (diag == dist[i][j]) {
        if (match)
          st.correct += 1;
        else
          st.substitutions += 1;
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && dist[i - 1][j] + 1 == dist[i][j]) {
      st.deletions += 1;
      --i;
      continue;
    }
    st.insertions += 1;
    --j;
  }
  return st;
}

AlignmentStats corpus_totals(const std::vector<TokenPair>& pairs) {
  AlignmentStats total;
  for (const auto& [ref, hyp] : pairs) total += levenshtein_align(ref, hyp);
  return total;
}

double corpus_cer(const std::vector<TokenPair>& pairs) {
  if (pairs.empty()) throw EvalError("corpus_cer: no utterance pairs");
  AlignmentStats total = corpus_totals(pairs);
  if (total.ref_len == 0) throw EvalError("corpus_cer: total reference length is zero");
  return static_cast<double>(total.distance()) / static_cast<double>(total.ref_len);
}

std::vector<BucketReportRow> length_bucket_report(const std::vector<TokenPair>& pairs,
                                                  const std::vector<int64_t>& bucket_edges) {
  if (bucket_edges.size() < 2)
    throw EvalError("length_bucket_report: need at least two bucket edges");
  for (size_t k = 1; k < bucket_edges.size(); ++k)
    if (bucket_edges[k] <= bucket_edges[k - 1])
      throw EvalError("length_bucket_report: bucket edges must be strictly increasing");
  std::vector<BucketReportRow> rows(bucket_edges.size() - 1);
  for (size_t k = 0; k + 1 < bucket_edges.size(); ++k) {
    rows[k].lo = bucket_edges[k];
    rows[k].hi = bucket_edges[k + 1];
  }
  for (const auto& [ref, hyp] : pairs) {
    const int64_t len = static_cast<int64_t>(ref.size());
    for (auto& row : rows) {
      if (len < row.lo || len >= row.hi) continue;
      row.totals += levenshtein_align(ref, hyp);
      row.n += 1;
      break;
    }
  }
  for (auto& row : rows) {
    if (row.n == 0 || row.totals.ref_len == 0) continue;
    const double denom = static_cast<double>(row.totals.ref_len);
    row.sub_rate = static_cast<double>(row.totals.substitutions) / denom;
    row.del_rate = static_cast<double>(row.totals.deletions) / denom;
    row.ins_rate = static_cast<double>(row.totals.insertions) / denom;
    row.cer = static_cast<double>(row.totals.distance()) / denom;
  }
  return rows;
}

}  // namespace nart
