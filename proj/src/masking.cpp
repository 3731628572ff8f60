#include "nart/masking.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace nart {

MaskPartition sample_cmlm_partition(int t, Rng& rng) {
  if (t < 1) throw ShapeError("sample_cmlm_partition: need at least one position");
  MaskPartition part;
  part.n_masked = static_cast<int>(rng.uniform_int(1, t));
  part.masked.assign(static_cast<size_t>(t), 0);
  for (int idx : rng.sample_without_replacement(t, part.n_masked))
    part.masked[static_cast<size_t>(idx)] = 1;
  return part;
}

std::vector<int> build_masked_input(const std::vector<int>& tokens,
                                    const std::vector<uint8_t>& masked) {
  if (tokens.size() != masked.size())
    throw ShapeError("build_masked_input: token/mask length mismatch");
  std::vector<int> input = tokens;
  for (size_t j = 0; j < input.size(); ++j)
    if (masked[j]) input[j] = kMaskId;
  return input;
}

int sample_fmlm_keep_masked(int t, Rng& rng) {
  if (t < 1) throw ShapeError("sample_fmlm_keep_masked: need at least one position");
  return static_cast<int>(rng.uniform_int(0, t));
}

std::vector<uint8_t> fmlm_reveal_mask(const std::vector<double>& confidence, int n_reveal) {
  const int t = static_cast<int>(confidence.size());
  if (n_reveal < 0 || n_reveal > t)
    throw ShapeError("fmlm_reveal_mask: reveal count " + std::to_string(n_reveal) +
                     " outside [0, " + std::to_string(t) + "]");
  std::vector<int> order(static_cast<size_t>(t));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (confidence[static_cast<size_t>(a)] != confidence[static_cast<size_t>(b)])
      return confidence[static_cast<size_t>(a)] > confidence[static_cast<size_t>(b)];
    return a < b;
  });
  std::vector<uint8_t> revealed(static_cast<size_t>(t), 0);
  for (int i = 0; i < n_reveal; ++i) revealed[static_cast<size_t>(order[static_cast<size_t>(i)])] = 1;
  return revealed;
}

}  // namespace nart
