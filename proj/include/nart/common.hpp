#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace nart {

// ---- error categories --------------------------------------------------
// Each maps to one machine-parseable CLI error category.

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TrainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DecodeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EvalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---- runtime debug checks ----------------------------------------------
// Expensive invariant scans (finite outputs, attention row sums, grid
// normalization) are gated on a process-wide flag so the same build serves
// both fast training runs and strict test runs.

namespace detail {
inline std::atomic<bool> g_debug_checks{false};
}

inline bool debug_checks_enabled() {
  return detail::g_debug_checks.load(std::memory_order_relaxed);
}
inline void set_debug_checks(bool on) {
  detail::g_debug_checks.store(on, std::memory_order_relaxed);
}

// ---- hashing -------------------------------------------------------------

constexpr uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 1469598103934665603ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

// splitmix64 finalizer; used for seed mixing when deriving rng streams.
constexpr uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// ---- seedable rng --------------------------------------------------------
// Every stochastic operation takes one of these explicitly; there is no
// global generator. Streams for sub-tasks are derived from the original
// seed (not the current engine state), so derivation is reproducible no
// matter how much of the parent stream was consumed.

class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), engine_(mix64(seed)) {}

  uint64_t seed() const { return seed_; }

  Rng derive(std::string_view label) const {
    return Rng(mix64(seed_ ^ fnv1a64(label)));
  }
  Rng derive(std::string_view label, uint64_t index) const {
    return Rng(mix64(mix64(seed_ ^ fnv1a64(label)) + index));
  }

  uint64_t next_u64() { return engine_(); }

  // Inclusive bounds. Rejection sampling keeps the draw unbiased and the
  // byte stream portable across standard libraries.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    if (lo > hi) throw NumericError("uniform_int: empty range");
    uint64_t range = static_cast<uint64_t>(hi - lo) + 1;
    if (range == 0) return static_cast<int64_t>(next_u64());  // full 64-bit range
    uint64_t limit = UINT64_MAX - UINT64_MAX % range;
    uint64_t r;
    do {
      r = next_u64();
    } while (r >= limit);
    return lo + static_cast<int64_t>(r % range);
  }

  // [0, 1) with 53 bits of precision.
  double uniform_real() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double normal(double mean = 0.0, double stddev = 1.0) {
    if (has_spare_) {
      has_spare_ = false;
      return mean + stddev * spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform_real() - 1.0;
      v = 2.0 * uniform_real() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    double k = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * k;
    has_spare_ = true;
    return mean + stddev * u * k;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(0, static_cast<int64_t>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

  // First k elements of a uniformly random permutation of {0..n-1}.
  std::vector<int> sample_without_replacement(int n, int k) {
    std::vector<int> idx(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
    for (int i = 0; i < k; ++i) {
      int j = static_cast<int>(uniform_int(i, n - 1));
      std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
    }
    idx.resize(static_cast<size_t>(k));
    return idx;
  }

 private:
  uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace nart
