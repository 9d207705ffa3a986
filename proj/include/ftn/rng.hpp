#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "ftn/errors.hpp"

namespace ftn {

// One stream id per purpose so draws for different concerns never
// interleave. Task-scoped streams pack the task index into the low word:
// stream = (purpose << 32) | task.
enum class StreamPurpose : std::uint64_t {
  init = 1,
  dropout = 2,
  train_data = 3,
  permutations = 4,
  eval_data = 5,
  reconfig_data = 6,
  support_data = 7,
  encoder = 8,
  fisher_data = 9,
};

inline std::uint64_t stream_id(StreamPurpose p, std::uint64_t task = 0) {
  return (static_cast<std::uint64_t>(p) << 32) | task;
}

// Counter-based generator: draw i of stream (seed, id) is a pure function
// mix(mix(mix(seed) ^ id) ^ i). No hidden state beyond the counter, so any
// draw can be recomputed from its index and disjoint consumers never
// contend. Identical sequences across platforms for identical (seed, id).
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream)
      : seed_(seed), stream_(stream) {}
  RngStream(std::uint64_t seed, StreamPurpose p, std::uint64_t task = 0)
      : RngStream(seed, stream_id(p, task)) {}

  // SplitMix64 finalizer; full-avalanche 64-bit mix.
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t next_u64() {
    return mix(mix(mix(seed_) ^ stream_) ^ counter_++);
  }

  // [0, 1), 53-bit resolution.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) {
    if (!(lo < hi)) throw config_error("rng: uniform requires lo < hi");
    return lo + (hi - lo) * next_double();
  }

  std::vector<double> uniform(std::size_t n, double lo, double hi) {
    if (!(lo < hi)) throw config_error("rng: uniform requires lo < hi");
    std::vector<double> out(n);
    for (auto& v : out) v = lo + (hi - lo) * next_double();
    return out;
  }

  // Standard normal via Box-Muller; consumes two draws, discards the
  // sine partner.
  double normal() {
    double u1 = 1.0 - next_double();  // (0, 1]
    double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  // [0, bound) by 128-bit multiply-shift; bias < 2^-64 per draw.
  std::uint64_t below(std::uint64_t bound) {
    if (bound == 0) throw config_error("rng: below(0)");
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * bound) >> 64);
  }

  // Fisher-Yates permutation of 0..n-1.
  std::vector<std::uint32_t> permutation(std::uint32_t n) {
    std::vector<std::uint32_t> p(n);
    for (std::uint32_t i = 0; i < n; ++i) p[i] = i;
    for (std::uint32_t i = n; i > 1; --i) {
      std::uint32_t j = static_cast<std::uint32_t>(below(i));
      std::swap(p[i - 1], p[j]);
    }
    return p;
  }

  std::uint64_t counter() const { return counter_; }
  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
};

}  // namespace ftn
