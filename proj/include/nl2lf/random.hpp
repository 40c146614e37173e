#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>

namespace nl2lf {

// Seedable PRNG with a fixed, portable algorithm.
//
// The engine is std::mt19937_64, whose output sequence is pinned by the C++
// standard. Everything derived from it (bounded integers, shuffles, normals)
// is implemented here rather than through <random> distributions, whose
// algorithms are implementation-defined. Given a seed, every consumer sees
// the same stream on every conforming platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform integer in [0, bound) by rejection sampling; bound must be > 0.
  std::uint64_t uniform_index(std::uint64_t bound);

  // Uniform double in [0, 1) built from the top 53 bits.
  double uniform01();

  // Standard normal via Box-Muller (one draw per call, no caching).
  double normal();

  // Fisher-Yates, iterating from the back: for i = n-1 .. 1 swap(i, uniform_index(i+1)).
  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_index(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  // Textual engine state; restore() accepts exactly what state() returns.
  std::string state() const;
  void restore(const std::string& state);

  friend bool operator==(const Rng& a, const Rng& b) { return a.engine_ == b.engine_; }

 private:
  std::mt19937_64 engine_;
};

// Mixes a base seed with a stream tag so independent consumers get decorrelated
// streams (SplitMix64 finalizer).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace nl2lf
