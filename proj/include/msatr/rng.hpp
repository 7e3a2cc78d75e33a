#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>

namespace msatr {

// mt19937_64 with explicit distribution mappings, so sequences are identical
// across standard library implementations and the state can be checkpointed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n), unbiased.
  std::size_t uniform_index(std::size_t n);
  // Uniform integer in [lo, hi] inclusive.
  std::size_t uniform_int(std::size_t lo, std::size_t hi) { return lo + uniform_index(hi - lo + 1); }
  // Standard normal via Box-Muller; consumes two draws per call.
  double normal();

  std::string save_state() const;
  void load_state(const std::string& state);

  bool operator==(const Rng& other) const { return engine_ == other.engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace msatr
