#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace asadi {

// Deterministic random streams. Every replicate owns one root Rng; independent
// substreams are derived by name, so adding a new consumer (a diagnostic, a
// tie-break) never shifts the draws seen by existing ones.
//
// All floating-point sampling is built directly on mt19937_64 words, so a given
// (seed, call sequence) produces the same values on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  // Independent stream derived from this Rng's seed and a label.
  Rng stream(std::string_view name) const;

  std::uint64_t next_u64();

  double uniform();                    // [0, 1)
  double uniform(double lo, double hi);
  long long uniform_int(long long n);  // {0, ..., n-1}

  double gaussian();                              // standard normal
  double gaussian_truncated(double n_sigmas);     // rejection, |z| <= n_sigmas

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
};

}  // namespace asadi
