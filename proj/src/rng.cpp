#include "asadi/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace asadi {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed), gen_(splitmix64(seed)) {}

Rng Rng::stream(std::string_view name) const {
  return Rng(splitmix64(seed_ ^ fnv1a(name)));
}

std::uint64_t Rng::next_u64() { return gen_(); }

double Rng::uniform() {
  // 53 random mantissa bits.
  return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

long long Rng::uniform_int(long long n) {
  if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
  const auto un = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
  std::uint64_t v;
  do {
    v = gen_();
  } while (v >= limit);
  return static_cast<long long>(v % un);
}

double Rng::gaussian() {
  // Box-Muller, one value per pair of uniforms; keeps the stream layout simple.
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::gaussian_truncated(double n_sigmas) {
  if (n_sigmas <= 0.0) return gaussian();
  double z;
  do {
    z = gaussian();
  } while (std::abs(z) > n_sigmas);
  return z;
}

}  // namespace asadi
