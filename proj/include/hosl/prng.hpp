#ifndef HOSL_PRNG_HPP
#define HOSL_PRNG_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace hosl {

// Repo-wide deterministic random stream. Every source of randomness in the
// training engine flows through this one algorithm so that a 64-bit seed is
// enough to regenerate any perturbation direction exactly.
//
// Algorithm (fixed; changing it breaks stored seeds):
//   state    <- seed
//   next_u64 :  state += 0x9E3779B97F4A7C15                 (mod 2^64)
//               z = state
//               z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9    (mod 2^64)
//               z = (z ^ (z >> 27)) * 0x94D049BB133111EB    (mod 2^64)
//               return z ^ (z >> 31)                        [splitmix64]
//   next_unit:  (next_u64() >> 11) * 2^-53                  in [0, 1)
//   next_normal: u1 = next_unit(); u2 = next_unit()
//               return sqrt(-2 ln(1 - u1)) * cos(2 pi u2)
//
// next_normal consumes exactly two uniforms per sample (Box-Muller, cosine
// branch only, no caching), so the k-th normal of a stream is a pure
// function of (seed, k). The u64/uniform stream is bit-exact on every
// platform; normals additionally go through libm sqrt/log/cos, which is
// bit-stable for a given libm build (and in practice across mainstream
// x86-64/aarch64 glibc builds).
class PrngStream {
 public:
  static constexpr std::string_view kAlgorithmId = "splitmix64-boxmuller-v1";

  explicit PrngStream(std::uint64_t seed) : seed_(seed), state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    ++draws_;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with full 53-bit mantissa resolution.
  double next_unit() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Standard normal draw, consumed in coordinate order by perturb/zo_update.
  double next_normal() {
    const double u1 = next_unit();
    const double u2 = next_unit();
    const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

  std::uint64_t seed() const { return seed_; }
  // Number of u64 draws consumed so far.
  std::uint64_t counter() const { return draws_; }

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
  std::uint64_t draws_ = 0;
};

// splitmix64 finalizer, exposed for seed derivation.
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Labels for the independent sub-streams derived from one master seed.
enum class StreamPurpose : std::uint64_t {
  kInit = 1,           // model weight initialization
  kData = 2,           // synthetic dataset generation
  kBatch = 3,          // per-iteration minibatch sampling
  kClientPerturb = 4,  // client-side perturbation seeds s_q
  kServerPerturb = 5,  // server-side perturbation seeds (zo_zo only)
};

// s = derive_seed(master, purpose, t, q): the fixed hash that replaces the
// protocol's informal "sample random seed". Distinct (purpose, t, q) give
// statistically independent streams, and both endpoints can derive the same
// seed from the shared master without exchanging it.
inline std::uint64_t derive_seed(std::uint64_t master, StreamPurpose purpose,
                                 std::uint64_t t = 0, std::uint64_t q = 0) {
  std::uint64_t h = mix64(master ^ 0x9E3779B97F4A7C15ULL);
  h = mix64(h ^ static_cast<std::uint64_t>(purpose));
  h = mix64(h ^ t);
  h = mix64(h ^ q);
  return h;
}

}  // namespace hosl

#endif  // HOSL_PRNG_HPP
