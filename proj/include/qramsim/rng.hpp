#pragma once

#include <cstdint>
#include <limits>

namespace qramsim {

/*! \brief Counter-based generator: the i-th output is a bijective mix of (key, i).
 *
 * Streams are split by hashing a parent key with a stream index, so every
 * trial or sample can own an independent, reproducible stream regardless of
 * the order or thread in which it is evaluated.  Satisfies
 * UniformRandomBitGenerator, so the standard distributions accept it.
 */
class CounterRng {
public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t seed = 0) : key_(mix(seed ^ 0x6a09e667f3bcc909ULL)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return mix(key_ + 0x9e3779b97f4a7c15ULL * (++counter_)); }

  //! Child stream number `index`; does not advance this generator.
  [[nodiscard]] CounterRng split(std::uint64_t index) const {
    CounterRng child;
    child.key_ = mix(key_ ^ mix(index + 0xbb67ae8584caa73bULL));
    return child;
  }

  //! Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  //! Uniform integer in [0, bound); bound must be positive.
  std::uint64_t below(std::uint64_t bound) {
    const std::uint64_t limit = max() - max() % bound;
    std::uint64_t r;
    do {
      r = (*this)();
    } while (r >= limit);
    return r % bound;
  }

  bool bernoulli(double p) { return uniform() < p; }

  [[nodiscard]] std::uint64_t counter() const { return counter_; }

private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace qramsim
