#pragma once

#include <cstdint>
#include <random>

namespace ecrl {

// Deterministic random source. std::mt19937_64 is fully specified by the
// standard, but the standard distributions are not, so all sampling is
// hand-rolled on top of the raw engine output.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; the spare draw is cached in the state.
  double normal();

  double normal(double mean, double sd) { return mean + sd * normal(); }

  // Uniform integer in [0, n), rejection sampled (n > 0).
  int uniform_int(int n);

  // Derive a stream seed from a master seed (splitmix64 finalizer).
  static std::uint64_t derive(std::uint64_t master, std::uint64_t stream);

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// In-place Fisher-Yates shuffle of an index vector (std::shuffle is
// implementation-defined, this one is not).
template <typename T>
void deterministic_shuffle(std::vector<T>& v, Rng& rng) {
  for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
    const int j = rng.uniform_int(i + 1);
    std::swap(v[static_cast<std::size_t>(i)], v[static_cast<std::size_t>(j)]);
  }
}

}  // namespace ecrl
