#ifndef RAGCUR_RNG_HPP
#define RAGCUR_RNG_HPP

#include <cstdint>
#include <string_view>
#include <vector>

namespace ragcur {

// Deterministic generator with identical output on every platform.
// std::uniform_int_distribution is implementation-defined, so bounded
// draws are done by hand here.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform integer in [0, bound) via rejection sampling.
  std::uint64_t below(std::uint64_t bound) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t v;
    do {
      v = next();
    } while (v >= limit);
    return v % bound;
  }

  // Uniform double in [0, 1).
  double next_double() {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

 private:
  std::uint64_t state_;
};

// FNV-1a, used for bucket hashing and seed derivation.
inline std::uint64_t fnv1a(std::string_view data,
                           std::uint64_t seed = 0xcbf29ce484222325ULL) {
  std::uint64_t h = seed;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::string_view key,
                              std::uint64_t extra = 0) {
  std::uint64_t h = fnv1a(key, seed ^ 0x9e3779b97f4a7c15ULL);
  return SplitMix64(h ^ (extra * 0xff51afd7ed558ccdULL)).next();
}

// Uniform sample of `count` distinct indices from [0, pool), ascending.
std::vector<std::size_t> sample_without_replacement(std::size_t pool,
                                                    std::size_t count,
                                                    SplitMix64& rng);

template <typename T>
void deterministic_shuffle(std::vector<T>& items, SplitMix64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace ragcur

#endif  // RAGCUR_RNG_HPP
