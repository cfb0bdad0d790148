#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace advarena {

// SplitMix64 finalizer. Used both as the generator's output function and for seed derivation.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Counter-based 64-bit generator: the i-th draw (1-based) is mix64(seed + i * 0x9E3779B97F4A7C15).
/// Every derived quantity below is defined in terms of that stream so any language can reproduce it:
///   uniform()       = (draw >> 11) * 2^-53
///   uniform_int(n)  = high 64 bits of draw * n (128-bit product)
///   normal()        = Box-Muller on two uniforms, cosine branch only
class Rng {
 public:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

  explicit Rng(std::uint64_t seed) noexcept : seed_(seed) {}

  std::uint64_t next() noexcept {
    ++counter_;
    return mix64(seed_ + counter_ * kGamma);
  }

  double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  std::uint64_t uniform_int(std::uint64_t n) noexcept {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next()) * n) >> 64);
  }
  double normal() noexcept;
  bool bernoulli(double p) noexcept { return uniform() < p; }

  std::uint64_t counter() const noexcept { return counter_; }

  template <typename T>
  void shuffle(std::vector<T>& v) noexcept {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

/// FNV-1a 64 of a string, used to fold names into seeds.
std::uint64_t hash_name(std::string_view s) noexcept;

/// Folds a sequence of integers into one seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a) noexcept;
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) noexcept;
std::uint64_t derive_seed(std::uint64_t base, std::string_view name, std::uint64_t index) noexcept;

}  // namespace advarena
