#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <type_traits>

namespace pmising {

/// Default random stream. Every stochastic routine takes the stream by
/// reference so that results are reproducible from a seed.
using Rng = std::mt19937_64;

template <class G>
concept RandomStream =
    std::uniform_random_bit_generator<std::remove_reference_t<G>> &&
    std::numeric_limits<typename std::remove_reference_t<G>::result_type>::digits == 64;

/// splitmix64 finalizer; used to derive independent child seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for the `index`-th substream of `seed`.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept {
  return mix_seed(mix_seed(seed) ^ mix_seed(index + 0x632be59bd9b4e019ULL));
}

/// Uniform on [0, 1) with 53 random bits.
template <RandomStream G>
inline double uniform01(G& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform on (0, 1), safe to take the log of.
template <RandomStream G>
inline double uniform_open01(G& rng) {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

inline double sigmoid(double t) noexcept {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

/// log(1 + e^t) without overflow.
inline double log1p_exp(double t) noexcept {
  if (t > 30.0) return t + std::exp(-t);
  if (t < -30.0) return std::exp(t);
  return std::log1p(std::exp(t));
}

/// Integer threshold such that `(rng() >> 11) < threshold` has probability
/// sigmoid(logit), up to 2^-53 resolution.
inline std::uint64_t bernoulli_threshold(double logit) noexcept {
  const double q = sigmoid(logit);
  if (q <= 0.0) return 0;
  if (q >= 1.0) return std::uint64_t{1} << 53;
  return static_cast<std::uint64_t>(std::ldexp(q, 53));
}

template <RandomStream G>
inline bool bernoulli_logit(G& rng, double logit) {
  return (rng() >> 11) < bernoulli_threshold(logit);
}

}  // namespace pmising
