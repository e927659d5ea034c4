#include "scavit/rng.hpp"

#include <cmath>
#include <numbers>

namespace scavit {
namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

// SplitMix64 finalizer; a bijection on 64-bit words with full avalanche.
std::uint64_t mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

Rng::Rng(std::uint64_t seed, std::uint64_t stream)
    : key_(mix(seed + kGolden) ^ mix(~stream * kGolden)), counter_(0) {}

Rng Rng::from_state(RngState state) {
  Rng r;
  r.key_ = state.key;
  r.counter_ = state.counter;
  return r;
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t c = counter_++;
  return mix(mix(c * kGolden + key_) ^ key_);
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t Rng::below(std::size_t n) {
  const unsigned __int128 wide =
      static_cast<unsigned __int128>(next_u64()) * static_cast<unsigned __int128>(n);
  return static_cast<std::size_t>(wide >> 64);
}

Rng Rng::fork(std::uint64_t stream) const {
  Rng child;
  child.key_ = mix(key_ ^ mix(stream + kGolden));
  child.counter_ = 0;
  return child;
}

}  // namespace scavit
