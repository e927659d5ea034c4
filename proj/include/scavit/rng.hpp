#pragma once

#include <cstddef>
#include <cstdint>

namespace scavit {

/// Serializable position of an Rng stream.
struct RngState {
  std::uint64_t key = 0;
  std::uint64_t counter = 0;

  friend bool operator==(const RngState&, const RngState&) = default;
};

/// Counter-based generator: the i-th output is a keyed hash of i, so a stream
/// is fully described by (key, counter) and independent streams are cheap to
/// derive with `fork`.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);
  static Rng from_state(RngState state);

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double lo, double hi);
  /// Standard normal via Box-Muller (consumes two draws, no cached spare).
  double normal();
  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n);
  bool bernoulli(double p) { return uniform() < p; }

  Rng fork(std::uint64_t stream) const;

  RngState state() const { return {key_, counter_}; }

 private:
  Rng() = default;

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace scavit
