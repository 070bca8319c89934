#pragma once

#include <cstdint>
#include <string_view>

namespace tgv {

/// Identity of the generator: the i-th draw is a pure function of (seed, i).
/// Identical seeds give identical draw sequences on every run.
struct RngState {
  uint64_t seed = 0;
};

uint64_t splitmix64(uint64_t x);
uint64_t fnv1a64(std::string_view s);

/// Counter-based stream over splitmix64. Streams can be split per purpose
/// ("init", "shuffle", ...) and per sample index; children depend only on
/// the parent seed and the tag, never on how far the parent has advanced.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed) {}
  explicit Rng(RngState s) : Rng(s.seed) {}

  uint64_t next_u64();
  double uniform();  // [0, 1)
  double normal();   // standard normal (Box-Muller)
  double truncated_normal(double stddev, double cutoff = 2.0);

  Rng substream(std::string_view tag) const;
  Rng substream(uint64_t index) const;

  uint64_t seed() const { return seed_; }

 private:
  uint64_t seed_ = 0;
  uint64_t counter_ = 0;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace tgv
