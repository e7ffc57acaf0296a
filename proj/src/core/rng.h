#pragma once

#include <cstdint>
#include <string_view>

namespace tritex {

uint64_t hash_mix(uint64_t x);
uint64_t hash_combine(uint64_t a, uint64_t b);
uint64_t hash_str(std::string_view s);

// Deterministic splittable generator (xoshiro256++ core, splitmix64 seeding).
// split() derives an independent stream from the base seed and a tag, so the
// draw order of one stream never affects another.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t next_u64();
  double uniform();                      // [0, 1)
  double uniform(double lo, double hi);  // [lo, hi)
  double normal();                       // standard normal, Box-Muller
  int64_t uniform_int(int64_t n);        // [0, n)

  Rng split(uint64_t tag) const { return Rng(hash_combine(seed_, tag)); }
  Rng split(std::string_view tag) const { return split(hash_str(tag)); }

  uint64_t seed() const { return seed_; }

 private:
  uint64_t seed_;
  uint64_t s_[4];
  bool has_cached_normal_ = false;
  double cached_normal_ = 0.0;
};

}  // namespace tritex
