#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace rotot {

// Deterministic generator used everywhere randomness is needed, so that runs
// are reproducible byte-for-byte under a fixed seed regardless of the standard
// library in use. State advances with the splitmix64 recurrence
//   s += 0x9E3779B97F4A7C15;  out = mix(s)
// and normal deviates come from the basic Box-Muller transform (pairs cached).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform on [0,1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal; the second deviate of each Box-Muller pair is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    // u1 in (0,1] so the log is finite.
    double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  // Uniform integer in [0, n). n must be positive.
  int uniform_int(int n) {
    double u = uniform() * static_cast<double>(n);
    int k = static_cast<int>(u);
    return k >= n ? n - 1 : k;
  }

  // Independent child stream; deterministic in (original seed, tag).
  Rng derive(std::uint64_t tag) const {
    Rng mixer(seed_ ^ (0xD1B54A32D192ED03ULL * (tag + 1)));
    std::uint64_t child = mixer.next_u64();
    return Rng(child);
  }

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Fisher-Yates shuffle driven by the deterministic generator.
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
    int j = rng.uniform_int(i + 1);
    std::swap(v[static_cast<std::size_t>(i)], v[static_cast<std::size_t>(j)]);
  }
}

}  // namespace rotot
