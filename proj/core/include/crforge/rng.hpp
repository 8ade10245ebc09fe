#ifndef CRFORGE_RNG_HPP_
#define CRFORGE_RNG_HPP_

#include <cstdint>
#include <string_view>

namespace crforge {

struct RngSeed {
  std::uint64_t value = 0;
};

// Counter-free xoshiro256** stream keyed by (seed, tag). Streams with the
// same key are identical; distinct tags or seeds give independent streams.
// The full state is four u64 words, so it serializes trivially and behaves
// the same on every platform (no <random> distribution differences).
class Rng {
 public:
  Rng() : Rng(RngSeed{0}, "") {}
  Rng(RngSeed seed, std::string_view stream_tag);

  std::uint64_t next_u64();

  // Uniform in [0, 1).
  double uniform();
  // Uniform in [lo, hi).
  double uniform(double lo, double hi);
  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n);
  // Standard normal via Box-Muller; draws two uniforms per call so the
  // stream never carries a cached spare.
  double normal();
  double normal(double mean, double stddev);

  struct State {
    std::uint64_t s[4];
  };
  State state() const { return State{{s_[0], s_[1], s_[2], s_[3]}}; }
  void set_state(const State& st) {
    for (int i = 0; i < 4; ++i) s_[i] = st.s[i];
  }

 private:
  std::uint64_t s_[4];
};

// Spec operation: build the deterministic stream for (seed, tag).
inline Rng seeded_rng(RngSeed seed, std::string_view stream_tag) {
  return Rng(seed, stream_tag);
}

}  // namespace crforge

#endif  // CRFORGE_RNG_HPP_
