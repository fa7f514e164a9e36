// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace moelab {

// Splittable 64-bit PRNG (splitmix64 core). Every consumer derives its own
// named substream from a root seed, so adding a new consumer never perturbs
// the draws of an existing one. All experiments are bit-reproducible from
// the root seed alone.
class Rng {
public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  // Independent stream for (root_seed, label).
  static Rng substream(uint64_t root_seed, std::string_view label);

  // Child stream of this generator's current state.
  Rng split(std::string_view label);

  uint64_t next_u64();

  // Uniform in [0, 1).
  double next_double();

  // Uniform integer in [lo, hi] inclusive.
  int uniform_int(int lo, int hi);

  // Box-Muller normal draw.
  float normal(float mean = 0.0f, float stddev = 1.0f);

  void normal_fill(std::vector<float>& out, float mean, float stddev);

  // Fisher-Yates, driven by this stream.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(next_u64() % i);
      std::swap(v[i - 1], v[j]);
    }
  }

private:
  uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace moelab
