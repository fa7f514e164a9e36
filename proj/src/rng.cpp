// SPDX-License-Identifier: Apache-2.0
#include "moelab/rng.hpp"

#include <cmath>

namespace moelab {

namespace {

uint64_t splitmix64(uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

uint64_t fnv1a(std::string_view s) {
  uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace

Rng Rng::substream(uint64_t root_seed, std::string_view label) {
  uint64_t s = root_seed ^ (fnv1a(label) * 0x9E3779B97F4A7C15ULL);
  // one warm-up mix so nearby seeds do not yield nearby streams
  splitmix64(s);
  return Rng(s);
}

Rng Rng::split(std::string_view label) {
  return Rng::substream(next_u64(), label);
}

uint64_t Rng::next_u64() { return splitmix64(state_); }

double Rng::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

int Rng::uniform_int(int lo, int hi) {
  uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
  return lo + static_cast<int>(next_u64() % span);
}

float Rng::normal(float mean, float stddev) {
  if (have_spare_) {
    have_spare_ = false;
    return mean + stddev * static_cast<float>(spare_);
  }
  double u1 = 0.0;
  do {
    u1 = next_double();
  } while (u1 <= 0.0);
  double u2 = next_double();
  double r = std::sqrt(-2.0 * std::log(u1));
  double theta = 2.0 * M_PI * u2;
  spare_ = r * std::sin(theta);
  have_spare_ = true;
  return mean + stddev * static_cast<float>(r * std::cos(theta));
}

void Rng::normal_fill(std::vector<float>& out, float mean, float stddev) {
  for (auto& x : out) x = normal(mean, stddev);
}

}  // namespace moelab
