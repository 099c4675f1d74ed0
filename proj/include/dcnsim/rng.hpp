#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "dcnsim/sim.hpp"

namespace dcn {

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view s);

// One named, independently seeded random stream. Consumers each own a stream
// so adding a draw in one subsystem never shifts another subsystem's values.
// All derivations avoid std::uniform_* distributions, whose output is not
// pinned by the standard; sequences are identical across platforms.
class Rng {
 public:
  Rng(std::uint64_t seed, std::string_view stream_id)
      : eng_(splitmix64(seed * 0x9E3779B97F4A7C15ULL ^ fnv1a64(stream_id))) {}

  std::uint64_t u64() { return eng_(); }

  // Uniform in [0, n). Modulo reduction: the bias at simulation-sized n is
  // far below anything observable and the result is platform-stable.
  std::uint64_t below(std::uint64_t n) {
    DCN_REQUIRE(n > 0, "Rng::below(0)");
    return eng_() % n;
  }

  double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  template <class T>
  const T& pick(const std::vector<T>& v) {
    DCN_REQUIRE(!v.empty(), "Rng::pick on empty set");
    return v[static_cast<std::size_t>(below(v.size()))];
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace dcn
