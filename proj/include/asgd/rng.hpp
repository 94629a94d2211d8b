#pragma once

#include <cstdint>
#include <limits>

namespace asgd {

// Independent streams hashed into the same seed space.
enum class Stream : std::uint64_t {
  duration = 0x11,
  noise = 0x22,
  preset = 0x33,
  allocation = 0x44,
  sampling = 0x55,
};

inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Counter-based generator: the state is a hash of the key tuple, so a draw
// never depends on how many other draws happened before it.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  CounterRng(std::uint64_t seed, Stream stream, std::uint64_t worker,
             std::uint64_t counter)
      : state_(mix64(mix64(mix64(mix64(seed) ^ static_cast<std::uint64_t>(stream)) ^
                           worker) ^
                     counter)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

}  // namespace asgd
