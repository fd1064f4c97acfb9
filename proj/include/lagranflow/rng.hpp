#pragma once

#include <cstdint>
#include <limits>

namespace lagranflow {

inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Stream tags used when deriving independent streams from the master seed.
enum class StreamTag : std::uint64_t {
  kKicks = 1,
  kCoupling = 2,
  kInitialState = 3,
  kRestarts = 4,
  kSynthetic = 5,
  kBootstrap = 6,
};

// Counter-based generator: draw n of a stream is mix64(key + n * golden), so
// any draw is addressable without replaying the stream.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t key = 0) : key_(key) {}

  static CounterRng stream(std::uint64_t master_seed, StreamTag tag, std::uint64_t index) {
    std::uint64_t k = mix64(master_seed + 0x9e3779b97f4a7c15ULL);
    k = mix64(k ^ (static_cast<std::uint64_t>(tag) * 0xd1b54a32d192ed03ULL));
    k = mix64(k ^ (index * 0x8cb92ba72f3d8dd7ULL + 0x632be59bd9b4e019ULL));
    return CounterRng(k);
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return mix64(key_ + (++counter_) * 0x9e3779b97f4a7c15ULL); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }
  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace lagranflow
