#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string_view>
#include <vector>

namespace tsf {

/// Counter-based Philox4x32-10 generator (Salmon et al., SC'11).
///
/// State is a 64-bit key plus a 128-bit counter: the upper half of the
/// counter names a stream, the lower half is the position within it.
/// `split` derives an independent child generator from a tag, so every
/// stochastic consumer can receive its own reproducible stream without
/// sharing mutable state.
class Rng {
 public:
  using result_type = std::uint64_t;

  static constexpr std::string_view kName = "philox4x32-10";

  explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        stream_(stream) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  result_type operator()() { return next_u64(); }

  std::uint64_t next_u64() {
    const std::uint64_t lo = next_u32();
    const std::uint64_t hi = next_u32();
    return (hi << 32) | lo;
  }

  std::uint32_t next_u32() {
    if (buffered_ == 0) {
      block_ = philox({static_cast<std::uint32_t>(position_),
                       static_cast<std::uint32_t>(position_ >> 32),
                       static_cast<std::uint32_t>(stream_),
                       static_cast<std::uint32_t>(stream_ >> 32)},
                      key_);
      ++position_;
      buffered_ = 4;
    }
    return block_[4 - buffered_--];
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; the spare variate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  /// Uniform integer in [0, n) by rejection (no modulo bias).
  std::uint64_t below(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = max() - max() % n;
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

  /// Independent child generator. Same parent state and tag give the same child.
  Rng split(std::uint64_t tag) const {
    const auto b = philox({static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32),
                           static_cast<std::uint32_t>(stream_) ^ 0x5eed5eedU,
                           static_cast<std::uint32_t>(stream_ >> 32) ^ 0xa5a5a5a5U},
                          key_);
    const std::uint64_t key = (static_cast<std::uint64_t>(b[1]) << 32) | b[0];
    const std::uint64_t stream = (static_cast<std::uint64_t>(b[3]) << 32) | b[2];
    return Rng(key, stream);
  }

  Rng split(std::uint64_t a, std::uint64_t b) const { return split(a).split(b); }

  /// Fisher-Yates; portable, unlike std::shuffle whose algorithm is unspecified.
  template <class T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = below(i);
      std::swap(items[i - 1], items[j]);
    }
  }

  template <class T>
  void shuffle(std::vector<T>& items) {
    shuffle(std::span<T>(items));
  }

  using Block = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Block philox(Block ctr, Key key) {
    constexpr std::uint32_t kM0 = 0xD2511F53U, kM1 = 0xCD9E8D57U;
    constexpr std::uint32_t kW0 = 0x9E3779B9U, kW1 = 0xBB67AE85U;
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
      const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
      key[0] += kW0;
      key[1] += kW1;
    }
    return ctr;
  }

 private:
  Key key_;
  std::uint64_t stream_;
  std::uint64_t position_ = 0;
  Block block_{};
  int buffered_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace tsf
