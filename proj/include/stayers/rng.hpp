#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace stayers::rng {

/// Philox4x32-10 counter-based generator (Salmon et al., Random123).
/// Output is a pure function of (key, counter), so any draw can be
/// regenerated without replaying the ones before it.
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static constexpr Counter apply(Counter ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kWeyl0;
        key[1] += kWeyl1;
      }
      const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const auto lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const auto lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85;
};

/// Stream domains keep independent consumers (data simulation, bootstrap
/// weights, oracles) on disjoint counter ranges under one seed.
enum class Domain : std::uint32_t {
  simulation = 1,
  bootstrap = 2,
  oracle = 3,
  monte_carlo = 4,
  test = 255,
};

/// Sequential view of one substream. The counter layout is
/// (position, substream-lo, substream-hi, domain) and the key is the seed.
class Stream {
 public:
  Stream(std::uint64_t seed, Domain domain, std::uint64_t substream)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        sub_lo_(static_cast<std::uint32_t>(substream)),
        sub_hi_(static_cast<std::uint32_t>(substream >> 32)),
        domain_(static_cast<std::uint32_t>(domain)) {}

  std::uint64_t next_u64() {
    if (buffered_ == 0) refill();
    const std::uint64_t out = (std::uint64_t{block_[4 - 2 * buffered_]} << 32) |
                              block_[5 - 2 * buffered_];
    --buffered_;
    return out;
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1).
  double uniform_open() {
    double u;
    do {
      u = uniform();
    } while (u == 0.0);
    return u;
  }

  /// Standard normal by Box-Muller; the spare deviate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double radius = std::sqrt(-2.0 * std::log(uniform_open()));
    const double angle = 2.0 * std::numbers::pi * uniform();
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  double exponential() { return -std::log1p(-uniform()); }

  bool bernoulli(double p) { return uniform() < p; }

  /// Uniform integer on [0, bound) by rejection.
  std::uint64_t below(std::uint64_t bound) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
    std::uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return v % bound;
  }

 private:
  void refill() {
    block_ = Philox4x32::apply({position_, sub_lo_, sub_hi_, domain_}, key_);
    ++position_;
    buffered_ = 2;
  }

  Philox4x32::Key key_;
  std::uint32_t sub_lo_;
  std::uint32_t sub_hi_;
  std::uint32_t domain_;
  std::uint32_t position_ = 0;
  Philox4x32::Counter block_{};
  int buffered_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace stayers::rng
