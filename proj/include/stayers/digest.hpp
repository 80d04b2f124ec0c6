#pragma once

#include <bit>
#include <cstdint>
#include <span>
#include <string_view>

namespace stayers {

// 64-bit FNV-1a. Used to tag fits with the weights and basis that produced
// them; not a cryptographic hash.
class Digest {
 public:
  Digest& add(std::string_view bytes) {
    for (unsigned char c : bytes) mix(c);
    return *this;
  }
  Digest& add(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) mix(static_cast<unsigned char>(v >> (8 * i)));
    return *this;
  }
  Digest& add(double v) { return add(std::bit_cast<std::uint64_t>(v)); }
  Digest& add(std::span<const double> values) {
    add(static_cast<std::uint64_t>(values.size()));
    for (double v : values) add(v);
    return *this;
  }

  [[nodiscard]] std::uint64_t value() const { return state_; }

 private:
  void mix(unsigned char c) {
    state_ ^= c;
    state_ *= 0x100000001b3ULL;
  }
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

[[nodiscard]] inline std::uint64_t digest_of(std::span<const double> values) {
  return Digest{}.add(values).value();
}

}  // namespace stayers
