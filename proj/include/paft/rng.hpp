#ifndef PAFT_RNG_HPP
#define PAFT_RNG_HPP

#include <array>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

namespace paft {

/// Philox4x32-10 counter-based generator.
///
/// The 64-bit seed is the key; the stream index is the upper half of the
/// 128-bit counter and the lower half counts blocks.
///
/// Satisfies UniformRandomBitGenerator with 64-bit output.
class philox_engine {
 public:
  using result_type = std::uint64_t;
  using block_type = std::array<std::uint32_t, 4>;
  using key_type = std::array<std::uint32_t, 2>;

  philox_engine(std::uint64_t seed, std::uint64_t stream) noexcept
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        stream_(stream) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    if (pos_ >= 4) refill();
    const std::uint64_t lo = buffer_[pos_];
    const std::uint64_t hi = buffer_[pos_ + 1];
    pos_ += 2;
    return (hi << 32) | lo;
  }

  /// Raw Philox4x32-10 bijection; exposed for known-answer tests.
  static block_type bijection(block_type ctr, key_type key) noexcept {
    constexpr std::uint32_t m0 = 0xD2511F53u;
    constexpr std::uint32_t m1 = 0xCD9E8D57u;
    constexpr std::uint32_t w0 = 0x9E3779B9u;
    constexpr std::uint32_t w1 = 0xBB67AE85u;
    for (int r = 0; r < 10; ++r) {
      if (r > 0) {
        key[0] += w0;
        key[1] += w1;
      }
      const std::uint64_t p0 = static_cast<std::uint64_t>(m0) * ctr[0];
      const std::uint64_t p1 = static_cast<std::uint64_t>(m1) * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const auto lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const auto lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }

 private:
  void refill() noexcept {
    const block_type ctr{static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
                         static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
    buffer_ = bijection(ctr, key_);
    ++block_;
    pos_ = 0;
  }

  key_type key_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  block_type buffer_{};
  int pos_ = 4;
};

/// Uniform double in the open interval (0, 1), built from the top 53 bits.
inline double uniform_open(philox_engine& eng) noexcept {
  const std::uint64_t bits = eng() >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

/// Unbiased integer in [0, bound) by Lemire's multiply-and-reject method.
inline std::uint64_t uniform_index(philox_engine& eng, std::uint64_t bound) noexcept {
  __extension__ using u128 = unsigned __int128;
  if (bound <= 1) return 0;
  const std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    const u128 m = static_cast<u128>(eng()) * bound;
    if (static_cast<std::uint64_t>(m) >= threshold) return static_cast<std::uint64_t>(m >> 64);
  }
}

/// Fisher-Yates shuffle driven by uniform_index, so the permutation depends
/// only on the engine state.
template <class T>
void shuffle(std::vector<T>& v, philox_engine& eng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(eng, i)]);
}

}  // namespace paft

#endif  // PAFT_RNG_HPP
