#pragma once

#include <array>
#include <cstdint>

namespace adaptsde {

/// Philox4x32-10 counter-based block cipher (Salmon et al., SC'11).
/// Maps (key, counter) to 128 pseudorandom bits with no internal state.
using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

PhiloxCounter philox4x32(PhiloxCounter ctr, PhiloxKey key) noexcept;

/// SplitMix64 finalizer. Used to derive independent 64-bit seeds.
std::uint64_t mix64(std::uint64_t z) noexcept;

/// Seed for stream `index` under `master`.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept;

/// Two 32-bit words to (bits + 1/2) 2^-52 with 52 random bits, strictly inside (0,1).
double uniform_open(std::uint32_t hi, std::uint32_t lo) noexcept;

/// Inverse standard normal CDF, Wichura's AS241 (PPND16), ~1e-16 relative accuracy.
/// Only +, *, /, log and sqrt are used, so results are identical on any
/// IEEE-754 platform with a correctly rounded sqrt and the same libm log.
double normal_quantile(double p) noexcept;

/// Sequential keyed stream: a Philox counter walked forward, two uniforms per block.
class KeyedStream {
public:
    explicit KeyedStream(std::uint64_t seed, std::uint32_t tag = 0) noexcept;

    double uniform() noexcept;
    double normal() noexcept;
    /// +1 or -1 with probability 1/2 each.
    double rademacher() noexcept;

private:
    void refill() noexcept;

    PhiloxKey key_;
    std::uint64_t block_ = 0;
    std::uint32_t tag_;
    std::array<std::uint32_t, 4> buf_{};
    int used_ = 4;
};

}  // namespace adaptsde
