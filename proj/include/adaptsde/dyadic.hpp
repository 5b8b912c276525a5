#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <vector>

namespace adaptsde {

/// Hard ceiling on any dyadic depth the library handles (index arithmetic stays in 64 bits).
inline constexpr int kDyadicDepthLimit = 60;

/// Exact time k * 2^-n * T, kept in lowest terms (k odd or n == 0).
/// Only the fraction of the horizon is stored; T is applied at float conversion.
class DyadicTime {
public:
    constexpr DyadicTime() = default;
    /// Throws InvalidArgument for negative k or n outside [0, kDyadicDepthLimit].
    DyadicTime(std::int64_t k, int n);

    static DyadicTime zero() { return {}; }
    static DyadicTime one() { return DyadicTime(1, 0); }

    std::int64_t numerator() const noexcept { return k_; }
    int depth() const noexcept { return n_; }

    /// Numerator when written at depth m >= depth().
    std::int64_t at_depth(int m) const;

    /// Fraction of the horizon as a double.
    double fraction() const noexcept;
    double value(double horizon) const noexcept { return fraction() * horizon; }

    /// Largest time at depth m that is <= x (x a fraction of the horizon, clamped to [0,1]).
    static DyadicTime floor_at(double x, int m);
    /// Nearest time at depth m (ties up).
    static DyadicTime nearest_at(double x, int m);

    friend bool operator==(const DyadicTime&, const DyadicTime&) = default;
    friend std::strong_ordering operator<=>(const DyadicTime& a, const DyadicTime& b);

    std::string str() const;

private:
    std::int64_t k_ = 0;
    int n_ = 0;
};

/// Exact difference b - a (requires b >= a).
DyadicTime dyadic_sub(DyadicTime b, DyadicTime a);
DyadicTime dyadic_add(DyadicTime a, DyadicTime b);

/// [index * 2^-depth T, (index+1) * 2^-depth T].
struct DyadicInterval {
    int depth = 0;
    std::uint64_t index = 0;

    /// Throws InvalidArgument unless 0 <= index < 2^depth.
    static DyadicInterval make(int depth, std::uint64_t index);

    DyadicTime left() const { return DyadicTime(static_cast<std::int64_t>(index), depth); }
    DyadicTime right() const { return DyadicTime(static_cast<std::int64_t>(index + 1), depth); }
    DyadicTime midpoint() const { return DyadicTime(static_cast<std::int64_t>(2 * index + 1), depth + 1); }
    DyadicInterval left_child() const { return {depth + 1, 2 * index}; }
    DyadicInterval right_child() const { return {depth + 1, 2 * index + 1}; }
    DyadicInterval parent() const { return {depth - 1, index / 2}; }
    /// Length as a fraction of the horizon.
    double fraction() const noexcept;

    friend bool operator==(const DyadicInterval&, const DyadicInterval&) = default;
};

/// Canonical left-to-right decomposition of [s,t] into maximal aligned dyadic intervals.
/// Throws InvalidArgument if s >= t or t > 1.
std::vector<DyadicInterval> dyadic_cover(DyadicTime s, DyadicTime t);

/// Whether [s,t] is exactly one dyadic interval.
bool is_aligned_interval(DyadicTime s, DyadicTime t);

}  // namespace adaptsde
