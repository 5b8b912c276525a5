#include "adaptsde/dyadic.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "adaptsde/errors.hpp"

namespace adaptsde {

DyadicTime::DyadicTime(std::int64_t k, int n) {
    if (k < 0 || n < 0 || n > kDyadicDepthLimit)
        throw InvalidArgument("dyadic time out of range: " + std::to_string(k) + "/2^" + std::to_string(n));
    if (k == 0) {
        n = 0;
    } else {
        int tz = std::min(std::countr_zero(static_cast<std::uint64_t>(k)), n);
        k >>= tz;
        n -= tz;
    }
    k_ = k;
    n_ = n;
}

std::int64_t DyadicTime::at_depth(int m) const {
    if (m < n_ || m > kDyadicDepthLimit) throw InvalidArgument("at_depth below canonical depth");
    return k_ << (m - n_);
}

double DyadicTime::fraction() const noexcept { return std::ldexp(static_cast<double>(k_), -n_); }

DyadicTime DyadicTime::floor_at(double x, int m) {
    x = std::clamp(x, 0.0, 1.0);
    return DyadicTime(static_cast<std::int64_t>(std::floor(std::ldexp(x, m))), m);
}

DyadicTime DyadicTime::nearest_at(double x, int m) {
    x = std::clamp(x, 0.0, 1.0);
    return DyadicTime(static_cast<std::int64_t>(std::floor(std::ldexp(x, m) + 0.5)), m);
}

std::strong_ordering operator<=>(const DyadicTime& a, const DyadicTime& b) {
    int m = std::max(a.n_, b.n_);
    return (a.k_ << (m - a.n_)) <=> (b.k_ << (m - b.n_));
}

std::string DyadicTime::str() const { return std::to_string(k_) + "/2^" + std::to_string(n_); }

DyadicTime dyadic_sub(DyadicTime b, DyadicTime a) {
    int m = std::max(a.depth(), b.depth());
    std::int64_t d = b.at_depth(m) - a.at_depth(m);
    if (d < 0) throw InvalidArgument("dyadic_sub: negative difference");
    return DyadicTime(d, m);
}

DyadicTime dyadic_add(DyadicTime a, DyadicTime b) {
    int m = std::max(a.depth(), b.depth());
    return DyadicTime(a.at_depth(m) + b.at_depth(m), m);
}

DyadicInterval DyadicInterval::make(int depth, std::uint64_t index) {
    if (depth < 0 || depth > kDyadicDepthLimit || index >= (std::uint64_t{1} << depth))
        throw InvalidArgument("dyadic interval out of range: depth " + std::to_string(depth) + " index " +
                              std::to_string(index));
    return {depth, index};
}

double DyadicInterval::fraction() const noexcept { return std::ldexp(1.0, -depth); }

std::vector<DyadicInterval> dyadic_cover(DyadicTime s, DyadicTime t) {
    if (!(s < t)) throw InvalidArgument("dyadic_cover: need s < t");
    if (DyadicTime::one() < t) throw InvalidArgument("dyadic_cover: t beyond horizon");
    const int m = std::max(s.depth(), t.depth());
    auto a = static_cast<std::uint64_t>(s.at_depth(m));
    const auto b = static_cast<std::uint64_t>(t.at_depth(m));
    std::vector<DyadicInterval> out;
    while (a < b) {
        int j = a == 0 ? m : std::min(std::countr_zero(a), m);
        while ((std::uint64_t{1} << j) > b - a) --j;
        out.push_back({m - j, a >> j});
        a += std::uint64_t{1} << j;
    }
    return out;
}

bool is_aligned_interval(DyadicTime s, DyadicTime t) {
    if (!(s < t)) return false;
    DyadicTime len = dyadic_sub(t, s);
    if (len.numerator() != 1) return false;
    // s must be a multiple of the length.
    return s.depth() <= len.depth();
}

}  // namespace adaptsde
