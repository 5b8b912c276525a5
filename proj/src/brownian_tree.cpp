#include "adaptsde/brownian_tree.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "adaptsde/errors.hpp"
#include "adaptsde/rng.hpp"

namespace adaptsde {

namespace {

constexpr std::uint64_t kEmpty = ~std::uint64_t{0};
constexpr int kKeyDepthShift = 56;
constexpr std::uint32_t kTagRoot = 1;
constexpr std::uint32_t kTagSplit = 2;

inline std::uint64_t node_key(DyadicInterval iv) {
    return (static_cast<std::uint64_t>(iv.depth) << kKeyDepthShift) | iv.index;
}

void check_sizes(const BrownianSample& a, const BrownianSample& b) {
    if (a.W.size() != b.W.size() || a.H.size() != a.W.size() || b.H.size() != b.W.size())
        throw DimensionMismatch("chain_samples: dimension mismatch");
    if (!(a.h > 0) || !(b.h > 0)) throw InvalidArgument("chain_samples: non-positive h");
}

}  // namespace

void chain_into(BrownianSample& acc, const BrownianSample& right) {
    check_sizes(acc, right);
    const double h1 = acc.h, h2 = right.h, h = h1 + h2;
    for (std::size_t i = 0; i < acc.W.size(); ++i) {
        const double W1 = acc.W[i], W2 = right.W[i];
        // Time integral of the path minus W_s, written per unit time, then recentred.
        const double I = (h1 * (0.5 * W1 - acc.H[i]) + h1 * W2 + h2 * (0.5 * W2 - right.H[i])) / h;
        acc.W[i] = W1 + W2;
        acc.H[i] = 0.5 * (W1 + W2) - I;
    }
    acc.h = h;
}

BrownianSample chain_samples(const BrownianSample& left, const BrownianSample& right) {
    BrownianSample out = left;
    chain_into(out, right);
    return out;
}

std::pair<BrownianSample, BrownianSample> split_with(const BrownianSample& p, std::span<const double> Z,
                                                     std::span<const double> N) {
    const std::size_t d = p.W.size();
    if (p.H.size() != d || Z.size() != d || N.size() != d) throw DimensionMismatch("split: dimension mismatch");
    BrownianSample L = BrownianSample::zero(0.5 * p.h, static_cast<int>(d));
    BrownianSample R = BrownianSample::zero(0.5 * p.h, static_cast<int>(d));
    for (std::size_t i = 0; i < d; ++i) {
        L.W[i] = 0.5 * p.W[i] + 1.5 * p.H[i] + Z[i];
        R.W[i] = 0.5 * p.W[i] - 1.5 * p.H[i] - Z[i];
        L.H[i] = 0.25 * p.H[i] - 0.5 * Z[i] + 0.5 * N[i];
        R.H[i] = 0.25 * p.H[i] - 0.5 * Z[i] - 0.5 * N[i];
    }
    return {std::move(L), std::move(R)};
}

BrownianTree::BrownianTree(std::uint64_t seed, int dim, double horizon, BrownianTreeOptions opts)
    : seed_(seed), d_(dim), T_(horizon), opts_(opts) {
    if (dim < 1) throw InvalidArgument("BrownianTree: dimension must be >= 1");
    if (!(horizon > 0) || !std::isfinite(horizon)) throw InvalidArgument("BrownianTree: horizon must be positive");
    if (opts.max_depth < 0 || opts.max_depth >= kKeyDepthShift)
        throw InvalidArgument("BrownianTree: max_depth must be in [0, 55]");
    scratch_.resize(6 * static_cast<std::size_t>(d_));
    for (int n = 0; n < kKeyDepthShift; ++n) {
        const double h = std::ldexp(T_, -n);
        z_scale_[n] = std::sqrt(h / 16.0);
        n_scale_[n] = std::sqrt(h / 12.0);
    }
    clear_cache();
}

void BrownianTree::check_depth(const DyadicInterval& iv) const {
    if (iv.depth > opts_.max_depth)
        throw ResolutionExhausted("depth " + std::to_string(iv.depth) + " exceeds max depth " +
                                  std::to_string(opts_.max_depth));
    if (iv.depth < 0 || iv.index >= (std::uint64_t{1} << iv.depth)) throw InvalidArgument("interval out of range");
}

namespace {

// Fills out[0..2d) with standard normals from the node's keyed counter.
void keyed_normals(std::uint64_t seed, std::uint32_t tag, DyadicInterval iv, int d, double* out) {
    const PhiloxKey key{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
    const std::uint32_t w2 = static_cast<std::uint32_t>(iv.depth) | (tag << 8);
    for (int j = 0; j < d; ++j) {
        auto r = philox4x32({static_cast<std::uint32_t>(iv.index), static_cast<std::uint32_t>(iv.index >> 32), w2,
                             static_cast<std::uint32_t>(j)},
                            key);
        out[2 * j] = normal_quantile(uniform_open(r[0], r[1]));
        out[2 * j + 1] = normal_quantile(uniform_open(r[2], r[3]));
    }
}

}  // namespace

void BrownianTree::root_draws(double* W, double* H) const {
    double* g = scratch_.data();
    keyed_normals(seed_, kTagRoot, {0, 0}, d_, g);
    const double sw = std::sqrt(T_), sh = std::sqrt(T_ / 12.0);
    for (int i = 0; i < d_; ++i) {
        W[i] = sw * g[i];
        H[i] = sh * g[d_ + i];
    }
}

void BrownianTree::split_draws(DyadicInterval iv, double* Z, double* N) const {
    double* g = scratch_.data();
    keyed_normals(seed_, kTagSplit, iv, d_, g);
    const double sz = z_scale_[iv.depth], sn = n_scale_[iv.depth];
    for (int i = 0; i < d_; ++i) {
        Z[i] = sz * g[i];
        N[i] = sn * g[d_ + i];
    }
}

void BrownianTree::split_raw(DyadicInterval iv, const double* W, const double* H, double* out) const {
    double* Z = scratch_.data() + 2 * d_;
    double* N = Z + d_;
    split_draws(iv, Z, N);
    double* WL = out;
    double* HL = out + d_;
    double* WR = out + 2 * d_;
    double* HR = out + 3 * d_;
    for (int i = 0; i < d_; ++i) {
        WL[i] = 0.5 * W[i] + 1.5 * H[i] + Z[i];
        WR[i] = 0.5 * W[i] - 1.5 * H[i] - Z[i];
        HL[i] = 0.25 * H[i] - 0.5 * Z[i] + 0.5 * N[i];
        HR[i] = 0.25 * H[i] - 0.5 * Z[i] - 0.5 * N[i];
    }
}

BrownianSample BrownianTree::root_sample() const {
    BrownianSample s = BrownianSample::zero(T_, d_);
    root_draws(s.W.data(), s.H.data());
    return s;
}

std::pair<BrownianSample, BrownianSample> BrownianTree::split(DyadicInterval iv, const BrownianSample& parent) const {
    if (static_cast<int>(parent.W.size()) != d_ || static_cast<int>(parent.H.size()) != d_)
        throw DimensionMismatch("split: parent dimension mismatch");
    DyadicInterval child = iv.left_child();
    check_depth(child);
    std::vector<double> Z(d_), N(d_);
    split_draws(iv, Z.data(), N.data());
    return split_with(parent, Z, N);
}

std::size_t BrownianTree::cache_size() const noexcept { return count_; }

void BrownianTree::clear_cache() {
    slots_.assign(64, Slot{kEmpty, 0});
    count_ = 0;
    arena_.clear();
}

namespace {

// Runs of 8 horizontally adjacent nodes share a probe start, so a left-to-right sweep
// touches few cache lines.
inline std::size_t home_slot(std::uint64_t key, std::size_t mask) { return (mix64(key >> 3) + (key & 7)) & mask; }

}  // namespace

std::size_t BrownianTree::node(DyadicInterval iv) {
    const std::uint64_t key = node_key(iv);
    const std::size_t mask = slots_.size() - 1;
    for (std::size_t slot = home_slot(key, mask); slots_[slot].key != kEmpty; slot = (slot + 1) & mask)
        if (slots_[slot].key == key) return slots_[slot].node;

    const std::size_t stride = 2 * static_cast<std::size_t>(d_);
    auto insert = [&](std::uint64_t k, std::size_t off) {
        if (2 * (count_ + 1) > slots_.size()) {
            std::vector<Slot> old(slots_.size() * 2, Slot{kEmpty, 0});
            old.swap(slots_);
            const std::size_t m = slots_.size() - 1;
            for (const Slot& o : old) {
                if (o.key == kEmpty) continue;
                std::size_t s = home_slot(o.key, m);
                while (slots_[s].key != kEmpty) s = (s + 1) & m;
                slots_[s] = o;
            }
        }
        const std::size_t m = slots_.size() - 1;
        std::size_t s = home_slot(k, m);
        while (slots_[s].key != kEmpty) s = (s + 1) & m;
        slots_[s] = Slot{k, static_cast<std::uint32_t>(off / stride)};
        ++count_;
    };

    if (iv.depth == 0) {
        const std::size_t off = arena_.size();
        arena_.resize(off + stride);
        root_draws(arena_.data() + off, arena_.data() + off + d_);
        insert(key, off);
        return off / stride;
    }

    const std::size_t poff = node(iv.parent()) * stride;
    std::vector<double>& a = arena_;
    const std::size_t off = a.size();
    a.resize(off + 2 * stride);
    // Children laid out as [WL HL][WR HR], which matches split_raw's output order.
    std::copy_n(a.data() + poff, stride, scratch_.data() + 4 * d_);
    split_raw(iv.parent(), scratch_.data() + 4 * d_, scratch_.data() + 5 * d_, a.data() + off);
    DyadicInterval L = iv.parent().left_child();
    insert(node_key(L), off);
    insert(node_key(L) + 1, off + stride);
    return (iv.index & 1) ? off / stride + 1 : off / stride;
}

void BrownianTree::sample_into(DyadicInterval iv, BrownianSample& out) {
    check_depth(iv);
    out.h = std::ldexp(T_, -iv.depth);
    out.W.resize(d_);
    out.H.resize(d_);
    if (!opts_.memoize) {
        BrownianSample s = sample_uncached(iv);
        out.W = s.W;
        out.H = s.H;
        return;
    }
    if (opts_.cache_capacity > 0 && count_ + 2 * static_cast<std::size_t>(iv.depth) + 2 > opts_.cache_capacity)
        clear_cache();
    const std::size_t stride = 2 * static_cast<std::size_t>(d_);
    const std::size_t slot = node(iv);  // may grow the arena
    const double* p = arena_.data() + slot * stride;
    std::copy_n(p, d_, out.W.data());
    std::copy_n(p + d_, d_, out.H.data());
}

BrownianSample BrownianTree::sample(DyadicInterval iv) {
    BrownianSample s;
    sample_into(iv, s);
    return s;
}

BrownianSample BrownianTree::sample_uncached(DyadicInterval iv) const {
    check_depth(iv);
    BrownianSample s = root_sample();
    std::vector<double> kids(4 * static_cast<std::size_t>(d_));
    for (int level = 0; level < iv.depth; ++level) {
        DyadicInterval cur{level, iv.index >> (iv.depth - level)};
        std::vector<double> g(2 * static_cast<std::size_t>(d_));
        keyed_normals(seed_, kTagSplit, cur, d_, g.data());
        const double h = std::ldexp(T_, -level);
        const double sz = std::sqrt(h / 16.0), sn = std::sqrt(h / 12.0);
        const bool right = (iv.index >> (iv.depth - level - 1)) & 1;
        for (int i = 0; i < d_; ++i) {
            const double Z = sz * g[i], N = sn * g[d_ + i];
            const double W = s.W[i], H = s.H[i];
            if (!right) {
                s.W[i] = 0.5 * W + 1.5 * H + Z;
                s.H[i] = 0.25 * H - 0.5 * Z + 0.5 * N;
            } else {
                s.W[i] = 0.5 * W - 1.5 * H - Z;
                s.H[i] = 0.25 * H - 0.5 * Z - 0.5 * N;
            }
        }
    }
    s.h = std::ldexp(T_, -iv.depth);
    return s;
}

void BrownianTree::increment_between(DyadicTime s, DyadicTime t, BrownianSample& out) {
    if (!(s < t)) throw InvalidArgument("increment_between: need s < t");
    if (DyadicTime::one() < t) throw InvalidArgument("increment_between: t beyond horizon");
    const int m = std::max(s.depth(), t.depth());
    if (m > opts_.max_depth)
        throw ResolutionExhausted("time " + (s.depth() > t.depth() ? s : t).str() + " finer than max depth");
    auto a = static_cast<std::uint64_t>(s.at_depth(m));
    const auto b = static_cast<std::uint64_t>(t.at_depth(m));
    bool first = true;
    BrownianSample& piece = piece_;
    while (a < b) {
        int j = a == 0 ? m : std::min(std::countr_zero(a), m);
        while ((std::uint64_t{1} << j) > b - a) --j;
        DyadicInterval iv{m - j, a >> j};
        if (first) {
            sample_into(iv, out);
            first = false;
        } else {
            sample_into(iv, piece);
            chain_into(out, piece);
        }
        a += std::uint64_t{1} << j;
    }
}

BrownianSample BrownianTree::increment_between(DyadicTime s, DyadicTime t) {
    BrownianSample out;
    increment_between(s, t, out);
    return out;
}

std::vector<double> BrownianTree::value_at(DyadicTime t) {
    if (t == DyadicTime::zero()) return std::vector<double>(d_, 0.0);
    return increment_between(DyadicTime::zero(), t).W;
}

void BrownianTree::dump_csv(std::ostream& os, int depth) {
    os << "depth,index";
    for (int i = 1; i <= d_; ++i) os << ",W_" << i;
    for (int i = 1; i <= d_; ++i) os << ",H_" << i;
    os << '\n';
    char buf[32];
    for (int n = 0; n <= depth; ++n) {
        for (std::uint64_t k = 0; k < (std::uint64_t{1} << n); ++k) {
            BrownianSample s = sample(DyadicInterval::make(n, k));
            os << n << ',' << k;
            for (double v : s.W) {
                std::snprintf(buf, sizeof buf, "%.17g", v);
                os << ',' << buf;
            }
            for (double v : s.H) {
                std::snprintf(buf, sizeof buf, "%.17g", v);
                os << ',' << buf;
            }
            os << '\n';
        }
    }
}

}  // namespace adaptsde
