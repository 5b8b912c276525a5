#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "adaptsde/dyadic.hpp"

namespace adaptsde {

/// Increment W and space-time Levy area H of a d-dimensional Brownian motion over
/// an interval of length h. H = (1/h) * int_s^t (W_r - W_s) dr - W/2.
struct BrownianSample {
    double h = 0.0;
    std::vector<double> W;
    std::vector<double> H;

    BrownianSample() = default;
    BrownianSample(double h_, std::vector<double> W_, std::vector<double> H_)
        : h(h_), W(std::move(W_)), H(std::move(H_)) {}
    /// Zero increment of length h.
    static BrownianSample zero(double h, int d) { return {h, std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)}; }

    int dim() const noexcept { return static_cast<int>(W.size()); }
};

/// Concatenate samples over adjacent intervals [s,u] and [u,t].
BrownianSample chain_samples(const BrownianSample& left, const BrownianSample& right);
/// In-place form: acc <- acc (+) right.
void chain_into(BrownianSample& acc, const BrownianSample& right);

/// Midpoint split with explicitly supplied Z ~ N(0, h/16) and N ~ N(0, h/12) draws.
std::pair<BrownianSample, BrownianSample> split_with(const BrownianSample& parent,
                                                     std::span<const double> Z,
                                                     std::span<const double> N);

struct BrownianTreeOptions {
    int max_depth = 40;
    /// Maximum number of memoized nodes, 0 for unbounded. The cache is flushed when full.
    std::size_t cache_capacity = 0;
    bool memoize = true;
};

/// Seed-addressed Brownian tree over [0,T] refined by conditional midpoint splitting.
///
/// Randomness: Philox4x32-10 keyed by the 64-bit seed. Node draws use counter
/// (index_lo, index_hi, depth | tag << 8, block) where tag is 1 for the root and
/// 2 for splits; block j yields two 52-bit uniforms which become normals
/// 2j and 2j+1 of the node vector through the AS241 inverse CDF. The node vector is
/// [xi_1..xi_d, eta_1..eta_d] (root: W then H; split: Z then N before scaling).
/// Values are therefore independent of query order and cache state.
///
/// The memoizing accessors are not safe for concurrent use on one tree;
/// sample_uncached is const and may be called from many threads.
class BrownianTree {
public:
    BrownianTree(std::uint64_t seed, int dim, double horizon, BrownianTreeOptions opts = {});

    std::uint64_t seed() const noexcept { return seed_; }
    int dim() const noexcept { return d_; }
    double horizon() const noexcept { return T_; }
    int max_depth() const noexcept { return opts_.max_depth; }

    BrownianSample root_sample() const;
    /// Children of `interval` given its sample, using the tree's keyed draws.
    std::pair<BrownianSample, BrownianSample> split(DyadicInterval interval, const BrownianSample& parent) const;

    BrownianSample sample(DyadicInterval interval);
    void sample_into(DyadicInterval interval, BrownianSample& out);
    /// Recomputes from the root without touching the cache.
    BrownianSample sample_uncached(DyadicInterval interval) const;

    /// Chain of samples over the minimal dyadic cover of [s,t].
    BrownianSample increment_between(DyadicTime s, DyadicTime t);
    void increment_between(DyadicTime s, DyadicTime t, BrownianSample& out);

    /// Brownian value W_t (d-vector) at a dyadic time.
    std::vector<double> value_at(DyadicTime t);

    std::size_t cache_size() const noexcept;
    void clear_cache();

    /// Writes `depth,index,W_1..W_d,H_1..H_d` rows for every node down to `depth`.
    void dump_csv(std::ostream& os, int depth);

private:
    void check_depth(const DyadicInterval& iv) const;
    void root_draws(double* W, double* H) const;
    void split_draws(DyadicInterval iv, double* Z, double* N) const;
    void split_raw(DyadicInterval iv, const double* W, const double* H, double* out) const;
    /// Offset of the node's (W,H) block in arena_, computing ancestors as needed.
    std::size_t node(DyadicInterval iv);

    std::uint64_t seed_;
    int d_;
    double T_;
    BrownianTreeOptions opts_;

    // Open-addressing index: key -> arena offset. Empty slots hold kEmpty.
    struct Slot {
        std::uint64_t key;
        std::uint32_t node;
    };
    std::vector<Slot> slots_;
    std::size_t count_ = 0;
    std::vector<double> arena_;
    mutable std::vector<double> scratch_;
    BrownianSample piece_;
    /// sqrt(h/16) and sqrt(h/12) for an interval at each depth.
    std::array<double, 56> z_scale_{}, n_scale_{};
};

}  // namespace adaptsde
