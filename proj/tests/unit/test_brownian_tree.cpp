#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "adaptsde/brownian_tree.hpp"
#include "adaptsde/errors.hpp"
#include "adaptsde/rng.hpp"

using namespace adaptsde;

namespace {

bool same(const BrownianSample& a, const BrownianSample& b) { return a.h == b.h && a.W == b.W && a.H == b.H; }

/// Deterministic list of nodes down to depth 10.
std::vector<DyadicInterval> probe_nodes() {
    std::vector<DyadicInterval> v;
    KeyedStream s(99);
    for (int i = 0; i < 200; ++i) {
        const int depth = static_cast<int>(s.uniform() * 11);
        const auto index = static_cast<std::uint64_t>(s.uniform() * double(1ull << depth));
        v.push_back({depth, index});
    }
    return v;
}

}  // namespace

TEST_CASE("root sample is pure") {
    BrownianTree a(5, 2, 1.0), b(5, 2, 1.0), c(6, 2, 1.0);
    CHECK(same(a.root_sample(), a.root_sample()));
    CHECK(same(a.root_sample(), b.root_sample()));
    CHECK_FALSE(same(a.root_sample(), c.root_sample()));
    CHECK(same(a.sample({0, 0}), a.root_sample()));
    CHECK(a.root_sample().h == 1.0);
}

TEST_CASE("samples do not depend on query order or cache state") {
    const auto nodes = probe_nodes();
    BrownianTree fwd(11, 3, 2.0), rev(11, 3, 2.0), tiny(11, 3, 2.0, {40, 16, true}),
        none(11, 3, 2.0, {40, 0, false});
    std::vector<BrownianSample> expected;
    for (const auto& iv : nodes) expected.push_back(fwd.sample(iv));
    for (std::size_t i = nodes.size(); i-- > 0;) CHECK(same(rev.sample(nodes[i]), expected[i]));
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        CHECK(same(tiny.sample(nodes[i]), expected[i]));
        CHECK(same(none.sample(nodes[i]), expected[i]));
        CHECK(same(fwd.sample_uncached(nodes[i]), expected[i]));
    }
    CHECK(tiny.cache_size() <= 16);
    CHECK(none.cache_size() == 0);
}

TEST_CASE("deep node queried directly equals the one reached through its ancestors") {
    BrownianTree direct(3, 1, 1.0), walked(3, 1, 1.0);
    const DyadicInterval target{10, 613};
    const auto d = direct.sample(target);
    for (int depth = 0; depth <= 10; ++depth) walked.sample({depth, target.index >> (10 - depth)});
    CHECK(same(walked.sample(target), d));
}

TEST_CASE("sample of a child is the split of the parent") {
    BrownianTree t(17, 2, 4.0);
    for (const auto& iv : probe_nodes()) {
        const auto parent = t.sample(iv);
        const auto [l, r] = t.split(iv, parent);
        CHECK(same(t.sample(iv.left_child()), l));
        CHECK(same(t.sample(iv.right_child()), r));
        CHECK(l.h == parent.h / 2);
    }
}

TEST_CASE("split formula with explicit draws") {
    const BrownianSample zero(1.0, {0.0}, {0.0});
    const std::vector<double> z{0.0}, n{0.0};
    const auto [l, r] = split_with(zero, z, n);
    CHECK(same(l, BrownianSample(0.5, {0.0}, {0.0})));
    CHECK(same(r, BrownianSample(0.5, {0.0}, {0.0})));

    const BrownianSample p(2.0, {0.8, -0.4}, {0.2, 0.1});
    const std::vector<double> Z{0.3, -0.7}, N{-0.25, 0.5};
    const auto [L, R] = split_with(p, Z, N);
    for (int i = 0; i < 2; ++i) {
        CHECK(L.W[i] == doctest::Approx(0.5 * p.W[i] + 1.5 * p.H[i] + Z[i]));
        CHECK(R.W[i] == doctest::Approx(0.5 * p.W[i] - 1.5 * p.H[i] - Z[i]));
        CHECK(L.H[i] == doctest::Approx(0.25 * p.H[i] - 0.5 * Z[i] + 0.5 * N[i]));
        CHECK(R.H[i] == doctest::Approx(0.25 * p.H[i] - 0.5 * Z[i] - 0.5 * N[i]));
        CHECK(L.W[i] + R.W[i] == doctest::Approx(p.W[i]).epsilon(1e-15));
    }
}

TEST_CASE("chain_samples examples") {
    const BrownianSample z(0.5, {0.0}, {0.0});
    CHECK(same(chain_samples(z, z), BrownianSample(1.0, {0.0}, {0.0})));

    // Ramp on [0,1/2] then flat: H = int (1/2 - r) dW = 2 * int_0^{1/2} (1/2 - r) dr = 1/4.
    const auto ramp = chain_samples(BrownianSample(0.5, {1.0}, {0.0}), z);
    CHECK(ramp.h == 1.0);
    CHECK(ramp.W[0] == 1.0);
    CHECK(ramp.H[0] == doctest::Approx(0.25).epsilon(1e-15));

    const BrownianSample a(0.25, {0.3}, {0.1}), b(0.5, {-0.2}, {0.05}), c(0.125, {0.9}, {-0.3});
    const auto left = chain_samples(chain_samples(a, b), c);
    const auto right = chain_samples(a, chain_samples(b, c));
    CHECK(left.h == right.h);
    CHECK(left.W[0] == doctest::Approx(right.W[0]).epsilon(1e-14));
    CHECK(left.H[0] == doctest::Approx(right.H[0]).epsilon(1e-14));

    CHECK_THROWS_AS(chain_samples(BrownianSample(0.0, {0.0}, {0.0}), z), InvalidArgument);
    CHECK_THROWS_AS(chain_samples(z, BrownianSample(0.5, {0.0, 0.0}, {0.0, 0.0})), InvalidArgument);
}

TEST_CASE("chain_samples matches a piecewise-linear quadrature") {
    // H over [0,h] of a path linear on each piece: (1/h) int_0^h (W_r - W_0) dr - W/2.
    const std::vector<double> h{0.3, 0.2, 0.5}, w{0.4, -1.1, 0.7};
    double area = 0.0, x = 0.0;
    BrownianSample acc(h[0], {w[0]}, {0.0});
    area += h[0] * (x + 0.5 * w[0]);
    x += w[0];
    for (int i = 1; i < 3; ++i) {
        area += h[i] * (x + 0.5 * w[i]);
        x += w[i];
        chain_into(acc, BrownianSample(h[i], {w[i]}, {0.0}));
    }
    CHECK(acc.h == doctest::Approx(1.0));
    CHECK(acc.W[0] == doctest::Approx(x));
    CHECK(acc.H[0] == doctest::Approx(area / 1.0 - 0.5 * x).epsilon(1e-14));
}

TEST_CASE("children chain back to the parent") {
    BrownianTree t(23, 2, 1.0);
    for (const auto& iv : probe_nodes()) {
        const auto p = t.sample(iv);
        const auto c = chain_samples(t.sample(iv.left_child()), t.sample(iv.right_child()));
        for (int i = 0; i < 2; ++i) {
            const double scale = std::abs(p.W[i]) + std::abs(p.H[i]) + std::sqrt(p.h);
            CHECK(std::abs(c.W[i] - p.W[i]) <= 8 * 2.2e-16 * scale);
            CHECK(std::abs(c.H[i] - p.H[i]) <= 8 * 2.2e-16 * scale);
        }
    }
}

TEST_CASE("increment_between") {
    BrownianTree t(31, 2, 3.0);
    CHECK(same(t.increment_between(DyadicTime::zero(), DyadicTime::one()), t.root_sample()));
    CHECK(same(t.increment_between(DyadicTime(1, 2), DyadicTime(1, 1)), t.sample({2, 1})));

    const auto halves = chain_samples(t.sample({1, 0}), t.sample({1, 1}));
    const auto root = t.root_sample();
    for (int i = 0; i < 2; ++i) CHECK(halves.W[i] == doctest::Approx(root.W[i]).epsilon(1e-14));

    const auto mid = t.increment_between(DyadicTime(1, 2), DyadicTime(3, 2));
    const auto folded = chain_samples(t.sample({2, 1}), t.sample({2, 2}));
    CHECK(same(mid, folded));
    CHECK(mid.h == doctest::Approx(1.5));

    const auto w = t.value_at(DyadicTime(3, 2));
    const auto inc = t.increment_between(DyadicTime::zero(), DyadicTime(3, 2));
    for (int i = 0; i < 2; ++i) CHECK(w[i] == doctest::Approx(inc.W[i]).epsilon(1e-14));

    CHECK_THROWS_AS(t.increment_between(DyadicTime(1, 1), DyadicTime(1, 2)), InvalidArgument);
    CHECK_THROWS_AS(t.increment_between(DyadicTime(1, 1), DyadicTime(1, 1)), InvalidArgument);
}

TEST_CASE("depth beyond the maximum is an error") {
    BrownianTree t(1, 1, 1.0, {12, 0, true});
    CHECK_NOTHROW(t.sample({12, 5}));
    CHECK_THROWS_AS(t.sample({13, 5}), ResolutionExhausted);
    CHECK_THROWS_AS(t.increment_between(DyadicTime::zero(), DyadicTime(1, 13)), ResolutionExhausted);
    CHECK_THROWS_AS(BrownianTree(1, 0, 1.0), InvalidArgument);
    CHECK_THROWS_AS(BrownianTree(1, 1, 0.0), InvalidArgument);
}

TEST_CASE("marginal moments over fresh seeds") {
    // Depths 0..3, one node per depth, 10^5 seeds, 4 standard errors.
    const int M = 100000;
    const double T = 2.0;
    for (int depth = 0; depth <= 3; ++depth) {
        double sw = 0, sww = 0, shh = 0, swh = 0;
        const DyadicInterval iv{depth, (1ull << depth) - 1};
        const double h = T / double(1 << depth);
        for (int s = 0; s < M; ++s) {
            BrownianTree t(derive_seed(77, s), 1, T);
            const auto x = t.sample(iv);
            sw += x.W[0];
            sww += x.W[0] * x.W[0];
            shh += x.H[0] * x.H[0];
            swh += x.W[0] * x.H[0];
        }
        CAPTURE(depth);
        CHECK(std::abs(sw / M) < 4 * std::sqrt(h / M));
        CHECK(std::abs(sww / M - h) < 4 * h * std::sqrt(2.0 / M));
        CHECK(std::abs(shh / M - h / 12) < 4 * (h / 12) * std::sqrt(2.0 / M));
        CHECK(std::abs(swh / M) < 4 * std::sqrt(h * h / 12 / M));
    }
}

TEST_CASE("dump format") {
    BrownianTree t(2, 2, 1.0);
    std::ostringstream os;
    t.dump_csv(os, 1);
    std::istringstream in(os.str());
    std::string line;
    int rows = 0;
    while (std::getline(in, line)) {
        if (line.rfind("depth", 0) == 0) continue;
        ++rows;
        CHECK(std::count(line.begin(), line.end(), ',') == 5);
    }
    CHECK(rows == 3);
}
