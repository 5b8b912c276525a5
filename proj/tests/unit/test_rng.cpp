#include <doctest.h>

#include <cmath>
#include <set>

#include "adaptsde/rng.hpp"

using namespace adaptsde;

TEST_CASE("philox4x32-10 known answers") {
    // Reference vectors distributed with the Random123 library.
    CHECK(philox4x32({0, 0, 0, 0}, {0, 0}) == PhiloxCounter{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
    CHECK(philox4x32({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
          PhiloxCounter{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
    CHECK(philox4x32({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
          PhiloxCounter{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("uniform_open stays strictly inside the unit interval") {
    CHECK(uniform_open(0, 0) > 0.0);
    CHECK(uniform_open(0xffffffff, 0xffffffff) < 1.0);
    CHECK(uniform_open(0x80000000, 0) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("normal_quantile inverts the normal CDF") {
    auto cdf = [](double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); };
    for (double p : {1e-300, 1e-20, 1e-10, 1e-5, 0.001, 0.02425, 0.1, 0.3, 0.5, 0.7, 0.9, 0.97575, 0.999, 1 - 1e-10}) {
        const double x = normal_quantile(p);
        // Compare in the tail that is representable without cancellation.
        const double q = p < 0.5 ? cdf(x) : 1.0 - cdf(x);
        const double target = p < 0.5 ? p : 1.0 - p;
        CHECK(std::abs(q - target) <= 1e-13 * target + 1e-300);
    }
    CHECK(normal_quantile(0.5) == 0.0);
    CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-15));
    CHECK(normal_quantile(0.25) == doctest::Approx(-normal_quantile(0.75)).epsilon(1e-15));
}

TEST_CASE("derived seeds and streams") {
    std::set<std::uint64_t> seen;
    for (std::uint64_t i = 0; i < 1000; ++i) seen.insert(derive_seed(42, i));
    CHECK(seen.size() == 1000);
    CHECK(derive_seed(1, 0) != derive_seed(2, 0));

    KeyedStream a(7, 3), b(7, 3), c(7, 4);
    bool differs = false;
    for (int i = 0; i < 100; ++i) {
        const double x = a.normal();
        CHECK(x == b.normal());
        differs |= x != c.normal();
    }
    CHECK(differs);

    KeyedStream r(9);
    int plus = 0;
    for (int i = 0; i < 10000; ++i) {
        const double s = r.rademacher();
        REQUIRE((s == 1.0 || s == -1.0));
        plus += s > 0;
    }
    CHECK(std::abs(plus - 5000) < 4 * 50);
}

TEST_CASE("keyed stream normals have unit variance") {
    KeyedStream s(123);
    double sum = 0, sq = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double z = s.normal();
        sum += z;
        sq += z * z;
    }
    CHECK(std::abs(sum / n) < 4 / std::sqrt(double(n)));
    CHECK(std::abs(sq / n - 1.0) < 4 * std::sqrt(2.0 / n));
}
