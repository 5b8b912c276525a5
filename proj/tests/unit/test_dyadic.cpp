#include <doctest.h>

#include "adaptsde/dyadic.hpp"
#include "adaptsde/errors.hpp"

using namespace adaptsde;

TEST_CASE("dyadic times are kept in lowest terms") {
    const DyadicTime t(4, 3);
    CHECK(t.numerator() == 1);
    CHECK(t.depth() == 1);
    CHECK(t == DyadicTime(1, 1));
    CHECK(t.at_depth(5) == 16);
    CHECK(DyadicTime(0, 7) == DyadicTime::zero());
    CHECK(DyadicTime(8, 3) == DyadicTime::one());
    CHECK(DyadicTime(3, 2).value(8.0) == 6.0);
    CHECK_THROWS_AS(DyadicTime(-1, 2), InvalidArgument);
    CHECK_THROWS_AS(DyadicTime(1, kDyadicDepthLimit + 1), InvalidArgument);
}

TEST_CASE("dyadic ordering and arithmetic are exact") {
    CHECK(DyadicTime(1, 2) < DyadicTime(3, 3));
    CHECK(DyadicTime(3, 3) < DyadicTime(1, 1));
    CHECK(dyadic_add(DyadicTime(1, 2), DyadicTime(1, 2)) == DyadicTime(1, 1));
    CHECK(dyadic_sub(DyadicTime(3, 2), DyadicTime(1, 3)) == DyadicTime(5, 3));
    // 2^-50 apart: indistinguishable after a careless float round trip at T = 8, exact here.
    const DyadicTime a(1, 50), b(2, 50);
    CHECK(a < b);
    CHECK(dyadic_sub(b, a) == a);
}

TEST_CASE("floor and nearest on a grid") {
    CHECK(DyadicTime::floor_at(0.3, 2) == DyadicTime(1, 2));
    CHECK(DyadicTime::nearest_at(0.3, 2) == DyadicTime(1, 2));
    CHECK(DyadicTime::nearest_at(0.4, 2) == DyadicTime(1, 1));
    CHECK(DyadicTime::nearest_at(0.375, 2) == DyadicTime(1, 1));
    CHECK(DyadicTime::floor_at(2.0, 4) == DyadicTime::one());
    CHECK(DyadicTime::floor_at(-1.0, 4) == DyadicTime::zero());
}

TEST_CASE("intervals and children") {
    const auto iv = DyadicInterval::make(3, 5);
    CHECK(iv.left() == DyadicTime(5, 3));
    CHECK(iv.right() == DyadicTime(3, 2));
    CHECK(iv.midpoint() == DyadicTime(11, 4));
    CHECK(iv.left_child() == DyadicInterval{4, 10});
    CHECK(iv.right_child() == DyadicInterval{4, 11});
    CHECK(iv.left_child().right() == iv.right_child().left());
    CHECK(iv.left_child().parent() == iv);
    CHECK(iv.right_child().parent() == iv);
    CHECK(iv.fraction() == 0.125);
    CHECK_THROWS_AS(DyadicInterval::make(3, 8), InvalidArgument);
}

TEST_CASE("canonical cover") {
    auto cover = dyadic_cover(DyadicTime::zero(), DyadicTime::one());
    REQUIRE(cover.size() == 1);
    CHECK(cover[0] == DyadicInterval{0, 0});

    cover = dyadic_cover(DyadicTime(1, 2), DyadicTime(3, 2));
    REQUIRE(cover.size() == 2);
    CHECK(cover[0] == DyadicInterval{2, 1});
    CHECK(cover[1] == DyadicInterval{2, 2});

    // [1/8, 7/8] = [1/8,1/4] [1/4,1/2] [1/2,3/4] [3/4,7/8]
    cover = dyadic_cover(DyadicTime(1, 3), DyadicTime(7, 3));
    REQUIRE(cover.size() == 4);
    CHECK(cover[0] == DyadicInterval{3, 1});
    CHECK(cover[1] == DyadicInterval{2, 1});
    CHECK(cover[2] == DyadicInterval{2, 2});
    CHECK(cover[3] == DyadicInterval{3, 6});

    CHECK(is_aligned_interval(DyadicTime(1, 2), DyadicTime(1, 1)));
    CHECK_FALSE(is_aligned_interval(DyadicTime(1, 2), DyadicTime(3, 2)));
    CHECK_THROWS_AS(dyadic_cover(DyadicTime(1, 1), DyadicTime(1, 1)), InvalidArgument);
    CHECK_THROWS_AS(dyadic_cover(DyadicTime(1, 1), DyadicTime(3, 1)), InvalidArgument);
}

TEST_CASE("cover pieces tile the interval") {
    for (std::int64_t a = 0; a < 64; ++a)
        for (std::int64_t b = a + 1; b <= 64; b += 3) {
            const DyadicTime s(a, 6), t(b, 6);
            const auto cover = dyadic_cover(s, t);
            REQUIRE(!cover.empty());
            CHECK(cover.front().left() == s);
            CHECK(cover.back().right() == t);
            for (std::size_t i = 1; i < cover.size(); ++i) CHECK(cover[i - 1].right() == cover[i].left());
        }
}
