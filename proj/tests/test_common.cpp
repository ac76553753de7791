#include <gtest/gtest.h>

#include <set>

#include "common.hpp"

using optimus::Rect;

TEST(Rect, IntersectionIsHalfOpen) {
    const Rect a{0, 0, 16, 16};
    EXPECT_TRUE(a.intersects({15, 15, 1, 1}));
    EXPECT_FALSE(a.intersects({16, 0, 4, 4}));
    EXPECT_FALSE(a.intersects({0, 16, 4, 4}));
    EXPECT_TRUE(a.contains(0, 0));
    EXPECT_FALSE(a.contains(16, 3));
}

TEST(Rect, FitsIn) {
    EXPECT_TRUE((Rect{0, 0, 64, 64}).fits_in(64, 64));
    EXPECT_FALSE((Rect{1, 0, 64, 64}).fits_in(64, 64));
    EXPECT_FALSE((Rect{0, 0, 0, 4}).fits_in(64, 64));
    EXPECT_FALSE((Rect{-1, 0, 4, 4}).fits_in(64, 64));
}

TEST(DeriveSeed, DistinctStreamsAndStable) {
    std::set<std::uint64_t> seen;
    for (std::uint64_t s = 0; s < 1000; ++s)
        seen.insert(optimus::derive_seed(42, s));
    EXPECT_EQ(seen.size(), 1000u);
    EXPECT_EQ(optimus::derive_seed(7, 3), optimus::derive_seed(7, 3));
    EXPECT_NE(optimus::derive_seed(7, 3), optimus::derive_seed(8, 3));
}
