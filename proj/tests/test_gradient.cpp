#include <gtest/gtest.h>

#include "gradcheck.hpp"

TEST(GradientCheck, SmallConfigAllParameters) {
    gradcheck::Setup s;
    const auto o = gradcheck::run(s, 20, 2024);
    EXPECT_LT(o.max_rel_error, 1e-4);
    EXPECT_EQ(o.checked, 20 * optimus::ModelParams<double>::zeros(s.config).size());
}

TEST(GradientCheck, ThreeStagesLargerContextOddSize) {
    gradcheck::Setup s;
    s.config = optimus::EncoderConfig::for_context(2, {3, 4, 3});
    s.edge = 9;
    s.batch = 2;
    EXPECT_LT(gradcheck::run(s, 3, 7).max_rel_error, 1e-4);
}

TEST(GradientCheck, FiveByFiveKernel) {
    gradcheck::Setup s;
    s.config = optimus::EncoderConfig::for_context(1, {3, 2});
    s.config.kernel = 5;
    s.edge = 7;
    EXPECT_LT(gradcheck::run(s, 3, 8).max_rel_error, 1e-4);
}
