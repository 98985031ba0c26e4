#include <gtest/gtest.h>

#include <set>

#include "m2r/gradient_suite.hpp"

using namespace m2r;

TEST(GradientSuite, NamesAreUnique) {
    const auto names = gradient_check_names();
    EXPECT_EQ(std::set<std::string>(names.begin(), names.end()).size(), names.size());
    EXPECT_GE(names.size(), 30u);
}

TEST(GradientSuite, FewTrialsOfEveryCheckPass) {
    GradientSuiteOptions o;
    o.trials = 2;
    o.seed = 11;
    const auto r = run_gradient_suite(o);
    EXPECT_EQ(r.checks.size(), gradient_check_names().size());
    for (const auto& c : r.checks) {
        EXPECT_TRUE(c.passed) << c.name << " " << c.max_relative_error;
        EXPECT_GT(c.checked, 0u) << c.name;
    }
    EXPECT_LT(r.max_relative_error, 1e-4);
}

TEST(GradientSuite, FilterSelectsSubset) {
    GradientSuiteOptions o;
    o.trials = 1;
    o.filter = "ndam";
    const auto r = run_gradient_suite(o);
    ASSERT_FALSE(r.checks.empty());
    for (const auto& c : r.checks) EXPECT_NE(c.name.find("ndam"), std::string::npos);
}
