#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "astrl/reward.hpp"

using namespace astrl;

namespace {

PerfSpec spec(Objective o, double target, double bound = 0.0)
{
    PerfSpec s;
    s.key = "x";
    s.objective = o;
    s.target = target;
    s.bound = bound;
    return s;
}

SimResult measured(std::initializer_list<std::pair<const char*, double>> kv)
{
    SimResult r;
    r.sim_valid = true;
    for (auto [k, v] : kv) r.measurements[k] = {v, ""};
    return r;
}

} // namespace

TEST(Reward, DefaultConstants)
{
    const RewardConstants rc;
    EXPECT_EQ(rc.invalid_action, -2.0);
    EXPECT_EQ(rc.similarity, 1.0);
    EXPECT_EQ(rc.struct_invalid_terminal, -2.0);
    EXPECT_EQ(rc.sim_invalid_bonus, 3.0);
    EXPECT_EQ(rc.sim_valid_bonus, 30.0);
    EXPECT_EQ(rc.spec_weight, 15.0);
    EXPECT_EQ(rc.success_bonus, 10.0);
    EXPECT_EQ(rc.clamp_lo, -1.0);
    EXPECT_EQ(rc.clamp_hi, 1.0);
}

TEST(Reward, SpecBranches)
{
    const double p = 4.75e9;
    EXPECT_NEAR(spec_reward(p, spec(Objective::Match, p, 0.1 * p)), 1.0, 1e-12);
    EXPECT_NEAR(spec_reward(1.05 * p, spec(Objective::Match, p, 0.1 * p)), 0.5, 1e-12);
    EXPECT_NEAR(spec_reward(5.0 * p, spec(Objective::Match, p, 0.1 * p)), -1.0, 1e-12);
    EXPECT_NEAR(spec_reward(p, spec(Objective::Minimize, p)), 0.0, 1e-12);
    EXPECT_NEAR(spec_reward(2.0 * p, spec(Objective::Minimize, p)), -1.0, 1e-12);
    EXPECT_NEAR(spec_reward(0.5 * p, spec(Objective::Minimize, p)), 0.2, 1e-12);
    EXPECT_NEAR(spec_reward(3.0 * p, spec(Objective::Minimize, p)), -1.0, 1e-12);
    EXPECT_NEAR(spec_reward(10.0 * p, spec(Objective::Minimize, p)), -1.0, 1e-12);
    EXPECT_NEAR(spec_reward(p, spec(Objective::Maximize, p)), 0.0, 1e-12);
    EXPECT_NEAR(spec_reward(3.0 * p, spec(Objective::Maximize, p)), 0.5, 1e-12);
    EXPECT_THROW(spec_reward(std::nan(""), spec(Objective::Match, p, 1.0)), Error);
}

TEST(Reward, BranchMonotonicity)
{
    const double p = 2.0;
    double prev_match = 2.0, prev_min = 2.0, prev_max = -2.0;
    for (int i = 1; i < 600; ++i) {
        const double v = 0.01 * i;
        const double m = spec_reward(p + v * 0.1, spec(Objective::Match, p, 1.0));
        if (m > -1.0) EXPECT_LT(m, prev_match);
        prev_match = m;
        if (v < 3.0 * p) {
            const double mn = spec_reward(v, spec(Objective::Minimize, p));
            if (mn > -1.0) EXPECT_LT(mn, prev_min);
            prev_min = mn;
        }
        const double mx = spec_reward(v, spec(Objective::Maximize, p));
        EXPECT_GT(mx, prev_max);
        EXPECT_GT(mx, -1.0);
        EXPECT_LT(mx, 1.0);
        prev_max = mx;
    }
}

TEST(Reward, LiteralFormsAreSwitchable)
{
    RewardConstants lit;
    lit.literal_match = true;
    lit.literal_minimize = true;
    // signed error: overshoot by e/2 gives 1/2, undershoot is rewarded above 1 and clamped
    EXPECT_NEAR(spec_reward(1.5, spec(Objective::Match, 1.0, 1.0), lit), 0.5, 1e-12);
    EXPECT_NEAR(spec_reward(0.5, spec(Objective::Match, 1.0, 1.0), lit), 1.0, 1e-12);
    // past the pole the literal minimize branch is positive
    EXPECT_NEAR(spec_reward(5.0, spec(Objective::Minimize, 1.0), lit), 1.0, 1e-12);
}

TEST(Reward, DomainAggregation)
{
    const std::vector<PerfSpec> specs{[] {
                                          auto s = spec(Objective::Match, 1.0, 0.1);
                                          s.key = "f";
                                          return s;
                                      }(),
                                      [] {
                                          auto s = spec(Objective::Maximize, 10.0);
                                          s.key = "g";
                                          return s;
                                      }()};
    EXPECT_DOUBLE_EQ(aggregate_domain_reward(false, measured({}), specs).total, -2.0);
    SimResult bad;
    EXPECT_DOUBLE_EQ(aggregate_domain_reward(true, bad, specs).total, 3.0);

    // One spec on target, one far below: the second term takes the lower clamp.
    const double g_low = 1e-9;
    const double expect_low = 30.0 + 15.0 * 1.0 + 15.0 * std::max(-1.0, (g_low - 10.0) / (g_low + 10.0));
    const auto low = aggregate_domain_reward(true, measured({{"f", 1.0}, {"g", g_low}}), specs);
    EXPECT_NEAR(low.total, expect_low, 1e-12);
    EXPECT_FALSE(low.all_specs_met);

    const auto good = aggregate_domain_reward(true, measured({{"f", 1.0}, {"g", 30.0}}), specs);
    EXPECT_TRUE(good.all_specs_met);
    EXPECT_NEAR(good.total, 30.0 + 15.0 + 15.0 * 0.5 + 10.0, 1e-12);

    // missing measurement counts as the lower clamp and fails the spec
    const auto missing = aggregate_domain_reward(true, measured({{"f", 1.0}}), specs);
    EXPECT_NEAR(missing.total, 30.0 + 15.0 - 15.0, 1e-12);
}

TEST(Reward, AggregationIgnoresSpecOrder)
{
    std::vector<PerfSpec> specs;
    const char* keys[] = {"a", "b", "c", "d"};
    const Objective objs[] = {Objective::Match, Objective::Minimize, Objective::Maximize, Objective::Match};
    for (int i = 0; i < 4; ++i) {
        auto s = spec(objs[i], 1.0 + i, 0.3);
        s.key = keys[i];
        specs.push_back(s);
    }
    const auto sim = measured({{"a", 1.1}, {"b", 1.7}, {"c", 3.9}, {"d", 3.8}});
    const double ref = aggregate_domain_reward(true, sim, specs).total;
    std::sort(specs.begin(), specs.end(), [](const auto& x, const auto& y) { return x.key < y.key; });
    do {
        EXPECT_EQ(aggregate_domain_reward(true, sim, specs).total, ref);
    } while (std::next_permutation(specs.begin(), specs.end(),
                                   [](const auto& x, const auto& y) { return x.key < y.key; }));
}

TEST(Reward, SingleSpecSuccessScoresAtLeastForty)
{
    auto s = spec(Objective::Minimize, 1.0);
    s.key = "x";
    const auto r = aggregate_domain_reward(true, measured({{"x", 1.0}}), {s});
    EXPECT_TRUE(r.all_specs_met);
    EXPECT_GE(r.total, 40.0);
}

TEST(Reward, StepComposition)
{
    EXPECT_DOUBLE_EQ(total_step_reward(true, 1.0, std::nullopt), 1.0);
    EXPECT_DOUBLE_EQ(total_step_reward(false, -1.0, std::nullopt), -3.0);
    EXPECT_DOUBLE_EQ(total_step_reward(true, 1.0, 70.0), 71.0);
}
