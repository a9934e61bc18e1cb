#include <gtest/gtest.h>

#include <cmath>

#include "astrl/environment.hpp"
#include "astrl/expert.hpp"
#include "astrl/graph_io.hpp"
#include "astrl/task.hpp"
#include "fixtures.hpp"

using namespace astrl;

namespace {

TaskSpec ro_task() { return load_task(fixtures::data("tasks/ro_toy.json")); }

// Finishes the ro_toy scaffold into the bundled three-stage ring.
std::vector<Action> ring_actions(const TaskSpec& task)
{
    auto trajs = task_trajectories(task);
    for (auto& t : trajs)
        if (t.name == "ro3" || t.final_state.tag() == "ro3") {
            std::vector<Action> out;
            for (const auto& s : t.steps) out.push_back(s.action);
            return out;
        }
    return {};
}

} // namespace

TEST(Environment, ResetCopiesScaffold)
{
    const auto task = ro_task();
    Environment env(task);
    const auto first = graph_to_line(env.reset());
    const auto second = graph_to_line(env.reset());
    EXPECT_EQ(first, second);
    EXPECT_EQ(env.state(), task.scaffold);
    int transistors = 0;
    for (const auto& nd : env.state().nodes()) transistors += is_transistor(nd.kind);
    EXPECT_EQ(transistors, 3);
}

TEST(Environment, MalformedScaffoldRejected)
{
    auto task = ro_task();
    task.scaffold.add_edge_unchecked(4, 5, EdgeKind::Gate); // net-net short
    try {
        Environment env(task);
        FAIL() << "accepted a malformed scaffold";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::MalformedScaffold);
    }
}

TEST(Environment, InvalidActionPenalisedStateKept)
{
    const auto task = ro_task();
    EnvConfig ec;
    ec.use_masks = false;
    Environment env(task, ec, [](const CircuitGraph&) { return -1.0; });
    const auto before = env.state();
    const auto out = env.step({4, 5, index_of(EdgeKind::Gate), 0, 0});
    EXPECT_FALSE(out.info.action_applied);
    EXPECT_FALSE(out.done);
    EXPECT_EQ(out.next_state, before);
    EXPECT_DOUBLE_EQ(out.reward, -2.0 - 1.0);
}

TEST(Environment, TerminatingIncompleteDesignGetsStructuralPenalty)
{
    const auto task = ro_task();
    EnvConfig ec;
    ec.use_masks = false;
    Environment env(task, ec);
    const auto out = env.step({-1, -1, -1, -1, 1});
    EXPECT_TRUE(out.done);
    EXPECT_FALSE(out.info.structurally_complete);
    EXPECT_DOUBLE_EQ(out.reward, -2.0);
}

TEST(Environment, SpecMeetingRingEarnsFullDomainReward)
{
    const auto task = ro_task();
    const auto actions = ring_actions(task);
    ASSERT_FALSE(actions.empty());
    Environment env(task);
    ReplaySampler replay(actions);
    const auto traj = run_episode(env, replay, 0);
    ASSERT_TRUE(traj.sim_result && traj.sim_result->sim_valid);
    ASSERT_TRUE(traj.domain);
    // Three stages of 35 ps each: f = 1 / (6 * 35 ps), duty cycle exactly 50%.
    const double f = 1.0 / (6.0 * 35e-12), target = 4.75e9;
    const double expected = 30.0 + 15.0 * (1.0 - std::abs(f - target) / (0.1 * target)) + 15.0 + 10.0;
    EXPECT_TRUE(traj.domain->all_specs_met);
    EXPECT_NEAR(traj.steps.back().reward, expected, 1e-9);
    for (std::size_t i = 0; i + 1 < traj.steps.size(); ++i) EXPECT_DOUBLE_EQ(traj.steps[i].reward, 0.0);
    EXPECT_DOUBLE_EQ(traj.total_reward(), traj.steps.back().reward);
}

TEST(Environment, EpisodesAreDeterministic)
{
    const auto task = load_task(fixtures::data("tasks/ota_toy.json"));
    Environment env(task);
    UniformSampler a, b;
    const auto t1 = run_episode(env, a, 99), t2 = run_episode(env, b, 99);
    EXPECT_EQ(action_trace(t1).dump(), action_trace(t2).dump());
    EXPECT_EQ(graph_to_line(t1.final_state), graph_to_line(t2.final_state));
    EXPECT_DOUBLE_EQ(t1.total_reward(), t2.total_reward());
}

TEST(Environment, StepLimitOne)
{
    auto task = ro_task();
    task.step_limit = 1;
    Environment env(task);
    UniformSampler s;
    const auto t = run_episode(env, s, 1);
    ASSERT_EQ(t.steps.size(), 1u);
    EXPECT_TRUE(t.steps[0].done);
}

TEST(Environment, ReachableStatesStayPartiallyValid)
{
    // 10^4 steps of uniform masked play across the three tasks.
    int steps = 0;
    for (const char* name : {"ro_toy", "ota_toy", "comparator_stub"}) {
        const auto task = load_task(fixtures::data(std::string("tasks/") + name + ".json"));
        EnvConfig ec;
        ec.defer_evaluation = true;
        Environment env(task, ec);
        UniformSampler u;
        std::mt19937_64 seeds(3);
        while (steps < 3400 * (1 + (name[0] == 'o') + 2 * (name[0] == 'c'))) {
            const auto t = run_episode(env, u, seeds());
            for (const auto& s : t.steps) {
                const auto rep = validate_structure(s.state, task.graph);
                ASSERT_TRUE(rep.no_net_net && rep.no_component_component && rep.terminal_multiplicity_ok);
                ++steps;
            }
            if (t.agent_terminated) {
                EXPECT_TRUE(all_terminals_bound(t.final_state, task.graph));
            }
        }
    }
    EXPECT_GE(steps, 10000);
}

TEST(Environment, TerminatedEpisodesWithoutMasksStillEnd)
{
    const auto task = ro_task();
    EnvConfig ec;
    ec.use_masks = false;
    Environment env(task, ec);
    UniformSampler u;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto t = run_episode(env, u, seed);
        EXPECT_LE(static_cast<int>(t.steps.size()), task.step_limit);
        EXPECT_TRUE(t.steps.back().done);
    }
}
