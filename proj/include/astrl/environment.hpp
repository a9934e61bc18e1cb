#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "astrl/action.hpp"
#include "astrl/graph_io.hpp"
#include "astrl/reward.hpp"
#include "astrl/task.hpp"

namespace astrl {

struct EnvConfig {
    bool use_masks = true;
    bool use_symmetry = true;
    /// Leave terminal evaluation to the caller (batched through evaluate_pool).
    bool defer_evaluation = false;
};

/// Maps a state to its similarity reward (+/- magnitude, or 0 when disabled).
using SimilarityFn = std::function<double(const CircuitGraph&)>;

struct StepInfo {
    bool action_applied = false;
    bool agent_terminated = false;
    bool structurally_complete = false;
    bool pending_evaluation = false;
    double similarity = 0.0;
    std::optional<SimResult> sim_result;
    std::optional<DomainReward> domain;
};

struct StepOutcome {
    CircuitGraph next_state;
    double reward = 0.0;
    bool done = false;
    StepInfo info;
};

class Environment {
public:
    explicit Environment(const TaskSpec& task, EnvConfig cfg = {}, SimilarityFn similarity = {})
        : task_(&task), cfg_(cfg), similarity_(std::move(similarity))
    {
        reset();
    }

    const CircuitGraph& reset()
    {
        check_task(*task_);
        state_ = task_->scaffold;
        steps_ = 0;
        done_ = false;
        refresh();
        return state_;
    }

    [[nodiscard]] const CircuitGraph& state() const { return state_; }
    [[nodiscard]] const TaskSpec& task() const { return *task_; }
    [[nodiscard]] const EnvConfig& config() const { return cfg_; }
    [[nodiscard]] int steps_taken() const { return steps_; }
    [[nodiscard]] bool done() const { return done_; }
    [[nodiscard]] bool at_step_limit() const { return steps_ >= task_->step_limit - 1; }

    /// Action legality for the current step (budget included).
    [[nodiscard]] ActionConfig action_config() const
    {
        ActionConfig c = task_->action_config();
        c.use_symmetry = cfg_.use_symmetry;
        c.steps_left = std::max(0, task_->step_limit - 1 - steps_);
        return c;
    }

    /// True when some construction is legal in the current state.
    [[nodiscard]] bool can_construct() const { return any_set(source_mask_); }

    /// Mask for head `head` given the already chosen prefix. With masking
    /// disabled every entry is permitted.
    [[nodiscard]] Mask head_mask(int head, const Action& prefix) const
    {
        const int n = state_.num_nodes();
        if (!cfg_.use_masks) {
            static constexpr std::array<int, kHeads> fixed{0, 0, kEdgeKinds, kModifiers, 2};
            int width = head == 0 ? n : head == 1 ? n + kNodeKinds : fixed[static_cast<std::size_t>(head)];
            return Mask(static_cast<std::size_t>(width), 1);
        }
        const auto ac = action_config();
        switch (head) {
        case 0: return source_mask_;
        case 1: return mask_target(state_, ac, prefix.source);
        case 2: return mask_edge_kind(state_, ac, prefix.source, prefix.target);
        case 3: return mask_addition_type(state_, ac, prefix.source, prefix.target, prefix.edge_kind);
        case 4: return mask_terminate(state_, ac, can_construct(), at_step_limit());
        default: throw Error(Errc::InvalidPrefix, "head " + std::to_string(head));
        }
    }

    /// Whether the construction heads are sampled at this step.
    [[nodiscard]] bool samples_construction() const { return !cfg_.use_masks || can_construct(); }

    StepOutcome step(const Action& a)
    {
        if (done_) throw Error(Errc::InvalidPrefix, "episode already finished");
        const auto ac = action_config();
        StepOutcome out;
        const bool dead_end = !can_construct();
        out.info.agent_terminated = a.terminate == 1;
        bool valid = true;
        if (a.terminate == 1) {
            out.next_state = state_;
            out.info.action_applied = true;
        } else {
            auto res = apply_action(state_, ac, a);
            valid = res.applied;
            out.info.action_applied = res.applied;
            out.next_state = std::move(res.state);
        }
        ++steps_;
        out.done = a.terminate == 1 || steps_ >= task_->step_limit || dead_end;
        out.info.similarity = similarity_ ? similarity_(out.next_state) : 0.0;

        std::optional<double> domain;
        if (out.done) {
            out.info.structurally_complete = validate_structure(out.next_state, task_->graph).complete;
            if (out.info.structurally_complete && cfg_.defer_evaluation) {
                out.info.pending_evaluation = true;
            } else {
                SimResult sim;
                if (out.info.structurally_complete) sim = evaluate_design(out.next_state, *task_);
                else sim = invalid_result("structurally incomplete");
                auto dr = aggregate_domain_reward(out.info.structurally_complete, sim, task_->specs, task_->reward);
                domain = dr.total;
                out.info.sim_result = std::move(sim);
                out.info.domain = std::move(dr);
            }
        }
        out.reward = total_step_reward(valid, out.info.similarity, domain, task_->reward);
        state_ = out.next_state;
        done_ = out.done;
        if (!done_) refresh();
        return out;
    }

    /// Domain term for a terminal state evaluated outside the environment.
    [[nodiscard]] DomainReward domain_reward(const SimResult& sim) const
    {
        return aggregate_domain_reward(true, sim, task_->specs, task_->reward);
    }

private:
    // The real source mask is kept even without masking: it also detects dead ends.
    void refresh() { source_mask_ = mask_source(state_, action_config()); }

    const TaskSpec* task_;
    EnvConfig cfg_;
    SimilarityFn similarity_;
    CircuitGraph state_;
    Mask source_mask_;
    int steps_ = 0;
    bool done_ = false;
};

// ---------------------------------------------------------------------------
// Rollouts
// ---------------------------------------------------------------------------

/// Per-step record. Masks are the ones actually used for sampling; heads
/// that were not sampled keep empty masks.
struct StepRecord {
    CircuitGraph state;
    Action action;
    MaskSet masks;
    std::array<double, kHeads> head_log_probs{};
    double log_prob = 0.0;
    double value = 0.0;
    double reward = 0.0;
    bool done = false;
    bool applied = false;
    int steps_left = 0;
};

struct Trajectory {
    std::uint64_t seed = 0;
    std::vector<StepRecord> steps;
    CircuitGraph final_state;
    bool agent_terminated = false;
    bool structurally_complete = false;
    bool pending_evaluation = false;
    std::optional<SimResult> sim_result;
    std::optional<DomainReward> domain;

    [[nodiscard]] double total_reward() const
    {
        double s = 0.0;
        for (const auto& st : steps) s += st.reward;
        return s;
    }
};

/// Anything that picks actions from an environment: the policy, a replayed
/// expert sequence, or a uniform sampler.
class ActionSampler {
public:
    virtual ~ActionSampler() = default;
    /// Fills `rec.action`, `rec.masks`, log-probs and value for the current state.
    virtual void choose(const Environment& env, std::mt19937_64& rng, StepRecord& rec) = 0;
};

/// Portable uniform draw in [0, 1).
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Samples index i with probability w[i] / sum(w) over permitted entries.
inline int sample_index(const std::vector<double>& probs, std::mt19937_64& rng)
{
    double u = uniform01(rng), acc = 0.0;
    int last = -1;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (probs[i] <= 0.0) continue;
        acc += probs[i];
        last = static_cast<int>(i);
        if (u < acc) return last;
    }
    if (last < 0) throw Error(Errc::AllMasked, "no permitted entry");
    return last;
}

/// Uniform over permitted entries of each head; useful as a baseline and in tests.
class UniformSampler : public ActionSampler {
public:
    void choose(const Environment& env, std::mt19937_64& rng, StepRecord& rec) override
    {
        Action a;
        auto pick = [&](const Mask& m) {
            std::vector<double> p(m.begin(), m.end());
            const double total = std::accumulate(p.begin(), p.end(), 0.0);
            if (total > 0.0)
                for (double& x : p) x /= total;
            return sample_index(p, rng);
        };
        if (env.samples_construction()) {
            rec.masks.source = env.head_mask(0, a);
            a.source = pick(rec.masks.source);
            rec.masks.target = env.head_mask(1, a);
            a.target = pick(rec.masks.target);
            rec.masks.edge = env.head_mask(2, a);
            a.edge_kind = pick(rec.masks.edge);
            rec.masks.addition = env.head_mask(3, a);
            a.addition_type = pick(rec.masks.addition);
        }
        rec.masks.terminate = env.head_mask(4, a);
        a.terminate = pick(rec.masks.terminate);
        rec.action = a;
    }
};

/// Plays back a fixed action list; ends with terminate when it runs out.
class ReplaySampler : public ActionSampler {
public:
    explicit ReplaySampler(std::vector<Action> actions) : actions_(std::move(actions)) {}
    void choose(const Environment&, std::mt19937_64&, StepRecord& rec) override
    {
        if (next_ < actions_.size()) rec.action = actions_[next_++];
        else rec.action = Action{-1, -1, -1, -1, 1};
    }

private:
    std::vector<Action> actions_;
    std::size_t next_ = 0;
};

/// One episode from reset to termination. Deterministic for a fixed seed
/// and sampler state.
inline Trajectory run_episode(Environment& env, ActionSampler& sampler, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    Trajectory traj;
    traj.seed = seed;
    env.reset();
    while (!env.done()) {
        StepRecord rec;
        rec.state = env.state();
        rec.steps_left = env.action_config().steps_left;
        sampler.choose(env, rng, rec);
        auto out = env.step(rec.action);
        rec.reward = out.reward;
        rec.done = out.done;
        rec.applied = out.info.action_applied;
        traj.steps.push_back(std::move(rec));
        if (out.done) {
            traj.final_state = std::move(out.next_state);
            traj.agent_terminated = out.info.agent_terminated;
            traj.structurally_complete = out.info.structurally_complete;
            traj.pending_evaluation = out.info.pending_evaluation;
            traj.sim_result = std::move(out.info.sim_result);
            traj.domain = std::move(out.info.domain);
        }
    }
    return traj;
}

/// Adds a deferred terminal evaluation to the last step's reward.
inline void complete_evaluation(Trajectory& traj, const Environment& env, SimResult sim)
{
    if (!traj.pending_evaluation || traj.steps.empty()) return;
    auto dr = env.domain_reward(sim);
    traj.steps.back().reward += dr.total;
    traj.sim_result = std::move(sim);
    traj.domain = std::move(dr);
    traj.pending_evaluation = false;
}

inline json action_trace(const Trajectory& traj)
{
    json out = json::array();
    for (std::size_t i = 0; i < traj.steps.size(); ++i) {
        const auto& s = traj.steps[i];
        out.push_back({{"step", i},
                       {"action", action_to_json(s.action)},
                       {"masks_summary",
                        {{"source", count_ones(s.masks.source)},
                         {"target", count_ones(s.masks.target)},
                         {"edge", count_ones(s.masks.edge)},
                         {"addition", count_ones(s.masks.addition)},
                         {"terminate", count_ones(s.masks.terminate)}}},
                       {"applied", s.applied}});
    }
    return out;
}

} // namespace astrl
