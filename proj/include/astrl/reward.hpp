#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "astrl/error.hpp"
#include "astrl/evaluators.hpp"

namespace astrl {

struct RewardConstants {
    double invalid_action = -2.0;
    double similarity = 1.0; // magnitude; sign from the discriminator
    double struct_invalid_terminal = -2.0;
    double sim_invalid_bonus = 3.0;
    double sim_valid_bonus = 30.0;
    double spec_weight = 15.0;
    double success_bonus = 10.0;
    double clamp_lo = -1.0;
    double clamp_hi = 1.0;
    // Literal forms of the match / minimize branches (signed error, pole at 3p).
    bool literal_match = false;
    bool literal_minimize = false;
};

enum class Objective { Match, Minimize, Maximize };

struct PerfSpec {
    std::string key;
    Objective objective = Objective::Match;
    double target = 0.0;
    double bound = 0.0; // allowed error for Match
    std::optional<double> weight; // defaults to RewardConstants::spec_weight
    std::string unit;
};

inline Objective objective_from_string(const std::string& s)
{
    if (s == "match") return Objective::Match;
    if (s == "minimize") return Objective::Minimize;
    if (s == "maximize") return Objective::Maximize;
    throw Error(Errc::Config, "unknown objective '" + s + "'");
}

inline void validate_spec(const PerfSpec& s)
{
    if (s.objective == Objective::Match && !(s.bound > 0.0))
        throw Error(Errc::Config, "spec '" + s.key + "': match needs a positive bound");
    if (s.objective != Objective::Match && !(s.target > 0.0))
        throw Error(Errc::Config, "spec '" + s.key + "': min/max targets must be positive");
}

/// Per-specification reward, clamped to [clamp_lo, clamp_hi].
///   match:    1 - |v - p| / e
///   minimize: (v - p) / (v - 3p) for v < 3p, else the lower clamp
///   maximize: (v - p) / (v + p)
inline double spec_reward(double v, const PerfSpec& spec, const RewardConstants& rc = {})
{
    if (!std::isfinite(v)) throw Error(Errc::NonFiniteMeasurement, spec.key);
    const double p = spec.target;
    double r = 0.0;
    switch (spec.objective) {
    case Objective::Match:
        r = 1.0 - (rc.literal_match ? (v - p) : std::abs(v - p)) / spec.bound;
        break;
    case Objective::Minimize:
        if (!rc.literal_minimize && v >= 3.0 * p) r = rc.clamp_lo;
        else if (v == 3.0 * p) r = rc.clamp_hi; // literal form at its pole
        else r = (v - p) / (v - 3.0 * p);
        break;
    case Objective::Maximize:
        r = (v + p) == 0.0 ? rc.clamp_lo : (v - p) / (v + p);
        break;
    }
    return std::clamp(r, rc.clamp_lo, rc.clamp_hi);
}

/// Raw constraint check used for the success bonus and fulfillment metrics.
inline bool spec_met(double v, const PerfSpec& spec)
{
    if (!std::isfinite(v)) return false;
    switch (spec.objective) {
    case Objective::Match: return std::abs(v - spec.target) <= spec.bound;
    case Objective::Minimize: return v <= spec.target;
    case Objective::Maximize: return v >= spec.target;
    }
    return false;
}

struct DomainReward {
    double total = 0.0;
    bool structurally_valid = false;
    bool sim_valid = false;
    bool all_specs_met = false;
    std::vector<double> spec_rewards; // in spec-list order
};

/// Terminal reward: -2 for structurally invalid designs, +3 when the design
/// cannot be simulated, else +30 + sum_p w_p r_p (+10 when every spec is met).
inline DomainReward aggregate_domain_reward(bool structurally_valid, const SimResult& result,
                                            const std::vector<PerfSpec>& specs, const RewardConstants& rc = {})
{
    DomainReward out;
    out.structurally_valid = structurally_valid;
    if (!structurally_valid) {
        out.total = rc.struct_invalid_terminal;
        return out;
    }
    if (!result.sim_valid) {
        out.total = rc.sim_invalid_bonus;
        return out;
    }
    out.sim_valid = true;
    out.all_specs_met = true;
    std::vector<double> terms;
    for (const auto& s : specs) {
        auto v = result.get(s.key);
        double r = rc.clamp_lo;
        if (v && std::isfinite(*v)) r = spec_reward(*v, s, rc);
        if (!v || !spec_met(*v, s)) out.all_specs_met = false;
        out.spec_rewards.push_back(r);
        terms.push_back(s.weight.value_or(rc.spec_weight) * r);
    }
    // Summation order fixed by value so the result ignores spec-list order.
    std::sort(terms.begin(), terms.end());
    double opt = 0.0;
    for (double t : terms) opt += t;
    out.total = rc.sim_valid_bonus + opt + (out.all_specs_met ? rc.success_bonus : 0.0);
    return out;
}

/// r = r_validity + r_similarity + r_domain; an absent domain term is 0.
inline double total_step_reward(bool action_valid, double similarity_score, std::optional<double> domain,
                                const RewardConstants& rc = {})
{
    return (action_valid ? 0.0 : rc.invalid_action) + similarity_score + domain.value_or(0.0);
}

} // namespace astrl
