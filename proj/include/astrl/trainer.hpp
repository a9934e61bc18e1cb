#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "astrl/environment.hpp"
#include "astrl/expert.hpp"
#include "astrl/external.hpp"
#include "astrl/netlist.hpp"
#include "astrl/policy.hpp"

namespace astrl {

struct TrainConfig {
    // PPO
    double clip = 0.2;
    double entropy_coef = 0.01;
    double gamma = 0.99;
    double gae_lambda = 0.95;
    double value_coef = 0.5;
    double value_clip = 5.0;
    double max_grad_norm = 0.5;
    double lr = 3e-5;
    double target_kl = 0.02; // epochs stop early past 1.5x this; 0 disables
    double adv_scale_floor = 1.0; // advantages are divided by max(std, this)
    int epochs = 4;
    int minibatches = 4;
    int episodes_per_batch = 64;
    int iterations = 200;
    // BC weight lambda0 * lambda1^k, k = completed core-phase updates
    double bc_weight = 1.0;
    double bc_decay = 0.97;
    int bc_batch = 64;
    // pretraining and discriminator
    int pretrain_epochs = 200;
    double pretrain_lr = 1e-3;
    int disc_epochs = 30;
    double disc_lr = 1e-3;
    int disc_samples = 256;      // per class
    // ablations
    bool use_disc = true;
    bool use_bc = true;
    bool use_masks = true;
    bool use_symmetry = true;
    int max_parallel = 16;
    int checkpoint_every = 10;
    std::uint64_t seed = 1;

    void validate() const
    {
        auto bad = [](const std::string& what) { throw Error(Errc::Config, what); };
        if (!(clip > 0.0 && clip < 1.0)) bad("clip must lie in (0, 1)");
        if (!(bc_decay > 0.0 && bc_decay <= 1.0)) bad("bc_decay must lie in (0, 1]");
        if (bc_weight < 0.0) bad("bc_weight must be non-negative");
        if (!(gamma > 0.0 && gamma <= 1.0) || !(gae_lambda >= 0.0 && gae_lambda <= 1.0)) bad("gamma / gae_lambda");
        if (!(lr > 0.0) || !(pretrain_lr > 0.0) || !(disc_lr > 0.0)) bad("learning rates must be positive");
        if (epochs < 1 || minibatches < 1 || episodes_per_batch < 1 || iterations < 0) bad("batch sizes");
        if (target_kl < 0.0) bad("target_kl must be non-negative");
        if (!(adv_scale_floor > 0.0)) bad("adv_scale_floor must be positive");
        if (entropy_coef < 0.0 || value_coef < 0.0 || value_clip <= 0.0 || max_grad_norm <= 0.0) bad("loss weights");
    }

    [[nodiscard]] json to_json() const
    {
        return {{"clip", clip},
                {"entropy_coef", entropy_coef},
                {"gamma", gamma},
                {"gae_lambda", gae_lambda},
                {"value_coef", value_coef},
                {"value_clip", value_clip},
                {"max_grad_norm", max_grad_norm},
                {"lr", lr},
                {"target_kl", target_kl},
                {"adv_scale_floor", adv_scale_floor},
                {"epochs", epochs},
                {"minibatches", minibatches},
                {"episodes_per_batch", episodes_per_batch},
                {"iterations", iterations},
                {"bc_weight", bc_weight},
                {"bc_decay", bc_decay},
                {"bc_batch", bc_batch},
                {"pretrain_epochs", pretrain_epochs},
                {"pretrain_lr", pretrain_lr},
                {"disc_epochs", disc_epochs},
                {"disc_lr", disc_lr},
                {"disc_samples", disc_samples},
                {"use_disc", use_disc},
                {"use_bc", use_bc},
                {"use_masks", use_masks},
                {"use_symmetry", use_symmetry},
                {"max_parallel", max_parallel},
                {"checkpoint_every", checkpoint_every},
                {"seed", seed}};
    }

    [[nodiscard]] double bc_coefficient(int k) const
    {
        return use_bc ? bc_weight * std::pow(bc_decay, k) : 0.0;
    }
};

/// Overrides any field present in `j`.
inline TrainConfig train_config_from_json(const json& j, TrainConfig c = {})
{
    try {
        c.clip = j.value("clip", c.clip);
        c.entropy_coef = j.value("entropy_coef", c.entropy_coef);
        c.gamma = j.value("gamma", c.gamma);
        c.gae_lambda = j.value("gae_lambda", c.gae_lambda);
        c.value_coef = j.value("value_coef", c.value_coef);
        c.value_clip = j.value("value_clip", c.value_clip);
        c.max_grad_norm = j.value("max_grad_norm", c.max_grad_norm);
        c.lr = j.value("lr", c.lr);
        c.target_kl = j.value("target_kl", c.target_kl);
        c.adv_scale_floor = j.value("adv_scale_floor", c.adv_scale_floor);
        c.epochs = j.value("epochs", c.epochs);
        c.minibatches = j.value("minibatches", c.minibatches);
        c.episodes_per_batch = j.value("episodes_per_batch", c.episodes_per_batch);
        c.iterations = j.value("iterations", c.iterations);
        c.bc_weight = j.value("bc_weight", c.bc_weight);
        c.bc_decay = j.value("bc_decay", c.bc_decay);
        c.bc_batch = j.value("bc_batch", c.bc_batch);
        c.pretrain_epochs = j.value("pretrain_epochs", c.pretrain_epochs);
        c.pretrain_lr = j.value("pretrain_lr", c.pretrain_lr);
        c.disc_epochs = j.value("disc_epochs", c.disc_epochs);
        c.disc_lr = j.value("disc_lr", c.disc_lr);
        c.disc_samples = j.value("disc_samples", c.disc_samples);
        c.use_disc = j.value("use_disc", c.use_disc);
        c.use_bc = j.value("use_bc", c.use_bc);
        c.use_masks = j.value("use_masks", c.use_masks);
        c.use_symmetry = j.value("use_symmetry", c.use_symmetry);
        c.max_parallel = j.value("max_parallel", c.max_parallel);
        c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
        c.seed = j.value("seed", c.seed);
    } catch (const json::exception& ex) {
        throw Error(Errc::Config, std::string("train config: ") + ex.what());
    }
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// Optimiser
// ---------------------------------------------------------------------------

class Adam {
public:
    explicit Adam(std::vector<ad::Param*> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8)
        : params_(std::move(params)), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps)
    {
        for (auto* p : params_) {
            m_.push_back(ad::Mat::Zero(p->value.rows(), p->value.cols()));
            v_.push_back(ad::Mat::Zero(p->value.rows(), p->value.cols()));
        }
    }

    void zero_grad()
    {
        for (auto* p : params_) p->zero_grad();
    }

    /// Scales gradients so their global norm is at most `max_norm`; returns the
    /// norm before scaling.
    double clip_grad_norm(double max_norm)
    {
        double sq = 0.0;
        for (auto* p : params_)
            if (p->grad.size()) sq += p->grad.squaredNorm();
        const double norm = std::sqrt(sq);
        if (norm > max_norm && norm > 0.0)
            for (auto* p : params_)
                if (p->grad.size()) p->grad *= max_norm / norm;
        return norm;
    }

    void step()
    {
        ++t_;
        const double c1 = 1.0 - std::pow(b1_, t_), c2 = 1.0 - std::pow(b2_, t_);
        for (std::size_t i = 0; i < params_.size(); ++i) {
            auto* p = params_[i];
            if (p->grad.size() == 0) continue;
            m_[i] = b1_ * m_[i] + (1.0 - b1_) * p->grad;
            v_[i] = b2_ * v_[i] + (1.0 - b2_) * p->grad.cwiseProduct(p->grad);
            p->value.array() -= lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
        }
    }

    [[nodiscard]] const std::vector<ad::Param*>& params() const { return params_; }

private:
    std::vector<ad::Param*> params_;
    double lr_, b1_, b2_, eps_;
    std::vector<ad::Mat> m_, v_;
    int t_ = 0;
};

// ---------------------------------------------------------------------------
// Advantages and losses
// ---------------------------------------------------------------------------

struct AdvantageEstimate {
    std::vector<double> advantages;
    std::vector<double> returns; // value targets
};

/// GAE over one finished episode; the last step is terminal.
inline AdvantageEstimate compute_advantages(const std::vector<double>& rewards, const std::vector<double>& values,
                                            double gamma, double lambda)
{
    const std::size_t n = rewards.size();
    AdvantageEstimate out;
    out.advantages.assign(n, 0.0);
    out.returns.assign(n, 0.0);
    double running = 0.0;
    for (std::size_t i = n; i-- > 0;) {
        const double next_v = i + 1 < n ? values[i + 1] : 0.0;
        const double delta = rewards[i] + gamma * next_v - values[i];
        running = delta + gamma * lambda * running;
        out.advantages[i] = running;
        out.returns[i] = running + values[i];
    }
    return out;
}

inline AdvantageEstimate compute_advantages(const Trajectory& traj, const TrainConfig& cfg)
{
    std::vector<double> r, v;
    for (const auto& s : traj.steps) {
        r.push_back(s.reward);
        v.push_back(s.value);
    }
    return compute_advantages(r, v, cfg.gamma, cfg.gae_lambda);
}

/// Zero mean; divided by the standard deviation, but never by less than
/// `floor`. A batch whose returns barely differ would otherwise turn noise
/// into unit-sized advantages.
inline void normalize(std::vector<double>& xs, double floor = 1e-8)
{
    if (xs.empty()) return;
    const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= static_cast<double>(xs.size());
    const double sd = std::sqrt(var);
    const double scale = std::max(sd, floor);
    for (double& x : xs) x = (x - mean) / scale;
}

/// One step of on-policy data with everything the PPO loss needs.
struct PpoSample {
    const CircuitGraph* state = nullptr;
    Action action;
    const MaskSet* masks = nullptr;
    double old_log_prob = 0.0;
    double old_value = 0.0;
    double advantage = 0.0;
    double ret = 0.0;
};

struct LossStats {
    double policy = 0.0;
    double value = 0.0;
    double entropy = 0.0;
    double bc = 0.0;
    double approx_kl = 0.0;
    double clip_fraction = 0.0;
    double total = 0.0;
};

namespace detail {

inline double sum_col(const ad::Tape& t, const std::array<ad::Tape::Var, kHeads>& heads, int col)
{
    double s = 0.0;
    for (auto v : heads)
        if (v >= 0) s += t.value(v)(0, col);
    return s;
}

inline void seed_heads(std::vector<std::pair<ad::Tape::Var, ad::Mat>>& seeds,
                       const std::array<ad::Tape::Var, kHeads>& heads, double d_logp, double d_entropy)
{
    for (auto v : heads)
        if (v >= 0) {
            ad::Mat g(1, 2);
            g << d_logp, d_entropy;
            seeds.emplace_back(v, g);
        }
}

} // namespace detail

/// Clipped surrogate with entropy bonus and clipped value loss, averaged over
/// the samples and negated for descent. Gradients are added to the policy
/// parameters' grad fields when `accumulate` is set.
inline double ppo_loss(const PolicyNet& net, const std::vector<PpoSample>& batch, const TrainConfig& cfg,
                       bool accumulate = true, LossStats* stats = nullptr)
{
    if (batch.empty()) return 0.0;
    const double inv = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;
    LossStats st;
    for (const auto& s : batch) {
        ad::Tape t;
        const auto terms = net.step_terms(t, *s.state, s.action, *s.masks);
        const double logp = detail::sum_col(t, terms.heads, 0);
        const double ent = detail::sum_col(t, terms.heads, 1);
        const double ratio = std::exp(logp - s.old_log_prob);
        const double a = s.advantage;
        const double clipped = std::clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip);
        const double surr1 = ratio * a, surr2 = clipped * a;
        const double obj = std::min(surr1, surr2);
        // d obj / d logp: the clipped branch is constant outside the band
        const bool inside = ratio >= 1.0 - cfg.clip && ratio <= 1.0 + cfg.clip;
        const double d_obj = (inside || surr1 <= surr2) ? ratio * a : 0.0;

        const double v = t.scalar(terms.value);
        const double v_clip = s.old_value + std::clamp(v - s.old_value, -cfg.value_clip, cfg.value_clip);
        const double l1 = (v - s.ret) * (v - s.ret), l2 = (v_clip - s.ret) * (v_clip - s.ret);
        const double vloss = 0.5 * std::max(l1, l2);
        const bool v_inside = std::abs(v - s.old_value) <= cfg.value_clip;
        const double d_v = l1 >= l2 ? (v - s.ret) : (v_inside ? (v_clip - s.ret) : 0.0);

        total += inv * (-obj - cfg.entropy_coef * ent + cfg.value_coef * vloss);
        st.policy += inv * -obj;
        st.value += inv * vloss;
        st.entropy += inv * ent;
        st.approx_kl += inv * ((ratio - 1.0) - (logp - s.old_log_prob)); // non-negative estimator
        st.clip_fraction += inv * (inside ? 0.0 : 1.0);
        if (accumulate) {
            std::vector<std::pair<ad::Tape::Var, ad::Mat>> seeds;
            detail::seed_heads(seeds, terms.heads, -inv * d_obj, -inv * cfg.entropy_coef);
            seeds.emplace_back(terms.value, ad::Mat::Constant(1, 1, inv * cfg.value_coef * d_v));
            t.backward(seeds);
        }
    }
    st.total = total;
    if (stats) *stats = st;
    return total;
}

/// Negative mean joint log-prob of expert actions, times `weight`. Masked
/// expert actions abort: they mean the dataset and the masks disagree.
inline double bc_loss(const PolicyNet& net, const std::vector<const ExpertSample*>& batch, double weight = 1.0,
                      bool accumulate = true)
{
    if (batch.empty()) return 0.0;
    const double inv = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;
    for (const auto* s : batch) {
        if (!mask_feasible(s->masks, s->action))
            throw Error(Errc::InfeasibleExpertAction, "expert action is masked out");
        ad::Tape t;
        const auto terms = net.step_terms(t, s->state, s->action, s->masks);
        total -= inv * detail::sum_col(t, terms.heads, 0);
        if (accumulate && weight != 0.0) {
            std::vector<std::pair<ad::Tape::Var, ad::Mat>> seeds;
            detail::seed_heads(seeds, terms.heads, -inv * weight, 0.0);
            t.backward(seeds);
        }
    }
    return weight * total;
}

inline std::vector<const ExpertSample*> all_of(const std::vector<ExpertSample>& xs)
{
    std::vector<const ExpertSample*> out;
    for (const auto& x : xs) out.push_back(&x);
    return out;
}

/// Binary cross-entropy of the discriminator on labelled graphs (1 = expert).
inline double discriminator_loss(const PolicyNet& net, const std::vector<const CircuitGraph*>& graphs,
                                 const std::vector<int>& labels, bool accumulate = true)
{
    if (graphs.empty()) return 0.0;
    const double inv = 1.0 / static_cast<double>(graphs.size());
    double total = 0.0;
    for (std::size_t i = 0; i < graphs.size(); ++i) {
        ad::Tape t;
        const auto z = net.disc_logit_var(t, *graphs[i]);
        const double x = t.scalar(z);
        const double y = labels[i];
        // log(1 + e^-|x|) + max(x, 0) - x y, stable in both tails
        total += inv * (std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x))));
        if (accumulate) {
            const double p = 1.0 / (1.0 + std::exp(-x));
            t.backward({{z, ad::Mat::Constant(1, 1, inv * (p - y))}});
        }
    }
    return total;
}

// ---------------------------------------------------------------------------
// Behavioural cloning
// ---------------------------------------------------------------------------

/// Greedy post-state agreement: the chosen action counts as correct when it
/// leads to the same canonical state as the expert's (mirror-equivalent
/// choices are not penalised).
inline double bc_accuracy(const PolicyNet& net, const std::vector<ExpertSample>& samples, const ActionConfig& cfg)
{
    if (samples.empty()) return 0.0;
    int hits = 0;
    std::mt19937_64 rng(0);
    for (const auto& s : samples) {
        ActionConfig ac = cfg;
        ac.steps_left = s.steps_left;
        const bool at_limit = s.at_step_limit;
        const bool can = any_set(mask_source(s.state, ac));
        auto mask_of = [&](int h, const Action& a) -> Mask {
            switch (h) {
            case 0: return mask_source(s.state, ac);
            case 1: return mask_target(s.state, ac, a.source);
            case 2: return mask_edge_kind(s.state, ac, a.source, a.target);
            case 3: return mask_addition_type(s.state, ac, a.source, a.target, a.edge_kind);
            default: return mask_terminate(s.state, ac, can, at_limit);
            }
        };
        const Action a = net.act(s.state, mask_of, rng, true);
        std::uint64_t h;
        if (a.terminate == 1) h = hash_mix(canonical_hash(s.state), 1);
        else h = canonical_hash(apply_action(s.state, ac, a).state);
        hits += h == s.post_hash;
    }
    return static_cast<double>(hits) / static_cast<double>(samples.size());
}

struct PretrainReport {
    int samples = 0;
    int epochs = 0;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    double accuracy = 0.0;
    std::vector<double> loss_curve;
};

/// Pure BC over a sample set with Adam; shuffled minibatches of `batch`.
inline PretrainReport pretrain_bc(PolicyNet& net, const std::vector<ExpertSample>& samples, const TrainConfig& cfg,
                                  const ActionConfig& ac, int batch = 32,
                                  const std::function<void(int, double)>& on_epoch = {})
{
    PretrainReport rep;
    rep.samples = static_cast<int>(samples.size());
    if (samples.empty()) return rep;
    Adam opt(net.policy_params(), cfg.pretrain_lr);
    std::mt19937_64 rng(cfg.seed ^ 0x5bd1e995ULL);
    auto ptrs = all_of(samples);
    rep.initial_loss = bc_loss(net, ptrs, 1.0, false);
    for (int ep = 0; ep < cfg.pretrain_epochs; ++ep) {
        std::shuffle(ptrs.begin(), ptrs.end(), rng);
        for (std::size_t i = 0; i < ptrs.size(); i += static_cast<std::size_t>(batch)) {
            std::vector<const ExpertSample*> mb(ptrs.begin() + static_cast<std::ptrdiff_t>(i),
                                               ptrs.begin() + static_cast<std::ptrdiff_t>(std::min(ptrs.size(), i + batch)));
            opt.zero_grad();
            bc_loss(net, mb, 1.0, true);
            opt.clip_grad_norm(cfg.max_grad_norm * 10.0);
            opt.step();
        }
        const double l = bc_loss(net, all_of(samples), 1.0, false);
        rep.loss_curve.push_back(l);
        if (on_epoch) on_epoch(ep, l);
        ++rep.epochs;
    }
    rep.final_loss = rep.loss_curve.empty() ? rep.initial_loss : rep.loss_curve.back();
    rep.accuracy = bc_accuracy(net, samples, ac);
    return rep;
}

// ---------------------------------------------------------------------------
// Discriminator
// ---------------------------------------------------------------------------

struct DiscriminatorReport {
    int positives = 0;
    int negatives = 0;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    double accuracy = 0.0;
};

inline double discriminator_accuracy(const PolicyNet& net, const std::vector<CircuitGraph>& pos,
                                     const std::vector<CircuitGraph>& neg)
{
    int hits = 0;
    for (const auto& g : pos) hits += net.discriminate(g) >= 0.5;
    for (const auto& g : neg) hits += net.discriminate(g) < 0.5;
    const auto total = pos.size() + neg.size();
    return total ? static_cast<double>(hits) / static_cast<double>(total) : 0.0;
}

/// Trains only the discriminator group; the policy is untouched.
inline DiscriminatorReport train_discriminator(PolicyNet& net, const std::vector<CircuitGraph>& positives,
                                               const std::vector<CircuitGraph>& negatives, const TrainConfig& cfg,
                                               int batch = 32)
{
    if (positives.empty() || negatives.empty())
        throw Error(Errc::DegenerateClasses, "discriminator needs both positive and negative examples");
    DiscriminatorReport rep;
    rep.positives = static_cast<int>(positives.size());
    rep.negatives = static_cast<int>(negatives.size());
    std::vector<const CircuitGraph*> graphs;
    std::vector<int> labels;
    for (const auto& g : positives) { graphs.push_back(&g); labels.push_back(1); }
    for (const auto& g : negatives) { graphs.push_back(&g); labels.push_back(0); }
    rep.initial_loss = discriminator_loss(net, graphs, labels, false);
    Adam opt(net.discriminator_params(), cfg.disc_lr);
    std::mt19937_64 rng(cfg.seed ^ 0xd15cULL);
    std::vector<std::size_t> order(graphs.size());
    std::iota(order.begin(), order.end(), 0);
    for (int ep = 0; ep < cfg.disc_epochs; ++ep) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(batch)) {
            std::vector<const CircuitGraph*> g;
            std::vector<int> y;
            for (std::size_t k = i; k < std::min(order.size(), i + batch); ++k) {
                g.push_back(graphs[order[k]]);
                y.push_back(labels[order[k]]);
            }
            opt.zero_grad();
            discriminator_loss(net, g, y, true);
            opt.clip_grad_norm(cfg.max_grad_norm * 10.0);
            opt.step();
        }
    }
    rep.final_loss = discriminator_loss(net, graphs, labels, false);
    rep.accuracy = discriminator_accuracy(net, positives, negatives);
    return rep;
}

/// Frozen discriminator as a per-step similarity reward, cached by canonical
/// hash. Thread-safe only for sequential use.
class SimilarityOracle {
public:
    SimilarityOracle(const PolicyNet& net, double magnitude) : net_(&net), magnitude_(magnitude) {}

    double operator()(const CircuitGraph& g)
    {
        const auto h = canonical_hash(g);
        if (auto it = cache_.find(h); it != cache_.end()) return it->second;
        const double r = net_->discriminate(g) >= 0.5 ? magnitude_ : -magnitude_;
        cache_.emplace(h, r);
        return r;
    }

private:
    const PolicyNet* net_;
    double magnitude_;
    std::unordered_map<std::uint64_t, double> cache_;
};

// ---------------------------------------------------------------------------
// Rollouts
// ---------------------------------------------------------------------------

struct DesignRecord {
    CircuitGraph graph;
    bool netlist_valid = false;
    bool structurally_complete = false;
    SimResult sim;
    bool spec_met = false;
    double episode_return = 0.0;
};

struct RolloutBatch {
    std::vector<Trajectory> trajectories;
    std::vector<DesignRecord> designs;
};

/// Netlists re-parse to the same canonical graph.
inline bool netlist_round_trips(const CircuitGraph& g, const GraphConfig& cfg)
{
    try {
        const auto text = emit_netlist(g, cfg);
        return canonical_hash(parse_netlist(text, cfg)) == canonical_hash(g);
    } catch (const Error&) {
        return false;
    }
}

/// Runs `episodes` policy rollouts; terminal evaluations go through the pool.
inline RolloutBatch collect_rollouts(const PolicyNet& net, const TaskSpec& task, const TrainConfig& cfg,
                                     const SimilarityFn& similarity, int episodes, std::uint64_t seed,
                                     bool greedy = false)
{
    EnvConfig ec;
    ec.use_masks = cfg.use_masks;
    ec.use_symmetry = cfg.use_symmetry;
    ec.defer_evaluation = true;
    Environment env(task, ec, similarity);
    PolicySampler sampler(net, greedy);
    std::mt19937_64 seeds(seed);
    RolloutBatch b;
    for (int i = 0; i < episodes; ++i) b.trajectories.push_back(run_episode(env, sampler, seeds()));

    std::vector<std::function<SimResult()>> jobs;
    std::vector<std::size_t> pending;
    for (std::size_t i = 0; i < b.trajectories.size(); ++i)
        if (b.trajectories[i].pending_evaluation) {
            const CircuitGraph* g = &b.trajectories[i].final_state;
            jobs.push_back([g, &task] { return evaluate_design(*g, task); });
            pending.push_back(i);
        }
    auto results = evaluate_pool(jobs, cfg.max_parallel);
    for (std::size_t k = 0; k < pending.size(); ++k) complete_evaluation(b.trajectories[pending[k]], env, results[k]);

    for (const auto& t : b.trajectories) {
        DesignRecord d;
        d.graph = t.final_state;
        d.structurally_complete = t.structurally_complete;
        d.netlist_valid = netlist_round_trips(t.final_state, task.graph);
        d.sim = t.sim_result.value_or(invalid_result("not evaluated"));
        d.spec_met = t.domain && t.domain->all_specs_met;
        d.episode_return = t.total_reward();
        b.designs.push_back(std::move(d));
    }
    return b;
}

// ---------------------------------------------------------------------------
// Metrics of one iteration
// ---------------------------------------------------------------------------

struct SpecStats {
    double mean = std::nan("");
    double variance = std::nan("");
    double mean_abs_error = std::nan(""); // |value - target| over sim-valid designs
    int count = 0;
};

struct IterationMetrics {
    int iteration = 0;
    int episodes = 0;
    double mean_return = 0.0;
    int designs = 0; // netlist-valid designs
    double netlist_validity = 0.0;
    double simulation_validity = 0.0;
    double spec_fulfillment = 0.0;
    double invalid_action_rate = 0.0;
    double mean_steps = 0.0;
    double bc_coefficient = 0.0;
    LossStats loss;
    double bc_loss = 0.0;
    double seconds = 0.0;
    std::map<std::string, SpecStats> specs;
};

inline IterationMetrics summarize(const RolloutBatch& b, const TaskSpec& task)
{
    IterationMetrics m;
    m.episodes = static_cast<int>(b.trajectories.size());
    if (m.episodes == 0) return m;
    int steps = 0, invalid = 0, nl = 0, sv = 0, sf = 0;
    double ret = 0.0;
    for (std::size_t i = 0; i < b.trajectories.size(); ++i) {
        const auto& t = b.trajectories[i];
        const auto& d = b.designs[i];
        ret += t.total_reward();
        for (const auto& s : t.steps) {
            ++steps;
            invalid += !s.applied;
        }
        nl += d.netlist_valid;
        sv += d.sim.sim_valid;
        sf += d.sim.sim_valid && d.spec_met;
    }
    const double n = m.episodes;
    m.mean_return = ret / n;
    m.designs = nl;
    m.netlist_validity = nl / n;
    m.simulation_validity = sv / n;
    m.spec_fulfillment = sf / n;
    m.invalid_action_rate = steps ? static_cast<double>(invalid) / steps : 0.0;
    m.mean_steps = steps / n;
    for (const auto& spec : task.specs) {
        std::vector<double> xs;
        for (const auto& d : b.designs)
            if (d.sim.sim_valid)
                if (auto v = d.sim.get(spec.key)) xs.push_back(*v);
        SpecStats s;
        s.count = static_cast<int>(xs.size());
        if (!xs.empty()) {
            s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
            double var = 0.0, err = 0.0;
            for (double x : xs) {
                var += (x - s.mean) * (x - s.mean);
                err += std::abs(x - spec.target);
            }
            s.variance = var / static_cast<double>(xs.size());
            s.mean_abs_error = err / static_cast<double>(xs.size());
        }
        m.specs[spec.key] = s;
    }
    return m;
}

/// CSV schema version 1. Spec columns follow the fixed columns in task order.
inline std::string metrics_csv_header(const TaskSpec& task)
{
    std::string h = "iteration,episodes,mean_return,designs,netlist_validity,simulation_validity,spec_fulfillment,"
                    "invalid_action_rate,mean_steps,bc_coefficient,policy_loss,value_loss,entropy,bc_loss,approx_kl,"
                    "clip_fraction,seconds";
    for (const auto& s : task.specs) h += "," + s.key + "_mean," + s.key + "_var," + s.key + "_abs_err," + s.key + "_n";
    return h;
}

inline std::string metrics_csv_row(const IterationMetrics& m, const TaskSpec& task)
{
    std::ostringstream o;
    o.precision(10);
    o << m.iteration << ',' << m.episodes << ',' << m.mean_return << ',' << m.designs << ',' << m.netlist_validity
      << ',' << m.simulation_validity << ',' << m.spec_fulfillment << ',' << m.invalid_action_rate << ','
      << m.mean_steps << ',' << m.bc_coefficient << ',' << m.loss.policy << ',' << m.loss.value << ','
      << m.loss.entropy << ',' << m.bc_loss << ',' << m.loss.approx_kl << ',' << m.loss.clip_fraction << ','
      << m.seconds;
    for (const auto& s : task.specs) {
        const auto it = m.specs.find(s.key);
        const SpecStats st = it == m.specs.end() ? SpecStats{} : it->second;
        o << ',' << st.mean << ',' << st.variance << ',' << st.mean_abs_error << ',' << st.count;
    }
    return o.str();
}

// ---------------------------------------------------------------------------
// Core training loop
// ---------------------------------------------------------------------------

/// One optimiser pass over fresh rollouts: `epochs` x `minibatches` Adam
/// steps on PPO + value loss + the annealed BC term.
inline LossStats joint_update(PolicyNet& net, Adam& opt, const std::vector<Trajectory>& trajs,
                              const std::vector<ExpertSample>& experts, const TrainConfig& cfg, int k,
                              std::mt19937_64& rng, double* bc_out = nullptr)
{
    std::vector<PpoSample> samples;
    for (const auto& tr : trajs) {
        const auto adv = compute_advantages(tr, cfg);
        for (std::size_t i = 0; i < tr.steps.size(); ++i) {
            const auto& s = tr.steps[i];
            samples.push_back({&s.state, s.action, &s.masks, s.log_prob, s.value, adv.advantages[i], adv.returns[i]});
        }
    }
    {
        std::vector<double> a;
        for (const auto& s : samples) a.push_back(s.advantage);
        normalize(a, cfg.adv_scale_floor);
        for (std::size_t i = 0; i < samples.size(); ++i) samples[i].advantage = a[i];
    }
    const double coef = cfg.bc_coefficient(k);
    LossStats last;
    double bc_last = 0.0;
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    const auto expert_ptrs = all_of(experts);
    bool kl_stop = false;
    for (int ep = 0; ep < cfg.epochs && !kl_stop; ++ep) {
        std::shuffle(order.begin(), order.end(), rng);
        const std::size_t per = (order.size() + cfg.minibatches - 1) / static_cast<std::size_t>(cfg.minibatches);
        for (std::size_t i = 0; i < order.size(); i += std::max<std::size_t>(per, 1)) {
            std::vector<PpoSample> mb;
            for (std::size_t j = i; j < std::min(order.size(), i + per); ++j) mb.push_back(samples[order[j]]);
            opt.zero_grad();
            LossStats st;
            ppo_loss(net, mb, cfg, true, &st);
            if (cfg.target_kl > 0.0 && st.approx_kl > 1.5 * cfg.target_kl) {
                last = st;
                kl_stop = true;
                break;
            }
            if (coef > 0.0 && !expert_ptrs.empty()) {
                std::vector<const ExpertSample*> eb = expert_ptrs;
                if (static_cast<int>(eb.size()) > cfg.bc_batch) {
                    std::shuffle(eb.begin(), eb.end(), rng);
                    eb.resize(static_cast<std::size_t>(cfg.bc_batch));
                }
                bc_last = bc_loss(net, eb, coef, true) / coef;
            }
            opt.clip_grad_norm(cfg.max_grad_norm);
            opt.step();
            last = st;
        }
    }
    last.bc = bc_last;
    if (bc_out) *bc_out = bc_last;
    return last;
}

/// Expert (state, action) pairs of a task's bundled experts.
inline std::vector<ExpertSample> task_expert_samples(const TaskSpec& task, const TrainConfig& cfg)
{
    ActionConfig ac = task.action_config();
    ac.use_symmetry = cfg.use_symmetry;
    std::vector<ExpertSample> out;
    for (const auto& path : task.expert_netlists) {
        auto g = parse_netlist(read_file(path), task.graph);
        g.set_tag(std::filesystem::path(path).stem().string());
        DecomposeOptions opt;
        opt.action = ac;
        opt.step_limit = task.step_limit;
        auto traj = decompose_to_trajectory(g, task.scaffold, opt);
        auto s = expert_samples(traj, ac, task.step_limit);
        out.insert(out.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
    }
    return out;
}

/// Discriminator data: expert trajectory states and random prefixes of the
/// expert designs (positives) against states visited by the current policy
/// (negatives).
inline std::pair<std::vector<CircuitGraph>, std::vector<CircuitGraph>>
discriminator_data(const PolicyNet& net, const TaskSpec& task, const std::vector<ExpertSample>& experts,
                   const TrainConfig& cfg)
{
    std::vector<CircuitGraph> pos, neg;
    std::set<std::uint64_t> seen_pos;
    for (const auto& s : experts)
        if (seen_pos.insert(canonical_hash(s.state)).second) pos.push_back(s.state);
    std::mt19937_64 rng(cfg.seed ^ 0xabcdefULL);
    for (const auto& path : task.expert_netlists) {
        auto g = parse_netlist(read_file(path), task.graph);
        for (auto& sg : sample_subgraphs(g, std::max(1, cfg.disc_samples / 8), rng, task.action_config()))
            if (seen_pos.insert(canonical_hash(sg)).second) pos.push_back(std::move(sg));
        if (seen_pos.insert(canonical_hash(g)).second) pos.push_back(std::move(g));
    }
    // Half the negatives come from the policy, half from uniform masked
    // rollouts so that states far from both still score as non-expert.
    const int episodes = std::max(4, cfg.disc_samples / 16);
    auto batch = collect_rollouts(net, task, cfg, {}, episodes, cfg.seed ^ 0x1234ULL);
    std::vector<CircuitGraph> from_policy, from_uniform;
    for (const auto& t : batch.trajectories) {
        for (const auto& s : t.steps) from_policy.push_back(s.state);
        from_policy.push_back(t.final_state);
    }
    {
        // masked even in the no-mask ablation: unmasked uniform play rarely
        // leaves the scaffold, which is itself a positive
        EnvConfig ec;
        ec.use_symmetry = cfg.use_symmetry;
        ec.defer_evaluation = true;
        Environment env(task, ec);
        UniformSampler uniform;
        for (int i = 0; i < episodes; ++i) {
            const auto t = run_episode(env, uniform, rng());
            for (const auto& s : t.steps) from_uniform.push_back(s.state);
            from_uniform.push_back(t.final_state);
        }
    }
    std::set<std::uint64_t> seen_neg;
    auto take = [&](std::vector<CircuitGraph>& pool, int quota) {
        std::shuffle(pool.begin(), pool.end(), rng);
        int taken = 0;
        for (auto& g : pool) {
            if (taken >= quota) break;
            const auto h = canonical_hash(g);
            if (seen_pos.contains(h) || !seen_neg.insert(h).second) continue;
            neg.push_back(std::move(g));
            ++taken;
        }
    };
    take(from_policy, cfg.disc_samples / 2);
    take(from_uniform, cfg.disc_samples - static_cast<int>(neg.size()));
    if (static_cast<int>(pos.size()) > cfg.disc_samples) {
        std::shuffle(pos.begin(), pos.end(), rng);
        pos.resize(static_cast<std::size_t>(cfg.disc_samples));
    }
    return {std::move(pos), std::move(neg)};
}

struct TrainHooks {
    std::function<void(const IterationMetrics&)> on_iteration;
    std::function<void(const RolloutBatch&, int iteration)> on_batch;
    std::function<void(int iteration)> on_checkpoint;
    const std::atomic<bool>* stop = nullptr;
};

struct TrainSummary {
    std::vector<IterationMetrics> history;
    DiscriminatorReport discriminator;
    bool discriminator_trained = false;
    bool interrupted = false;
    int spec_meeting_designs = 0;
    int expert_samples = 0;
};

/// The core phase: optional one-off discriminator training, then PPO with
/// the annealed BC term for `cfg.iterations` updates.
inline TrainSummary train(PolicyNet& net, const TaskSpec& task, const TrainConfig& cfg, const TrainHooks& hooks = {})
{
    cfg.validate();
    check_evaluator_ready(task);
    TrainSummary sum;
    std::vector<ExpertSample> experts;
    if (cfg.use_bc || cfg.use_disc) experts = task_expert_samples(task, cfg);
    sum.expert_samples = static_cast<int>(experts.size());
    if (!cfg.use_masks)
        for (auto& e : experts) {
            // without masks the policy samples from full-width heads
            auto& m = e.masks;
            const int n = e.state.num_nodes();
            m.terminate.assign(2, 1);
            if (e.action.terminate == 0) {
                m.source.assign(static_cast<std::size_t>(n), 1);
                m.target.assign(static_cast<std::size_t>(n + kNodeKinds), 1);
                m.edge.assign(kEdgeKinds, 1);
                m.addition.assign(kModifiers, 1);
            }
        }

    SimilarityFn similarity;
    std::unique_ptr<SimilarityOracle> oracle;
    if (cfg.use_disc) {
        auto [pos, neg] = discriminator_data(net, task, experts, cfg);
        sum.discriminator = train_discriminator(net, pos, neg, cfg);
        sum.discriminator_trained = true;
        oracle = std::make_unique<SimilarityOracle>(net, task.reward.similarity);
        similarity = [o = oracle.get()](const CircuitGraph& g) { return (*o)(g); };
    }

    Adam opt(net.policy_params(), cfg.lr);
    std::mt19937_64 rng(cfg.seed);
    for (int k = 0; k < cfg.iterations; ++k) {
        if (hooks.stop && hooks.stop->load()) {
            sum.interrupted = true;
            break;
        }
        const auto t0 = std::chrono::steady_clock::now();
        auto batch = collect_rollouts(net, task, cfg, similarity, cfg.episodes_per_batch, rng());
        auto m = summarize(batch, task);
        m.iteration = k;
        m.bc_coefficient = cfg.bc_coefficient(k);
        for (const auto& d : batch.designs) sum.spec_meeting_designs += d.sim.sim_valid && d.spec_met;
        if (hooks.on_batch) hooks.on_batch(batch, k);
        m.loss = joint_update(net, opt, batch.trajectories, experts, cfg, k, rng, &m.bc_loss);
        m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        sum.history.push_back(m);
        if (hooks.on_iteration) hooks.on_iteration(m);
        if (hooks.on_checkpoint && cfg.checkpoint_every > 0 && (k + 1) % cfg.checkpoint_every == 0)
            hooks.on_checkpoint(k);
    }
    return sum;
}

} // namespace astrl
