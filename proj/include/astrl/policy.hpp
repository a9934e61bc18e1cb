#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <Eigen/QR>

#include "astrl/action.hpp"
#include "astrl/autodiff.hpp"
#include "astrl/environment.hpp"
#include "astrl/graph.hpp"
#include "astrl/graph_io.hpp"
#include "astrl/hash.hpp"

namespace astrl {

using ad::Mat;
using ad::Param;
using ad::Tape;
using Var = Tape::Var;

struct PolicyConfig {
    int width = 64;
    int layers = 3;
    int hidden = 64;
    double value_scale = 50.0; // critic output units, about one terminal reward
    std::uint64_t seed = 1;
};

/// Node kinds and directed message lists of a graph.
struct GraphTensors {
    int n = 0;
    std::vector<int> kinds;
    std::vector<int> msg_src, msg_dst, msg_kind;
};

inline GraphTensors tensors_of(const CircuitGraph& g)
{
    if (g.empty()) throw Error(Errc::EmptyGraph, "cannot encode an empty graph");
    GraphTensors t;
    t.n = g.num_nodes();
    for (const auto& nd : g.nodes()) t.kinds.push_back(index_of(nd.kind));
    for (const auto& e : g.edges()) {
        const int k = index_of(e.kind);
        t.msg_src.push_back(e.net);
        t.msg_dst.push_back(e.component);
        t.msg_kind.push_back(k);
        t.msg_src.push_back(e.component);
        t.msg_dst.push_back(e.net);
        t.msg_kind.push_back(k);
    }
    return t;
}

class ParamStore {
public:
    Param* add(std::string group, std::string name, int rows, int cols)
    {
        auto p = std::make_unique<Param>();
        p->group = std::move(group);
        p->name = std::move(name);
        p->value = Mat::Zero(rows, cols);
        p->zero_grad();
        params_.push_back(std::move(p));
        return params_.back().get();
    }

    [[nodiscard]] std::vector<Param*> all() const
    {
        std::vector<Param*> out;
        for (const auto& p : params_) out.push_back(p.get());
        return out;
    }

    [[nodiscard]] std::vector<Param*> select(const std::function<bool(const Param&)>& keep) const
    {
        std::vector<Param*> out;
        for (const auto& p : params_)
            if (keep(*p)) out.push_back(p.get());
        return out;
    }

private:
    std::vector<std::unique_ptr<Param>> params_;
};

inline std::size_t count_parameters(const std::vector<Param*>& ps)
{
    std::size_t n = 0;
    for (auto* p : ps) n += static_cast<std::size_t>(p->value.size());
    return n;
}

inline void zero_grads(const std::vector<Param*>& ps)
{
    for (auto* p : ps) p->zero_grad();
}

namespace detail {

inline double gaussian(std::mt19937_64& rng)
{
    // Box-Muller on portable uniforms.
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = uniform01(rng);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

/// Orthogonal columns (or rows) scaled by `gain`.
inline void init_orthogonal(Mat& w, double gain, std::mt19937_64& rng)
{
    const auto r = w.rows(), c = w.cols();
    const bool tall = r >= c;
    Mat a(tall ? r : c, tall ? c : r);
    for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = gaussian(rng);
    Eigen::HouseholderQR<Mat> qr(a);
    Mat q = qr.householderQ() * Mat::Identity(a.rows(), a.cols());
    // Sign fix so the result is a deterministic function of the draw.
    Mat rr = qr.matrixQR().topRows(a.cols()).triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < q.cols(); ++j)
        if (rr(j, j) < 0) q.col(j) *= -1.0;
    w = gain * (tall ? q : Mat(q.transpose()));
}

inline void init_gaussian(Mat& w, double stddev, std::mt19937_64& rng)
{
    for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = stddev * gaussian(rng);
}

} // namespace detail

struct Linear {
    Param* w = nullptr;
    Param* b = nullptr;

    Var apply(Tape& t, Var x) const { return t.add_row(t.matmul(x, t.param(w)), t.param(b)); }
};

/// in -> hidden -> hidden -> out with ReLU between layers. The first layer may
/// take a per-row block plus shared 1-row blocks; its weight rows are laid
/// out in that order.
struct Mlp3 {
    Linear l1, l2, l3;

    Var apply(Tape& t, Var rows, const std::vector<Var>& shared) const
    {
        Var w1 = t.param(l1.w);
        int off = 0;
        Var z = -1;
        if (rows >= 0) {
            z = t.matmul_rows(rows, w1, 0);
            off = static_cast<int>(t.value(rows).cols());
        }
        Var s = t.param(l1.b);
        for (Var part : shared) {
            s = t.add(s, t.matmul_rows(part, w1, off));
            off += static_cast<int>(t.value(part).cols());
        }
        z = z >= 0 ? t.add_row(z, s) : s;
        z = t.relu(z);
        z = t.relu(l2.apply(t, z));
        return l3.apply(t, z);
    }
};

struct EncoderParams {
    Linear input;
    std::vector<Param*> edge_w, edge_b, eps;
    std::vector<Linear> mlp_a, mlp_b;
};

struct Encoded {
    Var nodes = -1;  // n x width, last layer
    Var pooled = -1; // 1 x (layers + 1) * width
};

/// Edge-conditioned isomorphism-network encoder:
///   h' = MLP((1 + eps) h + sum_j ReLU(h_j + W_e onehot(e_ij) + b_e))
/// Readout concatenates sum-pooled node states of the input and every layer.
inline Encoded encode(Tape& t, const EncoderParams& p, const GraphTensors& g)
{
    Var h = t.add_row(t.gather_rows(t.param(p.input.w), g.kinds), t.param(p.input.b));
    std::vector<Var> pooled{t.sum_rows(h)};
    const int layers = static_cast<int>(p.eps.size());
    for (int l = 0; l < layers; ++l) {
        Var pre = t.one_plus_scale(h, t.param(p.eps[l]));
        if (!g.msg_src.empty()) {
            Var e = t.add_row(t.gather_rows(t.param(p.edge_w[l]), g.msg_kind), t.param(p.edge_b[l]));
            Var msg = t.relu(t.add(t.gather_rows(h, g.msg_src), e));
            pre = t.add(pre, t.scatter_add_rows(msg, g.msg_dst, g.n));
        }
        Var z = p.mlp_b[l].apply(t, t.relu(p.mlp_a[l].apply(t, pre)));
        h = l + 1 < layers ? t.relu(z) : z;
        pooled.push_back(t.sum_rows(h));
    }
    return {h, t.concat_cols(pooled)};
}

using MaskFn = std::function<Mask(int head, const Action& prefix)>;

class PolicyNet {
public:
    explicit PolicyNet(PolicyConfig cfg = {}) : cfg_(cfg) { build(); }
    PolicyNet(const PolicyNet&) = delete;
    PolicyNet& operator=(const PolicyNet&) = delete;

    [[nodiscard]] const PolicyConfig& config() const { return cfg_; }
    [[nodiscard]] const ParamStore& store() const { return store_; }

    /// Encoder, action heads and value head (everything the policy update touches).
    [[nodiscard]] std::vector<Param*> policy_params() const
    {
        return store_.select([](const Param& p) { return p.group != "discriminator"; });
    }
    [[nodiscard]] std::vector<Param*> discriminator_params() const
    {
        return store_.select([](const Param& p) { return p.group == "discriminator"; });
    }
    /// Whole model: policy, heads, value head and discriminator.
    [[nodiscard]] std::size_t parameter_count() const { return count_parameters(store_.all()); }

    void copy_from(const PolicyNet& o)
    {
        auto a = store_.all(), b = o.store_.all();
        if (a.size() != b.size()) throw Error(Errc::Config, "architecture mismatch");
        for (std::size_t i = 0; i < a.size(); ++i) a[i]->value = b[i]->value;
    }

    // ---- forward pieces ---------------------------------------------------

    Encoded encode_policy(Tape& t, const GraphTensors& g) const { return encode(t, enc_, g); }

    /// Logits of head `head` given the prefix. Prefix node choices are
    /// represented by their embedding rows (new-node targets by a kind table).
    Var head_logits(Tape& t, const Encoded& e, int n, int head, const Action& a) const
    {
        auto src = [&] { return t.gather_rows(e.nodes, {a.source}); };
        auto tgt = [&] {
            if (a.target < n) return t.gather_rows(e.nodes, {a.target});
            return t.gather_rows(t.param(kind_emb_), {a.target - n});
        };
        switch (head) {
        case 0: return f1_.apply(t, e.nodes, {e.pooled});
        case 1: return f2_.apply(t, t.concat_rows(e.nodes, t.param(kind_emb_)), {e.pooled, src()});
        case 2: return f3_.apply(t, -1, {e.pooled, src(), tgt()});
        case 3: return f4_.apply(t, -1, {e.pooled, src(), tgt(), t.gather_rows(t.param(edge_emb_), {a.edge_kind})});
        case 4: return f5_.apply(t, -1, {e.pooled});
        default: throw Error(Errc::InvalidPrefix, "head " + std::to_string(head));
        }
    }

    /// Terms of one recorded step: categorical nodes (1x2: log-prob, entropy)
    /// for every head the action used (-1 otherwise) and the value estimate.
    struct StepTerms {
        std::array<Var, kHeads> heads;
        Var value = -1;
    };

    StepTerms step_terms(Tape& t, const CircuitGraph& g, const Action& a, const MaskSet& masks) const
    {
        const auto gt = tensors_of(g);
        const Encoded e = encode_policy(t, gt);
        StepTerms out;
        out.heads.fill(-1);
        const std::array<const Mask*, kHeads> ms{&masks.source, &masks.target, &masks.edge, &masks.addition,
                                                 &masks.terminate};
        const auto arr = a.as_array();
        out.heads[4] = t.categorical(head_logits(t, e, gt.n, 4, a), masks.terminate, a.terminate);
        if (a.terminate == 0)
            for (int h = 0; h < 4; ++h) out.heads[h] = t.categorical(head_logits(t, e, gt.n, h, a), *ms[h], arr[h]);
        out.value = critic(t, e.pooled);
        return out;
    }

    /// Decides termination from the state, then (if continuing) samples or
    /// takes the argmax of the construction heads in order, querying masks
    /// lazily for the growing prefix. The terminate head does not read the
    /// prefix, so deciding it first leaves the joint distribution unchanged.
    Action act(const CircuitGraph& g, const MaskFn& mask_of, std::mt19937_64& rng, bool greedy,
               MaskSet* masks_out = nullptr, std::array<double, kHeads>* logps = nullptr,
               double* value_out = nullptr) const
    {
        Tape t;
        const auto gt = tensors_of(g);
        const Encoded e = encode_policy(t, gt);
        Action a;
        std::array<int*, kHeads> slot{&a.source, &a.target, &a.edge_kind, &a.addition_type, &a.terminate};
        MaskSet ms;
        std::array<Mask*, kHeads> mslot{&ms.source, &ms.target, &ms.edge, &ms.addition, &ms.terminate};
        std::array<double, kHeads> lp{};
        auto decide = [&](int h) {
            *mslot[h] = mask_of(h, a);
            const Var z = head_logits(t, e, gt.n, h, a);
            const auto p = Tape::masked_softmax(t.value(z), *mslot[h]);
            int c = 0;
            if (greedy) {
                p.maxCoeff(&c);
            } else {
                std::vector<double> pv(p.data(), p.data() + p.size());
                c = sample_index(pv, rng);
            }
            *slot[h] = c;
            lp[h] = std::log(p[c]);
        };
        decide(4);
        if (a.terminate == 0)
            for (int h = 0; h < 4; ++h) decide(h);
        if (value_out) *value_out = t.scalar(critic(t, e.pooled));
        if (masks_out) *masks_out = std::move(ms);
        if (logps) *logps = lp;
        return a;
    }

    /// Sum of head log-probs and entropies of a recorded action.
    std::pair<double, double> log_prob_and_entropy(const CircuitGraph& g, const Action& a, const MaskSet& masks) const
    {
        Tape t;
        auto terms = step_terms(t, g, a, masks);
        double lp = 0.0, h = 0.0;
        for (Var v : terms.heads)
            if (v >= 0) {
                lp += t.value(v)(0, 0);
                h += t.value(v)(0, 1);
            }
        return {lp, h};
    }

    Var value_var(Tape& t, const CircuitGraph& g) const
    {
        const auto e = encode_policy(t, tensors_of(g));
        return critic(t, e.pooled);
    }

    [[nodiscard]] double value(const CircuitGraph& g) const
    {
        Tape t;
        return t.scalar(value_var(t, g));
    }

    Var disc_logit_var(Tape& t, const CircuitGraph& g) const
    {
        const auto e = encode(t, disc_enc_, tensors_of(g));
        return disc_head_.apply(t, -1, {e.pooled});
    }

    /// Probability that `g` is an expert-like subgraph.
    [[nodiscard]] double discriminate(const CircuitGraph& g) const
    {
        Tape t;
        const double z = t.scalar(disc_logit_var(t, g));
        return 1.0 / (1.0 + std::exp(-z));
    }

    // ---- checkpoints ------------------------------------------------------

    [[nodiscard]] json to_json() const
    {
        json groups = json::object();
        for (auto* p : store_.all()) {
            json data = json::array();
            for (Eigen::Index i = 0; i < p->value.size(); ++i) data.push_back(p->value(i));
            groups[p->group][p->name] = {{"rows", p->value.rows()}, {"cols", p->value.cols()}, {"data", data}};
        }
        return {{"format", "astrl-checkpoint"},
                {"version", 1},
                {"config",
                 {{"width", cfg_.width},
                  {"layers", cfg_.layers},
                  {"hidden", cfg_.hidden},
                  {"value_scale", cfg_.value_scale}}},
                {"groups", groups}};
    }

    void load_json(const json& j)
    {
        try {
            if (j.at("format") != "astrl-checkpoint" || j.at("version").get<int>() != 1)
                throw Error(Errc::Config, "unsupported checkpoint format");
            const auto& c = j.at("config");
            if (c.at("width").get<int>() != cfg_.width || c.at("layers").get<int>() != cfg_.layers ||
                c.at("hidden").get<int>() != cfg_.hidden)
                throw Error(Errc::Config, "checkpoint architecture differs from configuration");
            cfg_.value_scale = c.value("value_scale", cfg_.value_scale);
            for (auto* p : store_.all()) {
                const auto& e = j.at("groups").at(p->group).at(p->name);
                if (e.at("rows").get<Eigen::Index>() != p->value.rows() ||
                    e.at("cols").get<Eigen::Index>() != p->value.cols())
                    throw Error(Errc::Config, "shape mismatch for " + p->name);
                const auto& d = e.at("data");
                for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value(i) = d.at(static_cast<std::size_t>(i)).get<double>();
            }
        } catch (const json::exception& ex) {
            throw Error(Errc::Config, std::string("checkpoint: ") + ex.what());
        }
    }

    void save(const std::string& path) const { write_file(path, to_json().dump()); }
    void load(const std::string& path) { load_json(json::parse(read_file(path))); }

    [[nodiscard]] std::uint64_t fingerprint() const { return fnv1a(to_json().dump()); }

private:
    // The critic reads the encoder but does not train it: return-scale
    // regression gradients would otherwise swamp the policy signal.
    Var critic(Tape& t, Var pooled) const
    {
        const Var v = value_head_.apply(t, -1, {t.constant(t.value(pooled))});
        return t.matmul(v, t.constant(Mat::Constant(1, 1, cfg_.value_scale)));
    }

    void build()
    {
        std::mt19937_64 rng(cfg_.seed);
        const int w = cfg_.width, hd = cfg_.hidden;
        const int pooled = (cfg_.layers + 1) * w;
        enc_ = make_encoder("encoder", "policy_enc", rng);
        kind_emb_ = store_.add("encoder", "kind_embedding", kNodeKinds, w);
        edge_emb_ = store_.add("encoder", "edge_embedding", kEdgeKinds, w);
        for (auto* p : {kind_emb_, edge_emb_}) detail::init_gaussian(p->value, 1.0 / std::sqrt(w), rng);
        f1_ = make_mlp("f1", w + pooled, hd, 1, 0.01, rng);
        f2_ = make_mlp("f2", w + pooled + w, hd, 1, 0.01, rng);
        f3_ = make_mlp("f3", pooled + 2 * w, hd, kEdgeKinds, 0.01, rng);
        f4_ = make_mlp("f4", pooled + 3 * w, hd, kModifiers, 0.01, rng);
        f5_ = make_mlp("f5", pooled, hd, 2, 0.01, rng);
        value_head_ = make_mlp("value", pooled, hd, 1, 0.0, rng);
        disc_enc_ = make_encoder("discriminator", "disc_enc", rng);
        disc_head_ = make_mlp("discriminator", pooled, hd, 1, 0.0, rng);
    }

    Linear make_linear(const std::string& group, const std::string& name, int in, int out, double gain,
                       std::mt19937_64& rng)
    {
        Linear l{store_.add(group, name + ".w", in, out), store_.add(group, name + ".b", 1, out)};
        if (gain > 0.0) detail::init_orthogonal(l.w->value, gain, rng);
        return l;
    }

    Mlp3 make_mlp(const std::string& group, int in, int hidden, int out, double final_gain, std::mt19937_64& rng)
    {
        const double g = std::sqrt(2.0);
        return {make_linear(group, group + ".l1", in, hidden, g, rng),
                make_linear(group, group + ".l2", hidden, hidden, g, rng),
                make_linear(group, group + ".l3", hidden, out, final_gain, rng)};
    }

    EncoderParams make_encoder(const std::string& group, const std::string& prefix, std::mt19937_64& rng)
    {
        const int w = cfg_.width;
        EncoderParams p;
        p.input = make_linear(group, prefix + ".input", kNodeKinds, w, 1.0, rng);
        for (int l = 0; l < cfg_.layers; ++l) {
            const std::string ln = prefix + ".layer" + std::to_string(l);
            p.edge_w.push_back(store_.add(group, ln + ".edge.w", kEdgeKinds, w));
            detail::init_gaussian(p.edge_w.back()->value, 1.0 / std::sqrt(w), rng);
            p.edge_b.push_back(store_.add(group, ln + ".edge.b", 1, w));
            p.eps.push_back(store_.add(group, ln + ".eps", 1, 1));
            p.mlp_a.push_back(make_linear(group, ln + ".mlp_a", w, w, std::sqrt(2.0) / 2.0, rng));
            p.mlp_b.push_back(make_linear(group, ln + ".mlp_b", w, w, std::sqrt(2.0) / 2.0, rng));
        }
        return p;
    }

    PolicyConfig cfg_;
    ParamStore store_;
    EncoderParams enc_, disc_enc_;
    Param* kind_emb_ = nullptr;
    Param* edge_emb_ = nullptr;
    Mlp3 f1_, f2_, f3_, f4_, f5_, value_head_, disc_head_;
};

/// Policy-driven action selection for rollouts.
class PolicySampler : public ActionSampler {
public:
    explicit PolicySampler(const PolicyNet& net, bool greedy = false) : net_(net), greedy_(greedy) {}

    void choose(const Environment& env, std::mt19937_64& rng, StepRecord& rec) override
    {
        rec.action = net_.act(
            env.state(), [&](int h, const Action& a) { return env.head_mask(h, a); }, rng, greedy_, &rec.masks,
            &rec.head_log_probs, &rec.value);
        rec.log_prob = 0.0;
        for (double v : rec.head_log_probs) rec.log_prob += v;
    }

private:
    const PolicyNet& net_;
    bool greedy_;
};

} // namespace astrl
