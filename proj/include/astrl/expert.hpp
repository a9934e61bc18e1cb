#pragma once

#include <algorithm>
#include <array>
#include <deque>
#include <functional>
#include <filesystem>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "astrl/action.hpp"
#include "astrl/environment.hpp"
#include "astrl/graph_io.hpp"
#include "astrl/netlist.hpp"

namespace astrl {

struct ExpertStep {
    CircuitGraph state;
    Action action;
};

struct ExpertTrajectory {
    std::string name;
    CircuitGraph seed_state;
    std::vector<ExpertStep> steps;
    CircuitGraph final_state;
};

struct NamedGraph {
    std::string name;
    CircuitGraph graph;
};

/// Every .sp / .cir file of a directory, parsed, in file-name order.
inline std::vector<NamedGraph> load_netlist_dir(const std::string& dir, const GraphConfig& cfg = {})
{
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw Error(Errc::Io, "not a directory: " + dir);
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        const auto ext = e.path().extension().string();
        if (e.is_regular_file() && (ext == ".sp" || ext == ".cir")) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<NamedGraph> out;
    for (const auto& f : files) {
        auto g = parse_netlist(read_file(f.string()), cfg);
        g.set_tag(f.stem().string());
        out.push_back({f.stem().string(), std::move(g)});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Seed anchoring
// ---------------------------------------------------------------------------

/// Injective map seed -> final preserving kinds, IO labels, symmetry classes,
/// mirror pairs and every seed edge. Backtracking search.
inline std::optional<std::vector<int>> find_embedding(const CircuitGraph& seed, const CircuitGraph& fin)
{
    const int ns = seed.num_nodes(), nf = fin.num_nodes();
    if (ns > nf) return std::nullopt;
    const auto& ss = seed.symmetry();
    const auto& fs = fin.symmetry();

    // Anchors (special and IO nets) first, then breadth-first over seed edges.
    std::vector<int> order;
    std::vector<char> queued(static_cast<std::size_t>(ns), 0);
    std::deque<int> q;
    for (int u = 0; u < ns; ++u)
        if (is_special_net(seed.kind(u)) || seed.kind(u) == NodeKind::IoNet) {
            q.push_back(u);
            queued[u] = 1;
        }
    for (int start = 0; start < ns; ++start) {
        if (!queued[start] && q.empty()) {
            q.push_back(start);
            queued[start] = 1;
        }
        while (!q.empty()) {
            int u = q.front();
            q.pop_front();
            order.push_back(u);
            for (int ei : seed.incident(u)) {
                const auto& e = seed.edges()[ei];
                int v = e.component == u ? e.net : e.component;
                if (!queued[v]) {
                    queued[v] = 1;
                    q.push_back(v);
                }
            }
        }
    }

    std::vector<int> map(static_cast<std::size_t>(ns), -1);
    std::vector<char> used(static_cast<std::size_t>(nf), 0);

    auto compatible = [&](int s, int f) {
        if (used[f] || seed.kind(s) != fin.kind(f)) return false;
        if (seed.kind(s) == NodeKind::IoNet && seed.node(s).label != fin.node(f).label) return false;
        if (ss.is_symmetric(s) != fs.is_symmetric(f)) return false;
        if (seed.incident(s).size() > fin.incident(f).size()) return false;
        if (ss.is_symmetric(s)) {
            int ms = *ss.mirror(s);
            if (map[ms] >= 0 && *fs.mirror(f) != map[ms]) return false;
            if (map[ms] < 0 && used[*fs.mirror(f)]) return false;
        }
        for (int ei : seed.incident(s)) {
            const auto& e = seed.edges()[ei];
            const int other = e.component == s ? e.net : e.component;
            const int mo = other == s ? f : map[other];
            if (mo < 0) continue;
            const Edge img = e.component == s ? Edge{f, mo, e.kind} : Edge{mo, f, e.kind};
            if (!fin.has_edge(img.component, img.net, img.kind)) return false;
        }
        return true;
    };

    std::function<bool(std::size_t)> solve = [&](std::size_t i) {
        if (i == order.size()) return true;
        const int s = order[i];
        for (int f = 0; f < nf; ++f) {
            if (!compatible(s, f)) continue;
            map[s] = f;
            used[f] = 1;
            if (solve(i + 1)) return true;
            map[s] = -1;
            used[f] = 0;
        }
        return false;
    };
    if (!solve(0)) return std::nullopt;
    return map;
}

/// Smallest mirror-closed connected piece of `g` joining the supply to every
/// other special or IO net along shortest paths; induced edges kept.
inline CircuitGraph minimal_seed(const CircuitGraph& g)
{
    const int n = g.num_nodes();
    if (n == 0) throw Error(Errc::EmptyGraph, "empty design");
    std::vector<int> anchors;
    for (int u = 0; u < n; ++u)
        if (is_special_net(g.kind(u)) || g.kind(u) == NodeKind::IoNet) anchors.push_back(u);
    const int root = g.find_kind(NodeKind::SupplyNet).value_or(anchors.empty() ? 0 : anchors.front());
    std::vector<int> parent(static_cast<std::size_t>(n), -2);
    std::deque<int> q{root};
    parent[root] = -1;
    while (!q.empty()) {
        int u = q.front();
        q.pop_front();
        for (int ei : g.incident(u)) {
            const auto& e = g.edges()[ei];
            int v = e.component == u ? e.net : e.component;
            if (parent[v] == -2) {
                parent[v] = u;
                q.push_back(v);
            }
        }
    }
    std::set<int> keep{root};
    for (int a : anchors)
        for (int u = a; u >= 0 && parent[u] != -2; u = parent[u]) keep.insert(u);
    const auto& sym = g.symmetry();
    for (int u : std::vector<int>(keep.begin(), keep.end()))
        if (auto m = sym.mirror(u)) keep.insert(*m);

    std::vector<int> ids(keep.begin(), keep.end());
    std::vector<int> remap(static_cast<std::size_t>(n), -1);
    CircuitGraph out;
    for (int u : ids) remap[u] = out.add_node_unchecked(g.kind(u), g.node(u).label);
    for (const auto& e : g.edges())
        if (remap[e.component] >= 0 && remap[e.net] >= 0) out.add_edge_unchecked(remap[e.component], remap[e.net], e.kind);
    for (auto [a, b] : sym.pairs())
        if (remap[a] >= 0 && remap[b] >= 0) out.symmetry().pair(remap[a], remap[b]);
    out.set_tag(g.tag());
    return out;
}

// ---------------------------------------------------------------------------
// Decomposition
// ---------------------------------------------------------------------------

struct DecomposeOptions {
    ActionConfig action;      // steps_left is set per step from step_limit
    int step_limit = 60;
    bool randomize = false;   // random realisable edge instead of canonical order
    std::uint64_t seed = 0;
    bool append_terminate = true;
    int max_steps = -1;       // stop early (prefix sampling); < 0 = run to completion
};

namespace detail {

struct Candidate {
    std::array<long long, 5> key{};
    Action action;
    std::vector<int> realised;  // final edge indices
    std::vector<int> new_nodes; // final ids of the nodes the action creates, in creation order
};

} // namespace detail

/// Breadth-first construction order from the seed frontier: at each step the
/// remaining final edge whose placed endpoint was placed earliest is emitted,
/// with ties broken by node kind and refined colour. Mirrored structure is
/// emitted through the symmetric modifiers so one action covers both halves.
inline ExpertTrajectory decompose_to_trajectory(const CircuitGraph& fin, const CircuitGraph& seed,
                                                const DecomposeOptions& opt = {})
{
    if (!symmetry_consistent(fin)) throw Error(Errc::InfeasibleExpertAction, "design is not mirror-consistent");
    auto emb = find_embedding(seed, fin);
    if (!emb) throw Error(Errc::NotASubgraph, "seed does not embed in the design");

    const int nf = fin.num_nodes();
    const auto& fsym = fin.symmetry();
    const auto colors = wl_node_colors(fin);
    std::vector<int> to_state(static_cast<std::size_t>(nf), -1);
    for (int s = 0; s < seed.num_nodes(); ++s) to_state[(*emb)[s]] = s;

    std::vector<char> done(fin.edges().size(), 0);
    std::set<Edge> placed;
    for (const auto& e : seed.edges()) placed.insert(Edge{(*emb)[e.component], (*emb)[e.net], e.kind});
    auto edge_index = [&](const Edge& e) {
        auto it = std::find(fin.edges().begin(), fin.edges().end(), e);
        return it == fin.edges().end() ? -1 : static_cast<int>(it - fin.edges().begin());
    };
    for (std::size_t i = 0; i < fin.edges().size(); ++i) done[i] = placed.contains(fin.edges()[i]);

    ExpertTrajectory traj;
    traj.name = fin.tag();
    traj.seed_state = seed;
    traj.final_state = fin;
    CircuitGraph state = seed;
    std::mt19937_64 rng(opt.seed);

    for (int t = 0;; ++t) {
        if (opt.max_steps >= 0 && t >= opt.max_steps) break;
        ActionConfig ac = opt.action;
        ac.steps_left = std::max(0, opt.step_limit - 1 - t);
        const int n = state.num_nodes();
        std::vector<detail::Candidate> cands;
        bool remaining = false;
        for (std::size_t i = 0; i < fin.edges().size(); ++i) {
            if (done[i]) continue;
            remaining = true;
            const auto& e = fin.edges()[i];
            const int mc = to_state[e.component], mn = to_state[e.net];
            if (mc < 0 && mn < 0) continue;
            const bool cs = fsym.is_symmetric(e.component), ns_ = fsym.is_symmetric(e.net);
            const Edge mirror = mirror_edge(fin, e);
            detail::Candidate c;
            c.realised = {static_cast<int>(i)};
            const int mi = edge_index(mirror);
            if (mi >= 0 && mi != static_cast<int>(i)) c.realised.push_back(mi);
            Action& a = c.action;
            a.edge_kind = index_of(e.kind);
            auto new_target = [&](int final_node) { return n + index_of(fin.kind(final_node)); };

            if (mc >= 0 && mn >= 0) {
                if (!cs && !ns_) { a.source = mn; a.target = mc; a.addition_type = 0; }
                else if (cs && ns_) { a.source = mn; a.target = mc; a.addition_type = 1; }
                else if (ns_) { a.source = mn; a.target = mc; a.addition_type = 2; }
                else { a.source = mc; a.target = mn; a.addition_type = 3; }
            } else {
                const int placed_final = mc >= 0 ? e.component : e.net;
                const int other = mc >= 0 ? e.net : e.component;
                const bool ps = fsym.is_symmetric(placed_final), os = fsym.is_symmetric(other);
                a.source = to_state[placed_final];
                a.target = new_target(other);
                if (!ps && !os) { a.addition_type = 0; c.new_nodes = {other}; }
                else if (ps && os) {
                    a.addition_type = 1;
                    c.new_nodes = {other, *fsym.mirror(other)};
                    if (to_state[*fsym.mirror(other)] >= 0) continue;
                } else if (ps && !os && is_component(fin.kind(other))) {
                    if (is_component(fin.kind(placed_final))) continue;
                    a.addition_type = 2;
                    c.new_nodes = {other};
                } else if (ps && !os) {
                    a.addition_type = 3;
                    c.new_nodes = {other};
                } else {
                    // common-mode endpoint placed, symmetric one new: only a net may spawn a pair
                    if (is_component(fin.kind(placed_final))) continue;
                    a.addition_type = 4;
                    const int om = *fsym.mirror(other);
                    if (to_state[om] >= 0) continue;
                    c.new_nodes = {other, om};
                    const int pi = edge_index(Edge{om, placed_final, e.kind});
                    if (pi < 0) continue;
                    c.realised = {static_cast<int>(i), pi};
                }
            }
            if (!construction_valid(state, ac, a.source, a.target, a.edge_kind, a.addition_type)) continue;
            const int anchor = mc >= 0 && mn >= 0 ? std::min(mc, mn) : (mc >= 0 ? mc : mn);
            const int other_final = mc >= 0 && mn >= 0 ? (mc < mn ? e.net : e.component) : (mc >= 0 ? e.net : e.component);
            c.key = {anchor, index_of(fin.kind(other_final)), a.edge_kind,
                     static_cast<long long>(colors[other_final] >> 1), other_final};
            cands.push_back(std::move(c));
        }
        if (!remaining) break;
        if (cands.empty())
            throw Error(Errc::InfeasibleExpertAction, "no realisable edge remains for '" + fin.tag() + "'");
        std::size_t pick = 0;
        if (opt.randomize) {
            pick = static_cast<std::size_t>(rng() % cands.size());
        } else {
            for (std::size_t k = 1; k < cands.size(); ++k)
                if (cands[k].key < cands[pick].key) pick = k;
        }
        const auto& c = cands[pick];
        auto res = apply_action(state, ac, c.action);
        if (!res.applied) throw Error(Errc::InfeasibleExpertAction, "expert action rejected");
        traj.steps.push_back({state, c.action});
        for (std::size_t k = 0; k < c.new_nodes.size(); ++k) to_state[c.new_nodes[k]] = n + static_cast<int>(k);
        for (int r : c.realised) done[r] = 1;
        state = std::move(res.state);
    }
    if (opt.append_terminate && opt.max_steps < 0) traj.steps.push_back({state, Action{-1, -1, -1, -1, 1}});
    if (opt.max_steps < 0 && canonical_hash(state) != canonical_hash(fin))
        throw Error(Errc::InfeasibleExpertAction, "replay does not reproduce '" + fin.tag() + "'");
    return traj;
}

/// Replays the construction actions from the seed.
inline CircuitGraph replay(const ExpertTrajectory& traj, const ActionConfig& cfg = {}, int step_limit = 60)
{
    CircuitGraph s = traj.seed_state;
    int t = 0;
    for (const auto& st : traj.steps) {
        ActionConfig ac = cfg;
        ac.steps_left = std::max(0, step_limit - 1 - t++);
        if (st.action.terminate == 1) break;
        auto r = apply_action(s, ac, st.action);
        if (!r.applied) throw Error(Errc::InfeasibleExpertAction, "replay step rejected");
        s = std::move(r.state);
    }
    return s;
}

/// (state, action, masks) pairs for behavioural cloning. Every action must be
/// permitted by the masks at its state.
struct ExpertSample {
    CircuitGraph state;
    Action action;
    MaskSet masks;
    std::uint64_t post_hash = 0; // canonical hash after the action
    int steps_left = -1;         // construction budget at this state
    bool at_step_limit = false;
};

inline MaskSet masks_for(const CircuitGraph& s, const ActionConfig& ac, const Action& a, bool at_step_limit)
{
    MaskSet m;
    const bool can = !s.empty() && any_set(mask_source(s, ac));
    m.terminate = mask_terminate(s, ac, can, at_step_limit);
    if (a.terminate == 0) {
        m.source = mask_source(s, ac);
        m.target = mask_target(s, ac, a.source);
        m.edge = mask_edge_kind(s, ac, a.source, a.target);
        m.addition = mask_addition_type(s, ac, a.source, a.target, a.edge_kind);
    }
    return m;
}

inline bool mask_feasible(const MaskSet& m, const Action& a)
{
    auto ok = [](const Mask& mk, int i) { return i >= 0 && i < static_cast<int>(mk.size()) && mk[i]; };
    if (!ok(m.terminate, a.terminate)) return false;
    if (a.terminate == 1) return true;
    return ok(m.source, a.source) && ok(m.target, a.target) && ok(m.edge, a.edge_kind) && ok(m.addition, a.addition_type);
}

inline std::vector<ExpertSample> expert_samples(const ExpertTrajectory& traj, const ActionConfig& cfg = {},
                                                int step_limit = 60)
{
    std::vector<ExpertSample> out;
    int t = 0;
    for (const auto& st : traj.steps) {
        ActionConfig ac = cfg;
        ac.steps_left = std::max(0, step_limit - 1 - t);
        const bool at_limit = t >= step_limit - 1;
        ExpertSample s{st.state, st.action, masks_for(st.state, ac, st.action, at_limit), 0, ac.steps_left, at_limit};
        if (!mask_feasible(s.masks, s.action))
            throw Error(Errc::InfeasibleExpertAction,
                        "step " + std::to_string(t) + " of '" + traj.name + "' is masked out");
        s.post_hash = st.action.terminate == 1 ? hash_mix(canonical_hash(st.state), 1)
                                               : canonical_hash(apply_action(st.state, ac, st.action).state);
        out.push_back(std::move(s));
        ++t;
    }
    return out;
}

/// Connected, partially valid prefixes of random valid construction orders.
inline std::vector<CircuitGraph> sample_subgraphs(const CircuitGraph& g, int n, std::mt19937_64& rng,
                                                  const ActionConfig& cfg = {})
{
    std::vector<CircuitGraph> out;
    const auto seed = minimal_seed(g);
    for (int i = 0; i < n; ++i) {
        DecomposeOptions opt;
        opt.action = cfg;
        opt.randomize = true;
        opt.seed = rng();
        opt.step_limit = 1 << 20;
        const auto full = decompose_to_trajectory(g, seed, opt);
        const int construct = static_cast<int>(full.steps.size()) - 1; // minus terminate
        const int cut = static_cast<int>(rng() % static_cast<std::uint64_t>(construct + 1));
        out.push_back(cut == construct ? g : full.steps[static_cast<std::size_t>(cut)].state);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Trajectory files
// ---------------------------------------------------------------------------

inline json trajectory_to_json(const ExpertTrajectory& t)
{
    json steps = json::array();
    for (const auto& s : t.steps) steps.push_back({{"state", graph_to_json(s.state)}, {"action", action_to_json(s.action)}});
    return {{"name", t.name}, {"seed", graph_to_json(t.seed_state)}, {"steps", steps}, {"final", graph_to_json(t.final_state)}};
}

inline ExpertTrajectory trajectory_from_json(const json& j)
{
    ExpertTrajectory t;
    try {
        t.name = j.value("name", "");
        t.seed_state = graph_from_json(j.at("seed"));
        for (const auto& s : j.at("steps")) t.steps.push_back({graph_from_json(s.at("state")), action_from_json(s.at("action"))});
        t.final_state = graph_from_json(j.at("final"));
    } catch (const json::exception& ex) {
        throw Error(Errc::ParseError, std::string("trajectory json: ") + ex.what());
    }
    return t;
}

/// Decomposes every design from its minimal seed.
inline std::vector<ExpertTrajectory> dataset_trajectories(const std::vector<NamedGraph>& designs,
                                                          const ActionConfig& cfg = {}, int step_limit = 60)
{
    std::vector<ExpertTrajectory> out;
    for (const auto& d : designs) {
        DecomposeOptions opt;
        opt.action = cfg;
        opt.step_limit = step_limit;
        auto t = decompose_to_trajectory(d.graph, minimal_seed(d.graph), opt);
        t.name = d.name;
        out.push_back(std::move(t));
    }
    return out;
}

/// Task experts decomposed from the task scaffold.
inline std::vector<ExpertTrajectory> task_trajectories(const TaskSpec& task)
{
    std::vector<ExpertTrajectory> out;
    for (const auto& path : task.expert_netlists) {
        auto g = parse_netlist(read_file(path), task.graph);
        g.set_tag(std::filesystem::path(path).stem().string());
        DecomposeOptions opt;
        opt.action = task.action_config();
        opt.step_limit = task.step_limit;
        out.push_back(decompose_to_trajectory(g, task.scaffold, opt));
    }
    return out;
}

} // namespace astrl
