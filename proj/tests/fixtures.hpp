#pragma once

#include <algorithm>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "astrl/environment.hpp"
#include "astrl/graph.hpp"

namespace fixtures {

using namespace astrl;

inline std::string data(const std::string& rel) { return std::string(ASTRL_DATA_DIR) + "/" + rel; }

/// Odd or even chain of CMOS inverters closed into a loop.
inline CircuitGraph inverter_ring(int stages)
{
    CircuitGraph g;
    const int vdd = g.add_node(NodeKind::SupplyNet), vss = g.add_node(NodeKind::GroundNet);
    std::vector<int> nets;
    for (int i = 0; i < stages; ++i) nets.push_back(g.add_node(NodeKind::GenericNet));
    for (int i = 0; i < stages; ++i) {
        const int in = nets[i], out = nets[(i + 1) % stages];
        const int p = g.add_node(NodeKind::Pmos), n = g.add_node(NodeKind::Nmos);
        g.add_edge(p, in, EdgeKind::Gate);
        g.add_edge(p, out, EdgeKind::Drain);
        g.add_edge(p, vdd, EdgeKind::Source);
        g.add_edge(n, in, EdgeKind::Gate);
        g.add_edge(n, out, EdgeKind::Drain);
        g.add_edge(n, vss, EdgeKind::Source);
    }
    return g;
}

/// in -R- out -R- vss, plus a resistor across the rails.
inline CircuitGraph divider()
{
    CircuitGraph g;
    const int vdd = g.add_node(NodeKind::SupplyNet), vss = g.add_node(NodeKind::GroundNet);
    const int in = g.add_node(NodeKind::IoNet, "in"), out = g.add_node(NodeKind::IoNet, "out");
    auto r = [&](int a, int b) {
        const int d = g.add_node(NodeKind::Resistor);
        g.add_edge(d, a, EdgeKind::PassivePlus);
        g.add_edge(d, b, EdgeKind::PassiveMinus);
    };
    r(in, out);
    r(out, vss);
    r(vdd, vss);
    return g;
}

/// in -R- out -C- vss.
inline CircuitGraph rc_lowpass()
{
    CircuitGraph g;
    const int vdd = g.add_node(NodeKind::SupplyNet), vss = g.add_node(NodeKind::GroundNet);
    const int in = g.add_node(NodeKind::IoNet, "in"), out = g.add_node(NodeKind::IoNet, "out");
    const int r = g.add_node(NodeKind::Resistor), c = g.add_node(NodeKind::Capacitor), rb = g.add_node(NodeKind::Resistor);
    g.add_edge(r, in, EdgeKind::PassivePlus);
    g.add_edge(r, out, EdgeKind::PassiveMinus);
    g.add_edge(c, out, EdgeKind::PassivePlus);
    g.add_edge(c, vss, EdgeKind::PassiveMinus);
    g.add_edge(rb, vdd, EdgeKind::PassivePlus);
    g.add_edge(rb, vss, EdgeKind::PassiveMinus);
    return g;
}

/// NMOS common-source stage with a resistor load to the supply.
inline CircuitGraph common_source()
{
    CircuitGraph g;
    const int vdd = g.add_node(NodeKind::SupplyNet), vss = g.add_node(NodeKind::GroundNet);
    const int in = g.add_node(NodeKind::IoNet, "in"), out = g.add_node(NodeKind::IoNet, "out");
    const int m = g.add_node(NodeKind::Nmos), rl = g.add_node(NodeKind::Resistor);
    g.add_edge(m, in, EdgeKind::Gate);
    g.add_edge(m, out, EdgeKind::Drain);
    g.add_edge(m, vss, EdgeKind::Source);
    g.add_edge(rl, vdd, EdgeKind::PassivePlus);
    g.add_edge(rl, out, EdgeKind::PassiveMinus);
    return g;
}

/// Exhaustive isomorphism test for small graphs: some kind- and
/// label-preserving bijection maps the edge multiset onto the other one.
inline bool brute_force_isomorphic(const CircuitGraph& a, const CircuitGraph& b)
{
    const int n = a.num_nodes();
    if (n != b.num_nodes() || a.num_edges() != b.num_edges()) return false;
    auto sorted_edges = [](std::vector<Edge> es) {
        std::sort(es.begin(), es.end());
        return es;
    };
    const auto target = sorted_edges(b.edges());
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    do {
        bool ok = true;
        for (int u = 0; u < n && ok; ++u)
            ok = a.nodes()[u].kind == b.nodes()[perm[u]].kind && a.nodes()[u].label == b.nodes()[perm[u]].label;
        if (!ok) continue;
        std::vector<Edge> mapped;
        for (const auto& e : a.edges()) mapped.push_back({perm[e.component], perm[e.net], e.kind});
        if (sorted_edges(mapped) == target) return true;
    } while (std::next_permutation(perm.begin(), perm.end()));
    return false;
}

/// Every state visited by uniform masked rollouts on `task`.
inline std::vector<CircuitGraph> visited_states(const TaskSpec& task, int episodes, std::uint64_t seed,
                                                bool use_symmetry = true)
{
    EnvConfig ec;
    ec.use_symmetry = use_symmetry;
    ec.defer_evaluation = true;
    Environment env(task, ec);
    UniformSampler uniform;
    std::mt19937_64 rng(seed);
    std::vector<CircuitGraph> out;
    for (int i = 0; i < episodes; ++i) {
        auto t = run_episode(env, uniform, rng());
        for (auto& s : t.steps) out.push_back(std::move(s.state));
        out.push_back(std::move(t.final_state));
    }
    return out;
}

inline std::vector<int> random_permutation(int n, std::mt19937_64& rng)
{
    std::vector<int> p(static_cast<std::size_t>(n));
    std::iota(p.begin(), p.end(), 0);
    std::shuffle(p.begin(), p.end(), rng);
    return p;
}

} // namespace fixtures
