#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "astrl/error.hpp"
#include "astrl/hash.hpp"

namespace astrl {

using NodeId = int;

enum class NodeKind : std::uint8_t {
    Nmos,
    Pmos,
    Resistor,
    Capacitor,
    GenericNet,
    SupplyNet,
    GroundNet,
    IoNet,
};

inline constexpr int kNodeKinds = 8;

enum class EdgeKind : std::uint8_t {
    Gate,
    Drain,
    Source,
    Bulk,
    PassivePlus,
    PassiveMinus,
};

inline constexpr int kEdgeKinds = 6;

inline constexpr std::array<NodeKind, kNodeKinds> kAllNodeKinds = {
    NodeKind::Nmos, NodeKind::Pmos, NodeKind::Resistor, NodeKind::Capacitor,
    NodeKind::GenericNet, NodeKind::SupplyNet, NodeKind::GroundNet, NodeKind::IoNet};

inline constexpr std::array<EdgeKind, kEdgeKinds> kAllEdgeKinds = {
    EdgeKind::Gate, EdgeKind::Drain, EdgeKind::Source,
    EdgeKind::Bulk, EdgeKind::PassivePlus, EdgeKind::PassiveMinus};

constexpr int index_of(NodeKind k) noexcept { return static_cast<int>(k); }
constexpr int index_of(EdgeKind k) noexcept { return static_cast<int>(k); }

constexpr bool is_transistor(NodeKind k) noexcept { return k == NodeKind::Nmos || k == NodeKind::Pmos; }
constexpr bool is_passive(NodeKind k) noexcept { return k == NodeKind::Resistor || k == NodeKind::Capacitor; }
constexpr bool is_component(NodeKind k) noexcept { return is_transistor(k) || is_passive(k); }
constexpr bool is_net(NodeKind k) noexcept { return !is_component(k); }
constexpr bool is_special_net(NodeKind k) noexcept { return k == NodeKind::SupplyNet || k == NodeKind::GroundNet; }

constexpr bool is_transistor_terminal(EdgeKind k) noexcept
{
    return k == EdgeKind::Gate || k == EdgeKind::Drain || k == EdgeKind::Source || k == EdgeKind::Bulk;
}

/// True iff `terminal` exists on a device of kind `device`.
constexpr bool terminal_legal(NodeKind device, EdgeKind terminal) noexcept
{
    if (is_transistor(device)) return is_transistor_terminal(terminal);
    if (is_passive(device)) return !is_transistor_terminal(terminal);
    return false;
}

/// Mirror-image terminal of a common-mode device straddling a symmetric net pair.
constexpr EdgeKind complementary(EdgeKind k) noexcept
{
    switch (k) {
    case EdgeKind::Drain: return EdgeKind::Source;
    case EdgeKind::Source: return EdgeKind::Drain;
    case EdgeKind::PassivePlus: return EdgeKind::PassiveMinus;
    case EdgeKind::PassiveMinus: return EdgeKind::PassivePlus;
    default: return k;
    }
}

constexpr std::string_view to_string(NodeKind k) noexcept
{
    switch (k) {
    case NodeKind::Nmos: return "NMOS";
    case NodeKind::Pmos: return "PMOS";
    case NodeKind::Resistor: return "Resistor";
    case NodeKind::Capacitor: return "Capacitor";
    case NodeKind::GenericNet: return "GenericNet";
    case NodeKind::SupplyNet: return "SupplyNet";
    case NodeKind::GroundNet: return "GroundNet";
    case NodeKind::IoNet: return "IoNet";
    }
    return "?";
}

constexpr std::string_view to_string(EdgeKind k) noexcept
{
    switch (k) {
    case EdgeKind::Gate: return "Gate";
    case EdgeKind::Drain: return "Drain";
    case EdgeKind::Source: return "Source";
    case EdgeKind::Bulk: return "Bulk";
    case EdgeKind::PassivePlus: return "PassivePlus";
    case EdgeKind::PassiveMinus: return "PassiveMinus";
    }
    return "?";
}

inline NodeKind node_kind_from_string(std::string_view s)
{
    for (auto k : kAllNodeKinds)
        if (to_string(k) == s) return k;
    throw Error(Errc::ParseError, "unknown node kind '" + std::string(s) + "'");
}

inline EdgeKind edge_kind_from_string(std::string_view s)
{
    for (auto k : kAllEdgeKinds)
        if (to_string(k) == s) return k;
    throw Error(Errc::ParseError, "unknown edge kind '" + std::string(s) + "'");
}

/// Build-level switches that change which terminals exist in the action space.
struct GraphConfig {
    /// When false, bulk pins are tied at netlisting (NMOS to ground, PMOS to supply)
    /// and never appear as edges.
    bool explicit_bulk = false;
};

/// Terminals a device must have bound before the design can terminate.
inline std::vector<EdgeKind> required_terminals(NodeKind device, const GraphConfig& cfg)
{
    if (is_transistor(device)) {
        if (cfg.explicit_bulk) return {EdgeKind::Gate, EdgeKind::Drain, EdgeKind::Source, EdgeKind::Bulk};
        return {EdgeKind::Gate, EdgeKind::Drain, EdgeKind::Source};
    }
    if (is_passive(device)) return {EdgeKind::PassivePlus, EdgeKind::PassiveMinus};
    return {};
}

struct Node {
    NodeKind kind;
    std::string label; // only meaningful for IoNet

    bool operator==(const Node&) const = default;
};

/// Stored with the component endpoint first; undirected semantics.
struct Edge {
    NodeId component;
    NodeId net;
    EdgeKind kind;

    bool operator==(const Edge&) const = default;
    auto operator<=>(const Edge&) const = default;
};

enum class SymmetryClass { CommonMode, SymmetricPairMember };

/// Partial involution over node ids; nodes outside its domain are common-mode.
class SymmetryRegistry {
public:
    [[nodiscard]] bool is_symmetric(NodeId u) const { return u >= 0 && u < size() && mirror_[u] >= 0; }
    [[nodiscard]] std::optional<NodeId> mirror(NodeId u) const
    {
        if (!is_symmetric(u)) return std::nullopt;
        return mirror_[u];
    }
    [[nodiscard]] int size() const { return static_cast<int>(mirror_.size()); }

    void grow(int n) { mirror_.resize(static_cast<std::size_t>(n), -1); }

    void pair(NodeId a, NodeId b)
    {
        if (a == b || a < 0 || b < 0 || a >= size() || b >= size())
            throw Error(Errc::UnregisteredNode, "invalid symmetric pair");
        mirror_[a] = b;
        mirror_[b] = a;
    }

    void clear() { std::fill(mirror_.begin(), mirror_.end(), -1); }

    [[nodiscard]] std::vector<std::pair<NodeId, NodeId>> pairs() const
    {
        std::vector<std::pair<NodeId, NodeId>> out;
        for (int i = 0; i < size(); ++i)
            if (mirror_[i] > i) out.emplace_back(i, mirror_[i]);
        return out;
    }

    [[nodiscard]] std::vector<NodeId> common_mode() const
    {
        std::vector<NodeId> out;
        for (int i = 0; i < size(); ++i)
            if (mirror_[i] < 0) out.push_back(i);
        return out;
    }

    /// Involution holds: phi(phi(u)) = u and phi(u) != u on the domain.
    [[nodiscard]] bool is_involution() const
    {
        for (int i = 0; i < size(); ++i) {
            int m = mirror_[i];
            if (m < 0) continue;
            if (m == i || m >= size() || mirror_[m] != i) return false;
        }
        return true;
    }

    bool operator==(const SymmetryRegistry&) const = default;

private:
    std::vector<NodeId> mirror_;
};

class CircuitGraph {
public:
    CircuitGraph() = default;

    [[nodiscard]] int num_nodes() const { return static_cast<int>(nodes_.size()); }
    [[nodiscard]] int num_edges() const { return static_cast<int>(edges_.size()); }
    [[nodiscard]] bool empty() const { return nodes_.empty(); }
    [[nodiscard]] const std::vector<Node>& nodes() const { return nodes_; }
    [[nodiscard]] const std::vector<Edge>& edges() const { return edges_; }
    [[nodiscard]] const Node& node(NodeId u) const { check_node(u); return nodes_[u]; }
    [[nodiscard]] NodeKind kind(NodeId u) const { return node(u).kind; }
    [[nodiscard]] bool is_component_node(NodeId u) const { return is_component(kind(u)); }
    [[nodiscard]] bool contains(NodeId u) const { return u >= 0 && u < num_nodes(); }

    [[nodiscard]] const SymmetryRegistry& symmetry() const { return symmetry_; }
    SymmetryRegistry& symmetry() { return symmetry_; }

    [[nodiscard]] const std::string& tag() const { return tag_; }
    void set_tag(std::string t) { tag_ = std::move(t); }

    /// Edge indices incident to `u`.
    [[nodiscard]] const std::vector<int>& incident(NodeId u) const { check_node(u); return incident_[u]; }

    [[nodiscard]] std::optional<NodeId> find_kind(NodeKind k) const
    {
        for (int i = 0; i < num_nodes(); ++i)
            if (nodes_[i].kind == k) return i;
        return std::nullopt;
    }

    [[nodiscard]] std::optional<NodeId> find_io(std::string_view label) const
    {
        for (int i = 0; i < num_nodes(); ++i)
            if (nodes_[i].kind == NodeKind::IoNet && nodes_[i].label == label) return i;
        return std::nullopt;
    }

    NodeId add_node(NodeKind kind, std::string label = {})
    {
        if (is_special_net(kind) && find_kind(kind))
            throw Error(Errc::DuplicateSpecialNet, std::string(to_string(kind)) + " already present");
        return push_node(kind, std::move(label));
    }

    NodeId add_node(NodeKind kind, SymmetryClass cls, std::string label = {})
    {
        if (cls == SymmetryClass::SymmetricPairMember && is_special_net(kind))
            throw Error(Errc::DuplicateSpecialNet, "special nets are common-mode");
        return add_node(kind, std::move(label));
    }

    /// Adds two mirrored nodes of the same kind.
    std::pair<NodeId, NodeId> add_node_pair(NodeKind kind, std::string label_a = {}, std::string label_b = {})
    {
        if (is_special_net(kind)) throw Error(Errc::DuplicateSpecialNet, "special nets are common-mode");
        NodeId a = push_node(kind, std::move(label_a));
        NodeId b = push_node(kind, std::move(label_b));
        symmetry_.pair(a, b);
        return {a, b};
    }

    /// Raw node insertion (duplicate special nets allowed); for counterexamples.
    NodeId add_node_unchecked(NodeKind kind, std::string label = {}) { return push_node(kind, std::move(label)); }

    std::pair<NodeId, NodeId> add_node_pair_unchecked(NodeKind kind)
    {
        NodeId a = push_node(kind, {});
        NodeId b = push_node(kind, {});
        symmetry_.pair(a, b);
        return {a, b};
    }

    /// Checked insertion; exactly one endpoint must be a component.
    void add_edge(NodeId u, NodeId v, EdgeKind kind)
    {
        check_node(u);
        check_node(v);
        bool cu = is_component(nodes_[u].kind), cv = is_component(nodes_[v].kind);
        if (!cu && !cv) throw Error(Errc::NetNetEdge, "edge between two nets");
        if (cu && cv) throw Error(Errc::ComponentComponentEdge, "edge between two components");
        NodeId c = cu ? u : v, n = cu ? v : u;
        if (!terminal_legal(nodes_[c].kind, kind))
            throw Error(Errc::IllegalTerminalKind,
                        std::string(to_string(kind)) + " on " + std::string(to_string(nodes_[c].kind)));
        if (terminals_[c][index_of(kind)] >= 0)
            throw Error(Errc::TerminalOccupied, std::string(to_string(kind)) + " of node " + std::to_string(c));
        push_edge(c, n, kind);
    }

    /// Raw insertion without legality checks; used to build counterexamples.
    void add_edge_unchecked(NodeId u, NodeId v, EdgeKind kind)
    {
        check_node(u);
        check_node(v);
        bool cv = is_component(nodes_[v].kind);
        if (cv && !is_component(nodes_[u].kind)) std::swap(u, v);
        push_edge(u, v, kind);
    }

    /// Removes the edge (component, net, kind) if present.
    bool remove_edge(NodeId component, NodeId net, EdgeKind kind)
    {
        auto it = std::find(edges_.begin(), edges_.end(), Edge{component, net, kind});
        if (it == edges_.end()) return false;
        edges_.erase(it);
        rebuild_indices();
        return true;
    }

    /// Net attached to `terminal` of component `c`, if any.
    [[nodiscard]] std::optional<NodeId> terminal_net(NodeId c, EdgeKind terminal) const
    {
        check_node(c);
        int n = terminals_[c][index_of(terminal)];
        if (n < 0) return std::nullopt;
        return n;
    }

    [[nodiscard]] bool terminal_free(NodeId c, EdgeKind terminal) const
    {
        return terminals_[c][index_of(terminal)] < 0;
    }

    [[nodiscard]] bool has_edge(NodeId component, NodeId net, EdgeKind kind) const
    {
        return std::find(edges_.begin(), edges_.end(), Edge{component, net, kind}) != edges_.end();
    }

    /// Terminal kinds of `u`'s device class with no incident edge.
    [[nodiscard]] std::vector<EdgeKind> free_terminals(NodeId u, const GraphConfig& cfg = {}) const
    {
        check_node(u);
        if (!is_component(nodes_[u].kind)) throw Error(Errc::NotAComponent, "node " + std::to_string(u));
        std::vector<EdgeKind> out;
        for (auto k : required_terminals(nodes_[u].kind, cfg))
            if (terminals_[u][index_of(k)] < 0) out.push_back(k);
        return out;
    }

    /// Total unbound required terminals over all components.
    [[nodiscard]] int free_terminal_count(const GraphConfig& cfg = {}) const
    {
        return free_count_[cfg.explicit_bulk ? 1 : 0];
    }

    [[nodiscard]] bool has_free_terminal(NodeId u, const GraphConfig& cfg = {}) const
    {
        for (auto k : required_terminals(nodes_[u].kind, cfg))
            if (terminals_[u][index_of(k)] < 0) return true;
        return false;
    }

    [[nodiscard]] std::optional<NodeId> mirror(NodeId u) const
    {
        if (!contains(u)) throw Error(Errc::UnregisteredNode, "node " + std::to_string(u));
        return symmetry_.mirror(u);
    }

    bool operator==(const CircuitGraph& o) const
    {
        return nodes_ == o.nodes_ && edges_ == o.edges_ && symmetry_ == o.symmetry_ && tag_ == o.tag_;
    }

private:
    void check_node(NodeId u) const
    {
        if (u < 0 || u >= num_nodes()) throw Error(Errc::UnregisteredNode, "node " + std::to_string(u));
    }

    NodeId push_node(NodeKind kind, std::string label)
    {
        nodes_.push_back(Node{kind, std::move(label)});
        incident_.emplace_back();
        std::array<int, kEdgeKinds> free{};
        free.fill(-1);
        terminals_.push_back(free);
        symmetry_.grow(num_nodes());
        free_count_[0] += static_cast<int>(required_terminals(kind, GraphConfig{false}).size());
        free_count_[1] += static_cast<int>(required_terminals(kind, GraphConfig{true}).size());
        return num_nodes() - 1;
    }

    void push_edge(NodeId c, NodeId n, EdgeKind kind)
    {
        int idx = num_edges();
        edges_.push_back(Edge{c, n, kind});
        incident_[c].push_back(idx);
        if (n != c) incident_[n].push_back(idx);
        if (terminals_[c][index_of(kind)] < 0 && terminal_legal(nodes_[c].kind, kind)) {
            terminals_[c][index_of(kind)] = n;
            if (kind != EdgeKind::Bulk) --free_count_[0];
            --free_count_[1];
        }
    }

    void rebuild_indices()
    {
        for (auto& v : incident_) v.clear();
        for (auto& t : terminals_) t.fill(-1);
        free_count_ = {0, 0};
        for (const auto& nd : nodes_) {
            free_count_[0] += static_cast<int>(required_terminals(nd.kind, GraphConfig{false}).size());
            free_count_[1] += static_cast<int>(required_terminals(nd.kind, GraphConfig{true}).size());
        }
        auto old = std::move(edges_);
        edges_.clear();
        for (const auto& e : old) push_edge(e.component, e.net, e.kind);
    }

    std::vector<Node> nodes_;
    std::vector<Edge> edges_;
    std::vector<std::vector<int>> incident_;
    std::vector<std::array<int, kEdgeKinds>> terminals_;
    SymmetryRegistry symmetry_;
    std::string tag_;
    std::array<int, 2> free_count_{0, 0}; // auto-bulk, explicit-bulk
};

struct ValidityReport {
    bool all_terminals_bound = false;
    bool connected = false;
    bool no_net_net = false;
    bool no_component_component = false;
    bool terminal_multiplicity_ok = false;
    bool terminal_kinds_legal = false;
    bool special_nets_unique = false;
    bool supply_present = false;
    bool ground_present = false;
    bool supply_ground_path = false;
    bool complete = false;

    /// No structural rule is broken; terminals may still be unbound.
    [[nodiscard]] bool partially_valid() const
    {
        return connected && no_net_net && no_component_component && terminal_multiplicity_ok &&
               terminal_kinds_legal && special_nets_unique;
    }

    [[nodiscard]] int violation_count() const
    {
        return !connected + !no_net_net + !no_component_component + !terminal_multiplicity_ok +
               !terminal_kinds_legal + !special_nets_unique;
    }
};

/// Checks every structural rule directly from the edge list. Shares no code
/// with the action masks so it can serve as their oracle.
inline ValidityReport validate_structure(const CircuitGraph& g, const GraphConfig& cfg = {})
{
    ValidityReport r;
    const int n = g.num_nodes();
    const auto& nodes = g.nodes();

    int supplies = 0, grounds = 0;
    for (const auto& nd : nodes) {
        supplies += nd.kind == NodeKind::SupplyNet;
        grounds += nd.kind == NodeKind::GroundNet;
    }
    r.supply_present = supplies >= 1;
    r.ground_present = grounds >= 1;
    r.special_nets_unique = supplies <= 1 && grounds <= 1;

    r.no_net_net = true;
    r.no_component_component = true;
    r.terminal_kinds_legal = true;
    r.terminal_multiplicity_ok = true;
    std::vector<std::array<int, kEdgeKinds>> count(static_cast<std::size_t>(n));
    for (auto& c : count) c.fill(0);
    std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
    for (const auto& e : g.edges()) {
        bool cu = is_component(nodes[e.component].kind), cv = is_component(nodes[e.net].kind);
        if (!cu && !cv) r.no_net_net = false;
        if (cu && cv) r.no_component_component = false;
        if (cu && !cv) {
            if (!terminal_legal(nodes[e.component].kind, e.kind)) r.terminal_kinds_legal = false;
            if (!cfg.explicit_bulk && e.kind == EdgeKind::Bulk) r.terminal_kinds_legal = false;
            if (++count[e.component][index_of(e.kind)] > 1) r.terminal_multiplicity_ok = false;
        }
        adj[e.component].push_back(e.net);
        adj[e.net].push_back(e.component);
    }

    r.all_terminals_bound = true;
    for (int u = 0; u < n; ++u) {
        if (!is_component(nodes[u].kind)) continue;
        for (auto k : required_terminals(nodes[u].kind, cfg))
            if (count[u][index_of(k)] == 0) r.all_terminals_bound = false;
    }

    if (n == 0) {
        r.connected = true;
    } else {
        std::vector<char> seen(static_cast<std::size_t>(n), 0);
        std::vector<int> stack{0};
        seen[0] = 1;
        int reached = 1;
        while (!stack.empty()) {
            int u = stack.back();
            stack.pop_back();
            for (int v : adj[u])
                if (!seen[v]) { seen[v] = 1; ++reached; stack.push_back(v); }
        }
        r.connected = reached == n;
    }

    // DC conduction through MOS channels and resistors only.
    auto supply = g.find_kind(NodeKind::SupplyNet), ground = g.find_kind(NodeKind::GroundNet);
    if (supply && ground) {
        std::vector<std::vector<int>> channel_nets(static_cast<std::size_t>(n));
        for (const auto& e : g.edges()) {
            if (!is_component(nodes[e.component].kind) || is_component(nodes[e.net].kind)) continue;
            NodeKind dk = nodes[e.component].kind;
            bool conducts = (is_transistor(dk) && (e.kind == EdgeKind::Drain || e.kind == EdgeKind::Source)) ||
                            (dk == NodeKind::Resistor);
            if (conducts) channel_nets[e.component].push_back(e.net);
        }
        std::vector<std::vector<int>> net_adj(static_cast<std::size_t>(n));
        for (int c = 0; c < n; ++c)
            for (std::size_t i = 0; i < channel_nets[c].size(); ++i)
                for (std::size_t j = 0; j < channel_nets[c].size(); ++j)
                    if (i != j) net_adj[channel_nets[c][i]].push_back(channel_nets[c][j]);
        std::vector<char> seen(static_cast<std::size_t>(n), 0);
        std::vector<int> stack{*supply};
        seen[*supply] = 1;
        while (!stack.empty()) {
            int u = stack.back();
            stack.pop_back();
            for (int v : net_adj[u])
                if (!seen[v]) { seen[v] = 1; stack.push_back(v); }
        }
        r.supply_ground_path = seen[*ground] != 0;
    }

    r.complete = r.partially_valid() && r.all_terminals_bound && r.supply_present && r.ground_present &&
                 r.supply_ground_path;
    return r;
}

/// Image of an edge under the mirror map. A common-mode device bridging a
/// symmetric net pair swaps its drain/source (or plus/minus) terminals.
inline Edge mirror_edge(const CircuitGraph& g, const Edge& e)
{
    const auto& sym = g.symmetry();
    bool cs = sym.is_symmetric(e.component), ns = sym.is_symmetric(e.net);
    Edge out = e;
    if (cs) out.component = *sym.mirror(e.component);
    if (ns) out.net = *sym.mirror(e.net);
    if (!cs && ns) out.kind = complementary(e.kind);
    return out;
}

/// The mirror map is an involution between same-kind nodes that carries
/// every edge onto an edge.
inline bool symmetry_consistent(const CircuitGraph& g)
{
    const auto& sym = g.symmetry();
    if (sym.size() != g.num_nodes() || !sym.is_involution()) return false;
    for (auto [a, b] : sym.pairs()) {
        if (g.kind(a) != g.kind(b) || is_special_net(g.kind(a))) return false;
    }
    std::set<Edge> edges(g.edges().begin(), g.edges().end());
    for (const auto& e : g.edges())
        if (!edges.contains(mirror_edge(g, e))) return false;
    return true;
}

/// Per-node colours from iterated refinement seeded by node kind, IO label
/// and sorted incident terminal kinds. Invariant under node relabelling.
inline std::vector<std::uint64_t> wl_node_colors(const CircuitGraph& g)
{
    const int n = g.num_nodes();
    std::vector<std::uint64_t> color(static_cast<std::size_t>(n));
    for (int u = 0; u < n; ++u) {
        const auto& nd = g.nodes()[u];
        std::vector<int> kinds;
        for (int ei : g.incident(u)) kinds.push_back(index_of(g.edges()[ei].kind));
        std::sort(kinds.begin(), kinds.end());
        std::uint64_t h = hash_mix(0x9e3779b97f4a7c15ULL, static_cast<std::uint64_t>(index_of(nd.kind)));
        if (nd.kind == NodeKind::IoNet) h = hash_mix(h, fnv1a(nd.label));
        for (int k : kinds) h = hash_mix(h, static_cast<std::uint64_t>(k) + 1);
        color[u] = h;
    }
    auto class_count = [](std::vector<std::uint64_t> c) {
        std::sort(c.begin(), c.end());
        return std::unique(c.begin(), c.end()) - c.begin();
    };
    auto classes = class_count(color);
    for (int round = 0; round < n; ++round) {
        std::vector<std::uint64_t> next(static_cast<std::size_t>(n));
        for (int u = 0; u < n; ++u) {
            std::vector<std::uint64_t> msgs;
            for (int ei : g.incident(u)) {
                const auto& e = g.edges()[ei];
                int v = e.component == u ? e.net : e.component;
                msgs.push_back(hash_mix(color[v], static_cast<std::uint64_t>(index_of(e.kind)) + 17));
            }
            std::sort(msgs.begin(), msgs.end());
            std::uint64_t h = hash_mix(color[u], 0xabcdef);
            for (auto m : msgs) h = hash_mix(h, m);
            next[u] = h;
        }
        color = std::move(next);
        auto c = class_count(color);
        if (c == classes && round > 0) break;
        classes = c;
    }
    return color;
}

/// Graph fingerprint from the refined colours. Equal for isomorphic graphs.
inline std::uint64_t canonical_hash(const CircuitGraph& g)
{
    auto color = wl_node_colors(g);
    const int n = g.num_nodes();
    std::sort(color.begin(), color.end());
    std::uint64_t h = hash_mix(static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(g.num_edges()));
    for (auto c : color) h = hash_mix(h, c);
    return h;
}

/// Relabels node ids: node u of `g` becomes node perm[u] of the result.
inline CircuitGraph permute_nodes(const CircuitGraph& g, const std::vector<int>& perm)
{
    const int n = g.num_nodes();
    std::vector<int> inverse(static_cast<std::size_t>(n));
    for (int u = 0; u < n; ++u) inverse[perm[u]] = u;
    CircuitGraph out;
    for (int i = 0; i < n; ++i) {
        const auto& nd = g.nodes()[inverse[i]];
        out.add_node(nd.kind, nd.label);
    }
    for (const auto& e : g.edges()) out.add_edge_unchecked(perm[e.component], perm[e.net], e.kind);
    for (auto [a, b] : g.symmetry().pairs()) out.symmetry().pair(perm[a], perm[b]);
    out.set_tag(g.tag());
    return out;
}

} // namespace astrl
