#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "astrl/graph.hpp"

namespace astrl {

/// Symmetric addition modifiers. Each expands one sampled edge into the
/// edits that keep the mirror map an automorphism.
enum class Modifier : std::uint8_t {
    SingleCommonMode,          // CM source -> CM target, one edge
    SymmetricPair,             // symmetric source -> symmetric target, edge mirrored
    PairToCommonModeComponent, // symmetric net pair -> CM device, second edge on complementary pin
    PairToCommonModeNet,       // symmetric device pair -> CM net, identical pins
    CommonModeToPair,          // CM net -> new symmetric device pair
};

inline constexpr int kModifiers = 5;
inline constexpr int kHeads = 5;

constexpr std::string_view to_string(Modifier m) noexcept
{
    switch (m) {
    case Modifier::SingleCommonMode: return "single_common_mode";
    case Modifier::SymmetricPair: return "symmetric_pair";
    case Modifier::PairToCommonModeComponent: return "pair_to_cm_component";
    case Modifier::PairToCommonModeNet: return "pair_to_cm_net";
    case Modifier::CommonModeToPair: return "cm_to_pair";
    }
    return "?";
}

/// One agent decision. Target indices >= |V| request a new node of kind
/// kAllNodeKinds[target - |V|]. A negative source means the construction
/// heads were not sampled (forced termination).
struct Action {
    int source = -1;
    int target = -1;
    int edge_kind = -1;
    int addition_type = -1;
    int terminate = 0;

    [[nodiscard]] bool has_construction() const { return source >= 0; }
    [[nodiscard]] std::array<int, kHeads> as_array() const
    {
        return {source, target, edge_kind, addition_type, terminate};
    }
    bool operator==(const Action&) const = default;
};

struct ActionConfig {
    GraphConfig graph;
    int max_nodes = 48;
    bool use_symmetry = true;
    /// Construction steps left in the episode, counting the current one; < 0 means
    /// unlimited. A construction is legal only if the unbound terminals it leaves
    /// can still be bound one per remaining step.
    int steps_left = -1;
};

using Mask = std::vector<std::uint8_t>;

struct MaskSet {
    Mask source;
    Mask target;
    Mask edge;
    Mask addition;
    Mask terminate;
};

inline int count_ones(const Mask& m)
{
    int n = 0;
    for (auto b : m) n += b != 0;
    return n;
}

inline bool any_set(const Mask& m)
{
    for (auto b : m)
        if (b) return true;
    return false;
}

namespace detail {

struct TargetInfo {
    bool is_new = false;
    NodeKind kind{};
};

inline std::optional<TargetInfo> decode_target(const CircuitGraph& g, int target)
{
    const int n = g.num_nodes();
    if (target < 0 || target >= n + kNodeKinds) return std::nullopt;
    if (target < n) return TargetInfo{false, g.kind(target)};
    return TargetInfo{true, kAllNodeKinds[static_cast<std::size_t>(target - n)]};
}

inline bool pin_ok(const CircuitGraph& g, const ActionConfig& cfg, NodeKind device, EdgeKind k)
{
    (void)g;
    if (!terminal_legal(device, k)) return false;
    if (!cfg.graph.explicit_bulk && k == EdgeKind::Bulk) return false;
    return true;
}

} // namespace detail

namespace detail {

inline bool construction_legal(const CircuitGraph& g, const ActionConfig& cfg, int source, int target,
                               int edge_kind, int modifier)
{
    const int n = g.num_nodes();
    if (source < 0 || source >= n) return false;
    if (edge_kind < 0 || edge_kind >= kEdgeKinds || modifier < 0 || modifier >= kModifiers) return false;
    auto ti = detail::decode_target(g, target);
    if (!ti) return false;
    const auto m = static_cast<Modifier>(modifier);
    if (!cfg.use_symmetry && m != Modifier::SingleCommonMode) return false;

    const NodeKind sk = g.kind(source);
    const NodeKind tk = ti->kind;
    if (is_component(sk) == is_component(tk)) return false;
    if (ti->is_new) {
        if (tk == NodeKind::IoNet) return false;
        if (is_special_net(tk) && g.find_kind(tk)) return false;
    }
    const auto k = static_cast<EdgeKind>(edge_kind);
    const bool src_comp = is_component(sk);
    const NodeKind device = src_comp ? sk : tk;
    if (!detail::pin_ok(g, cfg, device, k)) return false;

    const auto& sym = g.symmetry();
    const bool s_sym = sym.is_symmetric(source);
    const bool t_sym = !ti->is_new && sym.is_symmetric(target);
    auto free_on = [&](int node, EdgeKind pin) { return node >= n || g.terminal_free(node, pin); };
    auto fits = [&](int added) { return n + added <= cfg.max_nodes; };

    switch (m) {
    case Modifier::SingleCommonMode: {
        if (s_sym || t_sym) return false;
        if (ti->is_new && !fits(1)) return false;
        return free_on(src_comp ? source : target, k);
    }
    case Modifier::SymmetricPair: {
        if (!s_sym) return false;
        if (ti->is_new) {
            if (is_special_net(tk) || !fits(2)) return false;
        } else if (!t_sym) {
            return false;
        }
        const int ms = *sym.mirror(source);
        if (src_comp) return g.terminal_free(source, k) && g.terminal_free(ms, k);
        if (ti->is_new) return true;
        return g.terminal_free(target, k) && g.terminal_free(*sym.mirror(target), k);
    }
    case Modifier::PairToCommonModeComponent: {
        if (!s_sym || src_comp || t_sym) return false;
        if (complementary(k) == k) return false;
        if (ti->is_new) return fits(1);
        return g.terminal_free(target, k) && g.terminal_free(target, complementary(k));
    }
    case Modifier::PairToCommonModeNet: {
        if (!s_sym || !src_comp || t_sym) return false;
        if (ti->is_new && !fits(1)) return false;
        return g.terminal_free(source, k) && g.terminal_free(*sym.mirror(source), k);
    }
    case Modifier::CommonModeToPair: {
        if (s_sym || !ti->is_new || src_comp) return false;
        return fits(2);
    }
    }
    return false;
}

/// Unbound terminals after the construction: new devices add their pins, each
/// added edge binds one.
inline int free_terminals_after(const CircuitGraph& g, const ActionConfig& cfg, int target, int modifier)
{
    const int n = g.num_nodes();
    int added_pins = 0, edges = 1;
    const auto m = static_cast<Modifier>(modifier);
    if (m != Modifier::SingleCommonMode) edges = 2;
    if (target >= n) {
        const NodeKind tk = kAllNodeKinds[static_cast<std::size_t>(target - n)];
        const int pins = static_cast<int>(required_terminals(tk, cfg.graph).size());
        const bool pair = m == Modifier::SymmetricPair || m == Modifier::CommonModeToPair;
        added_pins = pair ? 2 * pins : pins;
    }
    return g.free_terminal_count(cfg.graph) + added_pins - edges;
}

} // namespace detail

/// Whether the full construction (source, target, edge kind, modifier) is a
/// legal edit of `g`. Masks for every head are existence projections of this.
inline bool construction_valid(const CircuitGraph& g, const ActionConfig& cfg, int source, int target,
                               int edge_kind, int modifier)
{
    if (cfg.steps_left == 0) return false;
    if (!detail::construction_legal(g, cfg, source, target, edge_kind, modifier)) return false;
    if (cfg.steps_left > 0 && detail::free_terminals_after(g, cfg, target, modifier) > cfg.steps_left - 1)
        return false;
    return true;
}

/// Edits one construction expands into. New nodes receive ids |V|, |V|+1, ...
/// in order; `pair_with_next` marks a node mirrored with the following one.
struct EditPlan {
    struct NewNode {
        NodeKind kind;
        bool pair_with_next = false;
    };
    std::vector<NewNode> new_nodes;
    std::vector<Edge> edges; // (endpoint a, endpoint b, pin); endpoint order not normalised
};

/// Modifier semantics without legality checks beyond the modifier's role
/// requirements (which endpoints are symmetric or common-mode). Returns
/// nullopt when the roles do not fit.
inline std::optional<EditPlan> expand_construction(const CircuitGraph& g, const ActionConfig& cfg, const Action& a)
{
    const int n = g.num_nodes();
    if (a.source < 0 || a.source >= n || a.edge_kind < 0 || a.edge_kind >= kEdgeKinds) return std::nullopt;
    if (a.addition_type < 0 || a.addition_type >= kModifiers) return std::nullopt;
    auto ti = detail::decode_target(g, a.target);
    if (!ti) return std::nullopt;
    const auto m = static_cast<Modifier>(a.addition_type);
    if (!cfg.use_symmetry && m != Modifier::SingleCommonMode) return std::nullopt;
    const auto& sym = g.symmetry();
    const bool s_sym = sym.is_symmetric(a.source);
    const bool t_sym = !ti->is_new && sym.is_symmetric(a.target);
    const auto k = static_cast<EdgeKind>(a.edge_kind);

    EditPlan plan;
    int t = a.target;
    int t_mirror = -1;
    auto add_new = [&](bool pair) {
        t = n;
        plan.new_nodes.push_back({ti->kind, pair});
        if (pair) {
            plan.new_nodes.push_back({ti->kind, false});
            t_mirror = n + 1;
        }
    };

    switch (m) {
    case Modifier::SingleCommonMode:
        if (s_sym || t_sym) return std::nullopt;
        if (ti->is_new) add_new(false);
        plan.edges.push_back({a.source, t, k});
        break;
    case Modifier::SymmetricPair:
        if (!s_sym) return std::nullopt;
        if (ti->is_new) add_new(true);
        else if (!t_sym) return std::nullopt;
        else t_mirror = *sym.mirror(t);
        plan.edges.push_back({a.source, t, k});
        plan.edges.push_back({*sym.mirror(a.source), t_mirror, k});
        break;
    case Modifier::PairToCommonModeComponent:
        if (!s_sym || t_sym || !is_component(ti->kind)) return std::nullopt;
        if (ti->is_new) add_new(false);
        plan.edges.push_back({a.source, t, k});
        plan.edges.push_back({*sym.mirror(a.source), t, complementary(k)});
        break;
    case Modifier::PairToCommonModeNet:
        if (!s_sym || t_sym || !is_net(ti->kind)) return std::nullopt;
        if (ti->is_new) add_new(false);
        plan.edges.push_back({a.source, t, k});
        plan.edges.push_back({*sym.mirror(a.source), t, k});
        break;
    case Modifier::CommonModeToPair:
        if (s_sym || !ti->is_new) return std::nullopt;
        add_new(true);
        plan.edges.push_back({a.source, t, k});
        plan.edges.push_back({a.source, t_mirror, k});
        break;
    }
    return plan;
}

/// Materialises a plan without checks; the result may violate structure.
inline CircuitGraph apply_plan_unchecked(const CircuitGraph& g, const EditPlan& plan)
{
    CircuitGraph out = g;
    for (std::size_t i = 0; i < plan.new_nodes.size(); ++i) {
        const auto& nn = plan.new_nodes[i];
        if (nn.pair_with_next) {
            out.add_node_pair_unchecked(nn.kind);
            ++i;
        } else {
            out.add_node_unchecked(nn.kind);
        }
    }
    for (const auto& e : plan.edges) out.add_edge_unchecked(e.component, e.net, e.kind);
    return out;
}

inline Mask mask_addition_type(const CircuitGraph& g, const ActionConfig& cfg, int source, int target, int edge_kind)
{
    Mask m(kModifiers, 0);
    for (int i = 0; i < kModifiers; ++i) m[i] = construction_valid(g, cfg, source, target, edge_kind, i);
    return m;
}

inline Mask mask_edge_kind(const CircuitGraph& g, const ActionConfig& cfg, int source, int target)
{
    Mask m(kEdgeKinds, 0);
    for (int k = 0; k < kEdgeKinds; ++k)
        for (int i = 0; i < kModifiers && !m[k]; ++i) m[k] = construction_valid(g, cfg, source, target, k, i);
    return m;
}

namespace detail {

inline bool target_has_completion(const CircuitGraph& g, const ActionConfig& cfg, int source, int target)
{
    for (int k = 0; k < kEdgeKinds; ++k)
        for (int i = 0; i < kModifiers; ++i)
            if (construction_valid(g, cfg, source, target, k, i)) return true;
    return false;
}

} // namespace detail

inline Mask mask_target(const CircuitGraph& g, const ActionConfig& cfg, int source)
{
    if (source < 0 || source >= g.num_nodes()) throw Error(Errc::InvalidSource, std::to_string(source));
    const int width = g.num_nodes() + kNodeKinds;
    Mask m(static_cast<std::size_t>(width), 0);
    for (int t = 0; t < width; ++t) m[t] = detail::target_has_completion(g, cfg, source, t);
    return m;
}

inline Mask mask_source(const CircuitGraph& g, const ActionConfig& cfg)
{
    if (g.empty()) throw Error(Errc::EmptyGraph, "no source candidates");
    const int n = g.num_nodes();
    Mask m(static_cast<std::size_t>(n), 0);
    for (int s = 0; s < n; ++s) {
        // Scaffold additions are the common completion; try them first.
        for (int t = n; t < n + kNodeKinds && !m[s]; ++t) m[s] = detail::target_has_completion(g, cfg, s, t);
        for (int t = 0; t < n && !m[s]; ++t) m[s] = detail::target_has_completion(g, cfg, s, t);
    }
    return m;
}

inline bool all_terminals_bound(const CircuitGraph& g, const GraphConfig& cfg)
{
    for (int u = 0; u < g.num_nodes(); ++u)
        if (g.is_component_node(u) && g.has_free_terminal(u, cfg)) return false;
    return true;
}

/// bit 0: continue, bit 1: terminate. Termination needs every pin bound,
/// unless the step limit is hit or no construction remains (forced).
inline Mask mask_terminate(const CircuitGraph& g, const ActionConfig& cfg, bool can_construct, bool at_step_limit)
{
    Mask m(2, 0);
    m[0] = can_construct && !at_step_limit;
    m[1] = all_terminals_bound(g, cfg.graph) || at_step_limit || !can_construct;
    return m;
}

struct ApplyResult {
    CircuitGraph state;
    bool applied = false;
};

/// Applies the construction heads of `a`. Invalid constructions leave the
/// state unchanged and report applied = false.
inline ApplyResult apply_action(const CircuitGraph& g, const ActionConfig& cfg, const Action& a)
{
    if (!a.has_construction() ||
        !construction_valid(g, cfg, a.source, a.target, a.edge_kind, a.addition_type))
        return {g, false};
    auto plan = expand_construction(g, cfg, a);
    if (!plan) return {g, false};
    CircuitGraph out = g;
    for (std::size_t i = 0; i < plan->new_nodes.size(); ++i) {
        const auto& nn = plan->new_nodes[i];
        if (nn.pair_with_next) {
            out.add_node_pair(nn.kind);
            ++i;
        } else {
            out.add_node(nn.kind);
        }
    }
    for (const auto& e : plan->edges) out.add_edge(e.component, e.net, e.kind);
    return {std::move(out), true};
}

} // namespace astrl
