#include <gtest/gtest.h>

#include "astrl/action.hpp"
#include "astrl/graph_io.hpp"
#include "astrl/task.hpp"
#include "fixtures.hpp"

using namespace astrl;

namespace {

int new_target(const CircuitGraph& g, NodeKind k) { return g.num_nodes() + index_of(k); }

int mod(Modifier m) { return static_cast<int>(m); }

// vss, a symmetric net pair and a common-mode net.
struct PairFixture {
    CircuitGraph g;
    int vss, n1, n2, cm;
    PairFixture()
    {
        vss = g.add_node(NodeKind::GroundNet);
        std::tie(n1, n2) = g.add_node_pair(NodeKind::GenericNet);
        cm = g.add_node(NodeKind::GenericNet);
    }
};

} // namespace

TEST(SourceMask, BoundDeviceIsNotASource)
{
    auto g = fixtures::inverter_ring(3);
    ActionConfig ac;
    const auto m = mask_source(g, ac);
    for (int u = 0; u < g.num_nodes(); ++u)
        if (g.is_component_node(u)) EXPECT_EQ(m[u], 0) << u;
}

TEST(SourceMask, PartiallyWiredScaffoldComponents)
{
    const auto task = load_task(fixtures::data("tasks/ro_toy.json"));
    const auto m = mask_source(task.scaffold, task.action_config());
    for (int u = 0; u < task.scaffold.num_nodes(); ++u)
        if (task.scaffold.is_component_node(u) && task.scaffold.has_free_terminal(u)) EXPECT_EQ(m[u], 1) << u;
}

TEST(SourceMask, LoneSupplyNetCanSeedAComponent)
{
    CircuitGraph g;
    g.add_node(NodeKind::SupplyNet);
    EXPECT_EQ(mask_source(g, ActionConfig{})[0], 1);
    EXPECT_THROW(mask_source(CircuitGraph{}, ActionConfig{}), Error);
}

TEST(TargetMask, NetSourceNeverTargetsNets)
{
    PairFixture f;
    const int m = f.g.add_node(NodeKind::Nmos);
    f.g.add_edge(m, f.vss, EdgeKind::Source);
    const auto t = mask_target(f.g, ActionConfig{}, f.cm);
    for (int u = 0; u < f.g.num_nodes(); ++u)
        if (is_net(f.g.kind(u))) EXPECT_EQ(t[u], 0);
    EXPECT_EQ(t[m], 1);
    EXPECT_EQ(t[new_target(f.g, NodeKind::GroundNet)], 0);
    EXPECT_EQ(t[new_target(f.g, NodeKind::SupplyNet)], 0);
    EXPECT_EQ(t[new_target(f.g, NodeKind::Resistor)], 1);
    EXPECT_THROW(mask_target(f.g, ActionConfig{}, 99), Error);
}

TEST(TargetMask, ComponentSourceTargetsNetsFirst)
{
    CircuitGraph g;
    const int vss = g.add_node(NodeKind::GroundNet), a = g.add_node(NodeKind::GenericNet);
    const int m = g.add_node(NodeKind::Nmos), r = g.add_node(NodeKind::Resistor);
    g.add_edge(m, vss, EdgeKind::Source);
    g.add_edge(r, a, EdgeKind::PassivePlus);
    const auto t = mask_target(g, ActionConfig{}, m);
    EXPECT_EQ(t[vss], 1);
    EXPECT_EQ(t[a], 1);
    EXPECT_EQ(t[m], 0);
    EXPECT_EQ(t[r], 0);
    EXPECT_EQ(t[new_target(g, NodeKind::Pmos)], 0);
    EXPECT_EQ(t[new_target(g, NodeKind::GroundNet)], 0);
    EXPECT_EQ(t[new_target(g, NodeKind::IoNet)], 0);
}

TEST(EdgeMask, DeviceClassAndOccupancy)
{
    CircuitGraph g;
    const int vss = g.add_node(NodeKind::GroundNet), r = g.add_node(NodeKind::Resistor);
    const auto e = mask_edge_kind(g, ActionConfig{}, vss, r);
    EXPECT_EQ(e[index_of(EdgeKind::PassivePlus)], 1);
    EXPECT_EQ(e[index_of(EdgeKind::PassiveMinus)], 1);
    for (auto k : {EdgeKind::Gate, EdgeKind::Drain, EdgeKind::Source, EdgeKind::Bulk}) EXPECT_EQ(e[index_of(k)], 0);

    ActionConfig bulk;
    bulk.graph.explicit_bulk = true;
    const int m = g.add_node(NodeKind::Nmos);
    for (auto k : {EdgeKind::Gate, EdgeKind::Drain, EdgeKind::Source}) g.add_edge(m, vss, k);
    const auto only_bulk = mask_edge_kind(g, bulk, m, vss);
    EXPECT_EQ(count_ones(only_bulk), 1);
    EXPECT_EQ(only_bulk[index_of(EdgeKind::Bulk)], 1);

    // New net from a fresh NMOS: exactly the free pins.
    const int m2 = g.add_node(NodeKind::Nmos);
    g.add_edge(m2, vss, EdgeKind::Source);
    const auto fresh = mask_edge_kind(g, ActionConfig{}, m2, new_target(g, NodeKind::GenericNet));
    Mask want(kEdgeKinds, 0);
    for (auto k : g.free_terminals(m2)) want[index_of(k)] = 1;
    EXPECT_EQ(fresh, want);
}

TEST(AdditionMask, ModifierApplicability)
{
    PairFixture f;
    const ActionConfig ac;
    const int gate = index_of(EdgeKind::Gate), plus = index_of(EdgeKind::PassivePlus);

    const auto single = mask_addition_type(f.g, ac, f.cm, new_target(f.g, NodeKind::Nmos), gate);
    EXPECT_EQ(single[mod(Modifier::SingleCommonMode)], 1);
    EXPECT_EQ(single[mod(Modifier::CommonModeToPair)], 1); // CM net may also spawn a device pair
    EXPECT_EQ(single[mod(Modifier::SymmetricPair)], 0);

    const auto bridge = mask_addition_type(f.g, ac, f.n1, new_target(f.g, NodeKind::Resistor), plus);
    EXPECT_EQ(bridge[mod(Modifier::PairToCommonModeComponent)], 1);
    EXPECT_EQ(bridge[mod(Modifier::SingleCommonMode)], 0);

    const auto pair = mask_addition_type(f.g, ac, f.n1, new_target(f.g, NodeKind::Nmos), gate);
    EXPECT_EQ(pair[mod(Modifier::SymmetricPair)], 1);
    // A gate has no complementary pin.
    EXPECT_EQ(pair[mod(Modifier::PairToCommonModeComponent)], 0);

    ActionConfig flat;
    flat.use_symmetry = false;
    const auto nosym = mask_addition_type(f.g, flat, f.cm, new_target(f.g, NodeKind::Nmos), gate);
    EXPECT_EQ(nosym, (Mask{1, 0, 0, 0, 0}));
}

TEST(ApplyAction, SingleCommonModeAddsOneNodeOneEdge)
{
    PairFixture f;
    const Action a{f.cm, new_target(f.g, NodeKind::Nmos), index_of(EdgeKind::Gate), mod(Modifier::SingleCommonMode), 0};
    const auto r = apply_action(f.g, ActionConfig{}, a);
    ASSERT_TRUE(r.applied);
    EXPECT_EQ(r.state.num_nodes(), f.g.num_nodes() + 1);
    EXPECT_EQ(r.state.num_edges(), f.g.num_edges() + 1);
    EXPECT_TRUE(r.state.has_edge(f.g.num_nodes(), f.cm, EdgeKind::Gate));
}

TEST(ApplyAction, BridgeResistorGetsComplementaryPins)
{
    PairFixture f;
    const int r = f.g.num_nodes();
    const Action a{f.n1, new_target(f.g, NodeKind::Resistor), index_of(EdgeKind::PassiveMinus),
                   mod(Modifier::PairToCommonModeComponent), 0};
    const auto out = apply_action(f.g, ActionConfig{}, a);
    ASSERT_TRUE(out.applied);
    EXPECT_TRUE(out.state.has_edge(r, f.n1, EdgeKind::PassiveMinus));
    EXPECT_TRUE(out.state.has_edge(r, f.n2, EdgeKind::PassivePlus));
    EXPECT_FALSE(out.state.symmetry().is_symmetric(r));
    EXPECT_TRUE(symmetry_consistent(out.state));
}

TEST(ApplyAction, PairModifiersKeepMirrorMap)
{
    PairFixture f;
    const ActionConfig ac;
    // Device pair on the net pair, then tie both sources to ground, then a
    // pair of loads spawned from the common-mode net.
    auto s = apply_action(f.g, ac, {f.n1, new_target(f.g, NodeKind::Nmos), index_of(EdgeKind::Drain),
                                    mod(Modifier::SymmetricPair), 0});
    ASSERT_TRUE(s.applied);
    const int m1 = f.g.num_nodes();
    auto t = apply_action(s.state, ac, {m1, f.vss, index_of(EdgeKind::Source), mod(Modifier::PairToCommonModeNet), 0});
    ASSERT_TRUE(t.applied);
    EXPECT_TRUE(t.state.has_edge(m1 + 1, f.vss, EdgeKind::Source));
    auto u = apply_action(t.state, ac, {f.cm, new_target(t.state, NodeKind::Capacitor), index_of(EdgeKind::PassivePlus),
                                        mod(Modifier::CommonModeToPair), 0});
    ASSERT_TRUE(u.applied);
    const int c1 = t.state.num_nodes();
    EXPECT_EQ(u.state.mirror(c1), c1 + 1);
    for (const auto* g : {&s.state, &t.state, &u.state}) EXPECT_TRUE(symmetry_consistent(*g));
}

TEST(ApplyAction, InvalidActionIsANoOp)
{
    PairFixture f;
    const Action net_net{f.cm, f.vss, index_of(EdgeKind::Gate), 0, 0};
    const auto r = apply_action(f.g, ActionConfig{}, net_net);
    EXPECT_FALSE(r.applied);
    EXPECT_EQ(r.state, f.g);
}

TEST(ApplyAction, Deterministic)
{
    const auto task = load_task(fixtures::data("tasks/ota_toy.json"));
    const auto states = fixtures::visited_states(task, 5, 11);
    std::mt19937_64 rng(5);
    for (const auto& g : states) {
        const auto ac = task.action_config();
        auto src = mask_source(g, ac);
        if (!any_set(src)) continue;
        Action a;
        do a.source = static_cast<int>(rng() % src.size()); while (!src[a.source]);
        auto tm = mask_target(g, ac, a.source);
        do a.target = static_cast<int>(rng() % tm.size()); while (!tm[a.target]);
        auto em = mask_edge_kind(g, ac, a.source, a.target);
        do a.edge_kind = static_cast<int>(rng() % em.size()); while (!em[a.edge_kind]);
        auto mm = mask_addition_type(g, ac, a.source, a.target, a.edge_kind);
        do a.addition_type = static_cast<int>(rng() % mm.size()); while (!mm[a.addition_type]);
        const auto x = apply_action(g, ac, a), y = apply_action(g, ac, a);
        ASSERT_TRUE(x.applied);
        EXPECT_EQ(graph_to_line(x.state), graph_to_line(y.state));
    }
}

TEST(TerminateMask, Gating)
{
    PairFixture f;
    const int m = f.g.add_node(NodeKind::Nmos);
    f.g.add_edge(m, f.vss, EdgeKind::Source);
    const ActionConfig ac;
    EXPECT_EQ(mask_terminate(f.g, ac, true, false), (Mask{1, 0}));
    EXPECT_EQ(mask_terminate(f.g, ac, true, true), (Mask{0, 1}));
    EXPECT_EQ(mask_terminate(f.g, ac, false, false), (Mask{0, 1}));
    const auto ring = fixtures::inverter_ring(3);
    EXPECT_EQ(mask_terminate(ring, ac, true, false), (Mask{1, 1}));
}

TEST(StepBudget, NothingLegalWithoutSteps)
{
    PairFixture f;
    ActionConfig ac;
    ac.steps_left = 0;
    EXPECT_FALSE(any_set(mask_source(f.g, ac)));
    // One step left: only constructions that leave no free pin.
    ac.steps_left = 1;
    const int nm = new_target(f.g, NodeKind::Nmos);
    EXPECT_FALSE(construction_valid(f.g, ac, f.cm, nm, index_of(EdgeKind::Gate), 0));
}

TEST(Masks, LaterHeadsDoNotChangeEarlierMasks)
{
    const auto task = load_task(fixtures::data("tasks/ota_toy.json"));
    EnvConfig ec;
    ec.defer_evaluation = true;
    Environment env(task, ec);
    std::mt19937_64 rng(2);
    for (int step = 0; step < 6; ++step) {
        Action base{-1, -1, -1, -1, 0};
        const auto src = env.head_mask(0, base);
        Action a = base;
        do a.source = static_cast<int>(rng() % src.size()); while (!src[a.source]);
        const auto tgt = env.head_mask(1, a);
        for (int noise = 0; noise < 5; ++noise) {
            Action b = a;
            b.target = static_cast<int>(rng() % tgt.size());
            b.edge_kind = static_cast<int>(rng() % kEdgeKinds);
            b.addition_type = static_cast<int>(rng() % kModifiers);
            b.terminate = static_cast<int>(rng() % 2);
            EXPECT_EQ(env.head_mask(0, b), src);
            EXPECT_EQ(env.head_mask(1, b), tgt);
        }
        do a.target = static_cast<int>(rng() % tgt.size()); while (!tgt[a.target]);
        const auto em = env.head_mask(2, a);
        do a.edge_kind = static_cast<int>(rng() % em.size()); while (!em[a.edge_kind]);
        const auto mm = env.head_mask(3, a);
        do a.addition_type = static_cast<int>(rng() % mm.size()); while (!mm[a.addition_type]);
        ASSERT_TRUE(env.step(a).info.action_applied);
    }
}
