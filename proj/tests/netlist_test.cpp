#include <gtest/gtest.h>

#include "astrl/expert.hpp"
#include "astrl/netlist.hpp"
#include "fixtures.hpp"

using namespace astrl;

namespace {

Errc parse_error(const std::string& text)
{
    try {
        parse_netlist(text);
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "parsed:\n" << text;
    return Errc::Io;
}

int count_kind(const CircuitGraph& g, NodeKind k)
{
    int c = 0;
    for (const auto& nd : g.nodes()) c += nd.kind == k;
    return c;
}

} // namespace

TEST(Netlist, ParsesTheSubset)
{
    const auto g = parse_netlist(R"(* two-stage divider
.subckt half a b
R1 a b 10k
.ends
X1 in mid half
X2 mid vss half
R9 VDD gnd 1k
C1 mid 0 1p
)");
    EXPECT_EQ(count_kind(g, NodeKind::Resistor), 3);
    EXPECT_EQ(count_kind(g, NodeKind::Capacitor), 1);
    EXPECT_EQ(count_kind(g, NodeKind::SupplyNet), 1);
    EXPECT_EQ(count_kind(g, NodeKind::GroundNet), 1); // vss, gnd and 0 are one net
    EXPECT_TRUE(validate_structure(g).complete);
}

TEST(Netlist, DesignSubcktPortsAreIo)
{
    const auto g = parse_netlist(read_file(fixtures::data("experts/ota_cmfb.sp")));
    std::set<std::string> io;
    for (const auto& nd : g.nodes())
        if (nd.kind == NodeKind::IoNet) io.insert(nd.label);
    EXPECT_EQ(io, (std::set<std::string>{"inp", "inn", "outp", "outn", "vb"}));
    EXPECT_EQ(g.symmetry().pairs().size(), 5u);
    EXPECT_TRUE(symmetry_consistent(g));
}

TEST(Netlist, Errors)
{
    EXPECT_EQ(parse_error("L1 a b 1n\n"), Errc::UnsupportedDevice);
    EXPECT_EQ(parse_error("M1 a b c\n"), Errc::ParseError);
    EXPECT_EQ(parse_error("M1 d g s b bjt\n"), Errc::ParseError);
    EXPECT_EQ(parse_error(".subckt x a\nR1 a b 1k\n"), Errc::ParseError);
    EXPECT_EQ(parse_error("* only a comment\n"), Errc::ParseError);
    EXPECT_EQ(parse_error("X1 a b missing\n"), Errc::ParseError);
}

TEST(Netlist, RoundTripPreservesCanonicalGraph)
{
    std::vector<CircuitGraph> graphs{fixtures::inverter_ring(3), fixtures::inverter_ring(4), fixtures::divider(),
                                     fixtures::rc_lowpass(), fixtures::common_source()};
    for (const auto& d : load_netlist_dir(fixtures::data("experts"))) graphs.push_back(d.graph);
    for (const auto& g : graphs) {
        const auto text = emit_netlist(g);
        const auto back = parse_netlist(text);
        EXPECT_EQ(canonical_hash(back), canonical_hash(g)) << text;
        EXPECT_EQ(back.symmetry().pairs().size(), g.symmetry().pairs().size());
        EXPECT_EQ(emit_netlist(back), emit_netlist(parse_netlist(emit_netlist(back))));
    }
}

TEST(Netlist, IncompleteGraphIsRejected)
{
    auto ring = fixtures::inverter_ring(3);
    const auto e = ring.edges().front();
    ASSERT_TRUE(ring.remove_edge(e.component, e.net, e.kind));
    try {
        emit_netlist(ring);
        FAIL() << "emitted a netlist with a floating pin";
    } catch (const Error& ex) {
        EXPECT_EQ(ex.code(), Errc::IncompleteGraph);
    }
}

TEST(Netlist, ExplicitBulkKeepsBulkEdges)
{
    const std::string text = "M1 out in vss vss nfet\nM2 out in vdd vdd pfet\n";
    const auto implicit = parse_netlist(text);
    const auto explicit_bulk = parse_netlist(text, GraphConfig{true});
    EXPECT_EQ(implicit.num_edges(), 2 * 3);
    EXPECT_EQ(explicit_bulk.num_edges(), 2 * 4);
}
