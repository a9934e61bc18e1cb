#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "astrl/graph.hpp"

namespace astrl {

// Netlist subset (case-insensitive):
//   * comment                      ignored
//   *@sym <name> <name>            declares a mirrored device or net pair
//   + ...                          continuation of the previous card
//   .subckt <name> <ports...>      with no top-level cards, the uninstantiated
//                                  subckt is the design; its ports become IO nets
//   .ends / .end                   ignored; other dot-cards are ignored too
//   M<id> <d> <g> <s> <b> <model>  model containing pfet/pmos (or starting
//                                  with p) is PMOS, nfet/nmos (or n) NMOS
//   R<id> <a> <b> [value]          PassivePlus on a, PassiveMinus on b
//   C<id> <a> <b> [value]
//   X<id> <nets...> <subckt>       flattened; internal nets become <id>.<net>
// Any other card (Q, D, L, V, I, ...) is UnsupportedDevice.
// Nets vdd/vcc/avdd/dvdd map to the supply, vss/gnd/0/avss/dvss to ground.

struct NetlistStyle {
    std::string subckt_name = "design";
    bool annotate_symmetry = true;
};

namespace detail {

inline std::string lower(std::string s)
{
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

inline std::vector<std::string> split_ws(const std::string& line)
{
    std::istringstream ss(line);
    std::vector<std::string> out;
    std::string tok;
    while (ss >> tok) out.push_back(tok);
    return out;
}

inline bool is_supply_name(const std::string& n)
{
    auto s = lower(n);
    if (!s.empty() && s.back() == '!') s.pop_back();
    return s == "vdd" || s == "vcc" || s == "avdd" || s == "dvdd" || s == "vpwr";
}

inline bool is_ground_name(const std::string& n)
{
    auto s = lower(n);
    if (!s.empty() && s.back() == '!') s.pop_back();
    return s == "vss" || s == "gnd" || s == "0" || s == "avss" || s == "dvss" || s == "vgnd";
}

inline bool looks_like_io(const std::string& n)
{
    auto s = lower(n);
    for (const char* p : {"in", "out", "vin", "vout", "vb", "clk", "ib"})
        if (s.rfind(p, 0) == 0) return true;
    return false;
}

struct Card {
    std::vector<std::string> tokens;
    int line = 0;
};

struct Subckt {
    std::vector<std::string> ports;
    std::vector<Card> cards;
};

class NetlistBuilder {
public:
    explicit NetlistBuilder(const GraphConfig& cfg) : cfg_(cfg) {}

    NodeId net(const std::string& raw, bool io_hint)
    {
        // every rail alias names the same node
        const std::string name = is_supply_name(raw) ? "vdd" : is_ground_name(raw) ? "vss" : raw;
        if (auto it = nets_.find(name); it != nets_.end()) return it->second;
        NodeId id;
        if (is_supply_name(name)) id = graph_.add_node(NodeKind::SupplyNet);
        else if (is_ground_name(name)) id = graph_.add_node(NodeKind::GroundNet);
        else if (io_hint) id = graph_.add_node(NodeKind::IoNet, name);
        else id = graph_.add_node(NodeKind::GenericNet);
        nets_.emplace(name, id);
        return id;
    }

    void device(const std::string& name, NodeKind kind, const std::vector<std::pair<EdgeKind, std::string>>& pins,
                bool top_level, int line)
    {
        if (devices_.contains(lower(name)))
            throw Error(Errc::ParseError, "line " + std::to_string(line) + ": duplicate device " + name);
        NodeId d = graph_.add_node(kind);
        devices_.emplace(lower(name), d);
        for (const auto& [pin, netname] : pins) {
            if (pin == EdgeKind::Bulk && !cfg_.explicit_bulk) continue;
            NodeId n = net(netname, top_level && io_top_ && looks_like_io(netname));
            graph_.add_edge(d, n, pin);
        }
    }

    void declare_pair(const std::string& a, const std::string& b, int line)
    {
        pairs_.push_back({a, b, line});
    }

    void set_io_heuristic(bool on) { io_top_ = on; }

    CircuitGraph finish()
    {
        for (const auto& p : pairs_) {
            auto ia = resolve(p.a), ib = resolve(p.b);
            if (ia < 0 || ib < 0)
                throw Error(Errc::ParseError, "line " + std::to_string(p.line) + ": unknown name in *@sym");
            if (graph_.kind(ia) != graph_.kind(ib))
                throw Error(Errc::ParseError, "line " + std::to_string(p.line) + ": *@sym kinds differ");
            graph_.symmetry().pair(ia, ib);
        }
        return std::move(graph_);
    }

private:
    NodeId resolve(const std::string& name) const
    {
        if (auto it = devices_.find(lower(name)); it != devices_.end()) return it->second;
        if (auto it = nets_.find(name); it != nets_.end()) return it->second;
        return -1;
    }

    struct PairDecl {
        std::string a, b;
        int line;
    };
    GraphConfig cfg_;
    CircuitGraph graph_;
    std::unordered_map<std::string, NodeId> nets_;
    std::unordered_map<std::string, NodeId> devices_;
    std::vector<PairDecl> pairs_;
    bool io_top_ = true;
};

inline NodeKind mos_kind(const std::string& model, int line)
{
    auto m = lower(model);
    if (m.find("pfet") != std::string::npos || m.find("pmos") != std::string::npos) return NodeKind::Pmos;
    if (m.find("nfet") != std::string::npos || m.find("nmos") != std::string::npos) return NodeKind::Nmos;
    if (!m.empty() && m[0] == 'p') return NodeKind::Pmos;
    if (!m.empty() && m[0] == 'n') return NodeKind::Nmos;
    throw Error(Errc::ParseError, "line " + std::to_string(line) + ": unknown MOS model '" + model + "'");
}

inline void expand_cards(NetlistBuilder& b, const std::vector<Card>& cards,
                         const std::map<std::string, Subckt>& subckts, const std::string& prefix,
                         const std::unordered_map<std::string, std::string>& port_map, bool top_level, int depth)
{
    if (depth > 16) throw Error(Errc::ParseError, "subcircuit nesting too deep");
    auto net_name = [&](const std::string& n) {
        if (is_supply_name(n) || is_ground_name(n)) return n;
        if (auto it = port_map.find(n); it != port_map.end()) return it->second;
        return prefix + n;
    };
    for (const auto& card : cards) {
        const auto& t = card.tokens;
        const std::string name = prefix + t[0];
        const char type = static_cast<char>(std::tolower(static_cast<unsigned char>(t[0][0])));
        auto need = [&](std::size_t n) {
            if (t.size() < n)
                throw Error(Errc::ParseError, "line " + std::to_string(card.line) + ": too few fields in " + t[0]);
        };
        switch (type) {
        case 'm': {
            need(6);
            NodeKind k = mos_kind(t[5], card.line);
            b.device(name, k,
                     {{EdgeKind::Drain, net_name(t[1])}, {EdgeKind::Gate, net_name(t[2])},
                      {EdgeKind::Source, net_name(t[3])}, {EdgeKind::Bulk, net_name(t[4])}},
                     top_level, card.line);
            break;
        }
        case 'r':
        case 'c': {
            need(3);
            b.device(name, type == 'r' ? NodeKind::Resistor : NodeKind::Capacitor,
                     {{EdgeKind::PassivePlus, net_name(t[1])}, {EdgeKind::PassiveMinus, net_name(t[2])}},
                     top_level, card.line);
            break;
        }
        case 'x': {
            need(2);
            auto sub_name = lower(t.back());
            auto it = subckts.find(sub_name);
            if (it == subckts.end())
                throw Error(Errc::ParseError, "line " + std::to_string(card.line) + ": unknown subckt " + t.back());
            const auto& sub = it->second;
            if (t.size() - 2 != sub.ports.size())
                throw Error(Errc::ParseError, "line " + std::to_string(card.line) + ": port count mismatch");
            std::unordered_map<std::string, std::string> inner;
            for (std::size_t i = 0; i < sub.ports.size(); ++i) inner[sub.ports[i]] = net_name(t[i + 1]);
            expand_cards(b, sub.cards, subckts, name + ".", inner, false, depth + 1);
            break;
        }
        default:
            throw Error(Errc::UnsupportedDevice, "line " + std::to_string(card.line) + ": " + t[0]);
        }
    }
}

} // namespace detail

/// Parses the documented SPICE subset into a graph.
inline CircuitGraph parse_netlist(const std::string& text, const GraphConfig& cfg = {})
{
    using namespace detail;
    std::vector<std::string> lines;
    std::vector<int> line_no;
    {
        std::istringstream in(text);
        std::string line;
        int no = 0;
        while (std::getline(in, line)) {
            ++no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            auto first = line.find_first_not_of(" \t");
            if (first == std::string::npos) continue;
            line = line.substr(first);
            if (line[0] == '+') {
                if (lines.empty()) throw Error(Errc::ParseError, "line " + std::to_string(no) + ": dangling '+'");
                lines.back() += " " + line.substr(1);
                continue;
            }
            lines.push_back(line);
            line_no.push_back(no);
        }
    }

    NetlistBuilder builder(cfg);
    std::map<std::string, Subckt> subckts;
    std::vector<Card> top;
    std::vector<std::pair<std::string, std::string>> sym;
    std::vector<int> sym_lines;
    Subckt* current = nullptr;
    std::string current_name;

    for (std::size_t i = 0; i < lines.size(); ++i) {
        auto toks = split_ws(lines[i]);
        const int no = line_no[i];
        if (toks[0][0] == '*') {
            if (lower(toks[0]) == "*@sym") {
                if (toks.size() != 3) throw Error(Errc::ParseError, "line " + std::to_string(no) + ": *@sym needs two names");
                sym.emplace_back(toks[1], toks[2]);
                sym_lines.push_back(no);
            }
            continue;
        }
        if (toks[0][0] == '.') {
            auto d = lower(toks[0]);
            if (d == ".subckt") {
                if (toks.size() < 2) throw Error(Errc::ParseError, "line " + std::to_string(no) + ": .subckt needs a name");
                if (current) throw Error(Errc::ParseError, "line " + std::to_string(no) + ": nested .subckt");
                current_name = lower(toks[1]);
                current = &subckts[current_name];
                current->ports.assign(toks.begin() + 2, toks.end());
            } else if (d == ".ends") {
                current = nullptr;
            }
            continue;
        }
        Card c{toks, no};
        if (current) current->cards.push_back(std::move(c));
        else top.push_back(std::move(c));
    }
    if (current) throw Error(Errc::ParseError, "missing .ends");

    // Without top-level cards, the one subcircuit nobody instantiates is the
    // design and its ports are the IO nets.
    const Subckt* design = nullptr;
    if (top.empty()) {
        std::set<std::string> used;
        for (const auto& [name, sub] : subckts)
            for (const auto& c : sub.cards)
                if (std::tolower(static_cast<unsigned char>(c.tokens[0][0])) == 'x') used.insert(lower(c.tokens.back()));
        for (const auto& [name, sub] : subckts) {
            if (used.contains(name)) continue;
            if (design) throw Error(Errc::ParseError, "several uninstantiated subcircuits and no top-level cards");
            design = &sub;
        }
    }
    if (design) {
        builder.set_io_heuristic(false);
        for (const auto& p : design->ports) builder.net(p, true);
        std::unordered_map<std::string, std::string> identity;
        for (const auto& p : design->ports) identity[p] = p;
        expand_cards(builder, design->cards, subckts, "", identity, true, 0);
    } else {
        expand_cards(builder, top, subckts, "", {}, true, 0);
    }
    for (std::size_t i = 0; i < sym.size(); ++i) builder.declare_pair(sym[i].first, sym[i].second, sym_lines[i]);
    auto g = builder.finish();
    if (g.empty()) throw Error(Errc::ParseError, "netlist has no devices");
    return g;
}

/// Deterministic netlist text for a fully wired graph. Unit-sized devices.
inline std::string emit_netlist(const CircuitGraph& g, const GraphConfig& cfg = {}, const NetlistStyle& style = {})
{
    // Netlisting needs every pin bound and no structural violation; whether the
    // circuit is biased is left to the evaluators.
    const auto rep = validate_structure(g, cfg);
    if (!rep.all_terminals_bound || !rep.partially_valid())
        throw Error(Errc::IncompleteGraph, "graph has unbound terminals or structural violations");
    const int n = g.num_nodes();
    std::vector<std::string> names(static_cast<std::size_t>(n));
    int m = 0, r = 0, c = 0, net = 0;
    std::vector<std::string> ports;
    for (int u = 0; u < n; ++u) {
        const auto& nd = g.nodes()[u];
        switch (nd.kind) {
        case NodeKind::Nmos:
        case NodeKind::Pmos: names[u] = "M" + std::to_string(++m); break;
        case NodeKind::Resistor: names[u] = "R" + std::to_string(++r); break;
        case NodeKind::Capacitor: names[u] = "C" + std::to_string(++c); break;
        case NodeKind::SupplyNet: names[u] = "vdd"; break;
        case NodeKind::GroundNet: names[u] = "vss"; break;
        case NodeKind::IoNet:
            names[u] = nd.label;
            ports.push_back(nd.label);
            break;
        case NodeKind::GenericNet: names[u] = "n" + std::to_string(++net); break;
        }
    }
    if (g.find_kind(NodeKind::SupplyNet)) ports.push_back("vdd");
    if (g.find_kind(NodeKind::GroundNet)) ports.push_back("vss");

    std::ostringstream out;
    out << "* astrl generated netlist\n";
    out << ".subckt " << style.subckt_name;
    for (const auto& p : ports) out << ' ' << p;
    out << '\n';
    for (int u = 0; u < n; ++u) {
        const NodeKind k = g.kind(u);
        if (is_transistor(k)) {
            auto pin = [&](EdgeKind e) -> std::string {
                if (auto netid = g.terminal_net(u, e)) return names[*netid];
                return k == NodeKind::Nmos ? "vss" : "vdd";
            };
            out << names[u] << ' ' << pin(EdgeKind::Drain) << ' ' << pin(EdgeKind::Gate) << ' '
                << pin(EdgeKind::Source) << ' ' << pin(EdgeKind::Bulk) << ' '
                << (k == NodeKind::Nmos ? "nfet" : "pfet") << '\n';
        } else if (is_passive(k)) {
            out << names[u] << ' ' << names[*g.terminal_net(u, EdgeKind::PassivePlus)] << ' '
                << names[*g.terminal_net(u, EdgeKind::PassiveMinus)] << ' '
                << (k == NodeKind::Resistor ? "10k" : "1p") << '\n';
        }
    }
    if (style.annotate_symmetry)
        for (auto [a, b] : g.symmetry().pairs()) out << "*@sym " << names[a] << ' ' << names[b] << '\n';
    out << ".ends " << style.subckt_name << '\n';
    return out.str();
}

} // namespace astrl
