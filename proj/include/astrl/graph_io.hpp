#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "astrl/action.hpp"
#include "astrl/graph.hpp"

namespace astrl {

using json = nlohmann::json;

// Graph interchange: one JSON object per line,
//   {"nodes": [[id, kind], ...], "edges": [[u, v, kind], ...],
//    "symmetry": {"pairs": [[a, b], ...], "common": [...]}, "tag": "..."}
// IO nets carry their label as "IoNet:<label>".

inline json graph_to_json(const CircuitGraph& g)
{
    json nodes = json::array();
    for (int i = 0; i < g.num_nodes(); ++i) {
        const auto& nd = g.nodes()[i];
        std::string kind(to_string(nd.kind));
        if (nd.kind == NodeKind::IoNet) kind += ":" + nd.label;
        nodes.push_back(json::array({i, kind}));
    }
    json edges = json::array();
    for (const auto& e : g.edges())
        edges.push_back(json::array({e.component, e.net, std::string(to_string(e.kind))}));
    json pairs = json::array();
    for (auto [a, b] : g.symmetry().pairs()) pairs.push_back(json::array({a, b}));
    json out;
    out["nodes"] = std::move(nodes);
    out["edges"] = std::move(edges);
    out["symmetry"] = {{"pairs", std::move(pairs)}, {"common", g.symmetry().common_mode()}};
    if (!g.tag().empty()) out["tag"] = g.tag();
    return out;
}

/// Rebuilds a graph; edges are inserted unchecked so malformed input can
/// be reported by validate_structure rather than rejected here.
inline CircuitGraph graph_from_json(const json& j)
{
    try {
        CircuitGraph g;
        const auto& nodes = j.at("nodes");
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            if (nodes[i].at(0).get<int>() != static_cast<int>(i))
                throw Error(Errc::ParseError, "node ids must be dense and ordered");
            auto kind = nodes[i].at(1).get<std::string>();
            std::string label;
            if (auto colon = kind.find(':'); colon != std::string::npos) {
                label = kind.substr(colon + 1);
                kind = kind.substr(0, colon);
            }
            g.add_node_unchecked(node_kind_from_string(kind), label);
        }
        for (const auto& e : j.at("edges"))
            g.add_edge_unchecked(e.at(0).get<int>(), e.at(1).get<int>(),
                                 edge_kind_from_string(e.at(2).get<std::string>()));
        if (j.contains("symmetry"))
            for (const auto& p : j["symmetry"].value("pairs", json::array()))
                g.symmetry().pair(p.at(0).get<int>(), p.at(1).get<int>());
        if (j.contains("tag")) g.set_tag(j["tag"].get<std::string>());
        return g;
    } catch (const json::exception& ex) {
        throw Error(Errc::ParseError, std::string("graph json: ") + ex.what());
    }
}

inline std::string graph_to_line(const CircuitGraph& g) { return graph_to_json(g).dump(); }

inline std::vector<CircuitGraph> read_graph_lines(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw Error(Errc::Io, "cannot open " + path);
    std::vector<CircuitGraph> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        out.push_back(graph_from_json(json::parse(line)));
    }
    return out;
}

inline json action_to_json(const Action& a)
{
    auto arr = a.as_array();
    return json::array({arr[0], arr[1], arr[2], arr[3], arr[4]});
}

inline Action action_from_json(const json& j)
{
    return Action{j.at(0).get<int>(), j.at(1).get<int>(), j.at(2).get<int>(), j.at(3).get<int>(),
                  j.at(4).get<int>()};
}

inline std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::Io, "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& content)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(Errc::Io, "cannot write " + path);
    out << content;
}

} // namespace astrl
