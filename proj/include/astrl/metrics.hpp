#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "astrl/expert.hpp"
#include "astrl/netlist.hpp"
#include "astrl/task.hpp"

namespace astrl {

// Design directory layout (written by `astrl generate`):
//   design_0000.sp     emitted netlist (absent when the graph could not be netlisted)
//   design_0000.json   graph interchange JSON of the terminal state
//   design_0000.sim    SimResult JSON {"sim_valid", "measurements": {key: {value, unit}}, "diagnostics"}
//   manifest.json

struct DesignRow {
    std::string name;
    std::uint64_t hash = 0;
    bool netlist_valid = false;
    bool sim_valid = false;
    bool spec_met = false;
    bool novel = false;
    std::string diagnostics;
};

struct MetricsReport {
    int designs = 0;
    // Percentages; empty when there are no designs.
    std::optional<double> netlist_validity;
    std::optional<double> simulation_validity;
    std::optional<double> spec_fulfillment;
    std::optional<double> novelty;
    std::vector<DesignRow> rows;

    [[nodiscard]] json to_json() const
    {
        auto pct = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
        json rs = json::array();
        for (const auto& r : rows)
            rs.push_back({{"name", r.name},
                          {"hash", hash_hex(r.hash)},
                          {"netlist_valid", r.netlist_valid},
                          {"sim_valid", r.sim_valid},
                          {"spec_met", r.spec_met},
                          {"novel", r.novel},
                          {"diagnostics", r.diagnostics}});
        return {{"designs", designs},
                {"netlist_validity", pct(netlist_validity)},
                {"simulation_validity", pct(simulation_validity)},
                {"spec_fulfillment", pct(spec_fulfillment)},
                {"novelty", pct(novelty)},
                {"rows", rs}};
    }
};

inline json sim_result_to_json(const SimResult& r)
{
    json m = json::object();
    for (const auto& [k, v] : r.measurements) m[k] = {{"value", v.value}, {"unit", v.unit}};
    return {{"sim_valid", r.sim_valid}, {"measurements", m}, {"diagnostics", r.diagnostics}};
}

inline SimResult sim_result_from_json(const json& j)
{
    SimResult r;
    try {
        r.sim_valid = j.at("sim_valid").get<bool>();
        const json meas = j.value("measurements", json::object());
        for (const auto& [k, v] : meas.items())
            r.measurements[k] = {v.at("value").get<double>(), v.value("unit", "")};
        r.diagnostics = j.value("diagnostics", "");
    } catch (const json::exception& ex) {
        throw Error(Errc::ParseError, std::string("sim result: ") + ex.what());
    }
    return r;
}

/// Canonical hashes of a reference dataset: either a directory of netlists
/// or a JSON index {"hashes": ["<16 hex digits>", ...]}.
inline std::set<std::uint64_t> load_dataset_index(const std::string& path, const GraphConfig& cfg = {})
{
    std::set<std::uint64_t> out;
    if (path.empty()) return out;
    if (std::filesystem::is_directory(path)) {
        for (const auto& d : load_netlist_dir(path, cfg)) out.insert(canonical_hash(d.graph));
        return out;
    }
    try {
        const auto j = json::parse(read_file(path));
        for (const auto& h : j.at("hashes")) out.insert(std::stoull(h.get<std::string>(), nullptr, 16));
    } catch (const std::exception& ex) {
        throw Error(Errc::Config, "dataset index " + path + ": " + ex.what());
    }
    return out;
}

inline json dataset_index_json(const std::set<std::uint64_t>& hashes)
{
    json hs = json::array();
    for (auto h : hashes) hs.push_back(hash_hex(h));
    return {{"format", "astrl-dataset-index"}, {"version", 1}, {"hashes", hs}};
}

/// Classifies one generated design. A design is netlist-valid when its
/// netlist exists and re-parses to the same graph; spec fulfilment requires
/// simulation validity.
inline DesignRow classify_design(const std::string& name, const CircuitGraph& g, const std::optional<std::string>& netlist,
                                 const SimResult& sim, const TaskSpec* task, const std::set<std::uint64_t>& index)
{
    DesignRow row;
    row.name = name;
    row.hash = canonical_hash(g);
    const GraphConfig cfg = task ? task->graph : GraphConfig{};
    if (netlist) {
        try {
            row.netlist_valid = canonical_hash(parse_netlist(*netlist, cfg)) == row.hash;
        } catch (const Error& ex) {
            row.diagnostics = ex.what();
        }
    }
    row.sim_valid = sim.sim_valid;
    if (task && sim.sim_valid) {
        const auto dr = aggregate_domain_reward(true, sim, task->specs, task->reward);
        row.spec_met = dr.all_specs_met;
    }
    row.novel = !index.contains(row.hash);
    if (row.diagnostics.empty()) row.diagnostics = sim.diagnostics;
    return row;
}

inline MetricsReport aggregate_metrics(std::vector<DesignRow> rows)
{
    MetricsReport r;
    r.designs = static_cast<int>(rows.size());
    if (!rows.empty()) {
        double nl = 0, sv = 0, sf = 0, nv = 0;
        for (const auto& x : rows) {
            nl += x.netlist_valid;
            sv += x.sim_valid;
            sf += x.sim_valid && x.spec_met;
            nv += x.novel;
        }
        const double n = static_cast<double>(rows.size());
        r.netlist_validity = 100.0 * nl / n;
        r.simulation_validity = 100.0 * sv / n;
        r.spec_fulfillment = 100.0 * sf / n;
        r.novelty = 100.0 * nv / n;
    }
    r.rows = std::move(rows);
    return r;
}

/// Recomputes every metric from a design directory. With a built-in
/// evaluator the designs are re-simulated; external results are read back
/// from the stored .sim files.
inline MetricsReport metrics_from_dir(const std::string& dir, const std::set<std::uint64_t>& index,
                                      const TaskSpec* task)
{
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw Error(Errc::Io, "not a directory: " + dir);
    std::vector<fs::path> graphs;
    for (const auto& e : fs::directory_iterator(dir)) {
        const auto& p = e.path();
        if (p.extension() == ".json" && p.stem().string().rfind("design_", 0) == 0) graphs.push_back(p);
    }
    std::sort(graphs.begin(), graphs.end());
    std::vector<DesignRow> rows;
    for (const auto& gp : graphs) {
        const auto stem = gp.stem().string();
        const auto g = graph_from_json(json::parse(read_file(gp.string())));
        std::optional<std::string> netlist;
        if (auto sp = fs::path(dir) / (stem + ".sp"); fs::exists(sp)) netlist = read_file(sp.string());
        SimResult sim;
        const auto simp = fs::path(dir) / (stem + ".sim");
        const bool builtin = task && task->evaluator.kind != EvaluatorKind::ExternalProcess;
        if (builtin) {
            sim = validate_structure(g, task->graph).complete ? evaluate_design(g, *task)
                                                              : invalid_result("structurally incomplete");
        } else if (fs::exists(simp)) {
            sim = sim_result_from_json(json::parse(read_file(simp.string())));
        } else {
            sim = invalid_result("no simulation result");
        }
        rows.push_back(classify_design(stem, g, netlist, sim, task, index));
    }
    return aggregate_metrics(std::move(rows));
}

inline std::string format_metrics(const MetricsReport& r)
{
    auto pct = [](const std::optional<double>& v) {
        if (!v) return std::string("undefined");
        std::ostringstream o;
        o.setf(std::ios::fixed);
        o.precision(1);
        o << *v << '%';
        return o.str();
    };
    std::ostringstream o;
    o << "designs:             " << r.designs << '\n'
      << "netlist validity:    " << pct(r.netlist_validity) << '\n'
      << "simulation validity: " << pct(r.simulation_validity) << '\n'
      << "spec fulfillment:    " << pct(r.spec_fulfillment) << '\n'
      << "novelty:             " << pct(r.novelty) << '\n';
    return o.str();
}

} // namespace astrl
