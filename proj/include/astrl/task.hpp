#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "astrl/action.hpp"
#include "astrl/evaluators.hpp"
#include "astrl/external.hpp"
#include "astrl/graph_io.hpp"
#include "astrl/netlist.hpp"
#include "astrl/reward.hpp"

namespace astrl {

struct TaskSpec {
    std::string name;
    CircuitGraph scaffold;
    std::vector<PerfSpec> specs;
    int step_limit = 60;
    int max_nodes = 48;
    GraphConfig graph;
    RewardConstants reward;
    EvaluatorSpec evaluator;
    std::vector<std::string> expert_netlists; // absolute paths
    std::string source_path;

    [[nodiscard]] ActionConfig action_config() const
    {
        ActionConfig c;
        c.graph = graph;
        c.max_nodes = max_nodes;
        return c;
    }
};

inline EvaluatorKind evaluator_kind_from_string(const std::string& s)
{
    if (s == "analytic_ro") return EvaluatorKind::AnalyticRo;
    if (s == "mna_ac") return EvaluatorKind::MnaAc;
    if (s == "external_process") return EvaluatorKind::ExternalProcess;
    throw Error(Errc::Config, "unknown evaluator kind '" + s + "'");
}

inline void check_task(const TaskSpec& t)
{
    if (t.name.empty()) throw Error(Errc::Config, "task needs a name");
    if (t.specs.empty()) throw Error(Errc::Config, "task '" + t.name + "' has no specs");
    for (const auto& s : t.specs) validate_spec(s);
    if (t.step_limit <= 0) throw Error(Errc::Config, "step_limit must be positive");
    if (t.scaffold.empty() || !validate_structure(t.scaffold, t.graph).partially_valid() ||
        !symmetry_consistent(t.scaffold))
        throw Error(Errc::MalformedScaffold, "task '" + t.name + "'");
    if (t.scaffold.num_nodes() > t.max_nodes) throw Error(Errc::MalformedScaffold, "scaffold exceeds max_nodes");
}

/// Task file (JSON):
///   name, scaffold (graph JSON), specs [{key, objective, target, bound?, weight?, unit?}],
///   step_limit?, max_nodes?, explicit_bulk?, experts? [netlist paths, relative to the file],
///   evaluator {kind, gm?, ro?, r_unit?, c_unit?, c_load?, t_inv?, timeout_s?, engine?,
///              testbench?, required_keys?}, reward {constant overrides}.
inline TaskSpec task_from_json(const json& j, const std::filesystem::path& base_dir = {})
{
    TaskSpec t;
    try {
        t.name = j.at("name").get<std::string>();
        t.scaffold = graph_from_json(j.at("scaffold"));
        t.step_limit = j.value("step_limit", t.step_limit);
        t.max_nodes = j.value("max_nodes", t.max_nodes);
        t.graph.explicit_bulk = j.value("explicit_bulk", false);
        for (const auto& s : j.at("specs")) {
            PerfSpec p;
            p.key = s.at("key").get<std::string>();
            p.objective = objective_from_string(s.at("objective").get<std::string>());
            p.target = s.at("target").get<double>();
            p.bound = s.value("bound", 0.0);
            if (s.contains("weight")) p.weight = s["weight"].get<double>();
            p.unit = s.value("unit", "");
            t.specs.push_back(std::move(p));
        }
        for (const auto& e : j.value("experts", json::array()))
            t.expert_netlists.push_back((base_dir / e.get<std::string>()).lexically_normal().string());
        if (j.contains("evaluator")) {
            const auto& e = j["evaluator"];
            auto& ev = t.evaluator;
            ev.id = e.value("kind", ev.id);
            ev.kind = evaluator_kind_from_string(ev.id);
            ev.gm = e.value("gm", ev.gm);
            ev.ro = e.value("ro", ev.ro);
            ev.r_unit = e.value("r_unit", ev.r_unit);
            ev.c_unit = e.value("c_unit", ev.c_unit);
            ev.c_load = e.value("c_load", ev.c_load);
            ev.t_inv = e.value("t_inv", ev.t_inv);
            ev.timeout_s = e.value("timeout_s", ev.timeout_s);
            ev.engine = e.value("engine", ev.engine);
            if (e.contains("testbench"))
                ev.testbench_template = read_file((base_dir / e["testbench"].get<std::string>()).string());
            ev.required_keys = e.value("required_keys", ev.required_keys);
            for (double v : {ev.gm, ev.ro, ev.r_unit, ev.c_unit, ev.c_load, ev.t_inv, ev.timeout_s})
                if (!(v > 0.0)) throw Error(Errc::Config, "evaluator parameters must be positive");
        }
        if (j.contains("reward")) {
            const auto& r = j["reward"];
            auto& rc = t.reward;
            rc.invalid_action = r.value("invalid_action", rc.invalid_action);
            rc.similarity = r.value("similarity", rc.similarity);
            rc.struct_invalid_terminal = r.value("struct_invalid_terminal", rc.struct_invalid_terminal);
            rc.sim_invalid_bonus = r.value("sim_invalid_bonus", rc.sim_invalid_bonus);
            rc.sim_valid_bonus = r.value("sim_valid_bonus", rc.sim_valid_bonus);
            rc.spec_weight = r.value("spec_weight", rc.spec_weight);
            rc.success_bonus = r.value("success_bonus", rc.success_bonus);
            rc.clamp_lo = r.value("clamp_lo", rc.clamp_lo);
            rc.clamp_hi = r.value("clamp_hi", rc.clamp_hi);
            rc.literal_match = r.value("literal_match", rc.literal_match);
            rc.literal_minimize = r.value("literal_minimize", rc.literal_minimize);
        }
    } catch (const json::exception& ex) {
        throw Error(Errc::Config, std::string("task json: ") + ex.what());
    }
    check_task(t);
    return t;
}

inline TaskSpec load_task(const std::string& path)
{
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& ex) {
        throw Error(Errc::Config, path + ": " + ex.what());
    }
    auto t = task_from_json(j, std::filesystem::path(path).parent_path());
    t.source_path = path;
    return t;
}

/// Dispatches to the evaluator the task names. Never throws for design
/// problems; those come back as sim-invalid results.
inline SimResult evaluate_design(const CircuitGraph& g, const TaskSpec& task)
{
    try {
        switch (task.evaluator.kind) {
        case EvaluatorKind::AnalyticRo: return evaluate_analytic_ro(g, task.evaluator);
        case EvaluatorKind::MnaAc: return evaluate_mna_ac(g, task.evaluator);
        case EvaluatorKind::ExternalProcess:
            return evaluate_external(emit_netlist(g, task.graph), task.evaluator.testbench_template,
                                     task.evaluator);
        }
    } catch (const Error& ex) {
        if (ex.code() == Errc::EngineNotConfigured) throw;
        return invalid_result(ex.what());
    }
    return invalid_result("unknown evaluator");
}

/// Fails fast on evaluator misconfiguration before any training starts.
inline void check_evaluator_ready(const TaskSpec& task)
{
    if (task.evaluator.kind == EvaluatorKind::ExternalProcess) require_engine(task.evaluator);
}

} // namespace astrl
