#pragma once

#include <cmath>
#include <complex>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "astrl/graph.hpp"

namespace astrl {

struct Measurement {
    double value = 0.0;
    std::string unit;
};

struct SimResult {
    bool sim_valid = false;
    std::map<std::string, Measurement> measurements;
    std::string diagnostics;
    double max_residual = 0.0;

    [[nodiscard]] std::optional<double> get(const std::string& key) const
    {
        auto it = measurements.find(key);
        if (it == measurements.end()) return std::nullopt;
        return it->second.value;
    }
};

enum class EvaluatorKind { AnalyticRo, MnaAc, ExternalProcess };

/// Small-signal and timing parameters per unit-sized device.
struct EvaluatorSpec {
    std::string id = "analytic_ro";
    EvaluatorKind kind = EvaluatorKind::AnalyticRo;
    double gm = 1e-3;         // S
    double ro = 100e3;        // ohm
    double r_unit = 10e3;     // ohm
    double c_unit = 1e-12;    // F
    double c_load = 100e-15;  // F, on every output net
    double t_inv = 35e-12;    // s, unit inverter delay
    double timeout_s = 30.0;
    // external-process adapter
    std::string engine;       // falls back to $ASTRL_SIM_ENGINE
    std::string testbench_template;
    std::vector<std::string> required_keys;
};

inline SimResult invalid_result(std::string why)
{
    SimResult r;
    r.sim_valid = false;
    r.diagnostics = std::move(why);
    return r;
}

// ---------------------------------------------------------------------------
// Analytic ring-oscillator model
// ---------------------------------------------------------------------------

/// Recognises an odd ring of complementary inverters between the rails.
/// Stage delay is t_inv, plus t_inv/2 per extra gate on the stage output
/// and t_inv per unit capacitor loading it. f = 1 / (2 * sum of delays).
inline SimResult evaluate_analytic_ro(const CircuitGraph& g, const EvaluatorSpec& spec)
{
    auto vdd = g.find_kind(NodeKind::SupplyNet), vss = g.find_kind(NodeKind::GroundNet);
    if (!vdd || !vss) return invalid_result("missing supply or ground");
    const int n = g.num_nodes();

    struct Channel {
        int gate = -1, rail = -1, other = -1;
    };
    // Channel ends of a transistor with one end on `rail`.
    auto channel = [&](int m, int rail) -> std::optional<Channel> {
        auto gt = g.terminal_net(m, EdgeKind::Gate), d = g.terminal_net(m, EdgeKind::Drain),
             s = g.terminal_net(m, EdgeKind::Source);
        if (!gt || !d || !s) return std::nullopt;
        if (*s == rail && *d != rail) return Channel{*gt, rail, *d};
        if (*d == rail && *s != rail) return Channel{*gt, rail, *s};
        return std::nullopt;
    };

    struct Inverter {
        int in, out;
    };
    std::vector<Inverter> inverters;
    std::vector<char> used(static_cast<std::size_t>(n), 0);
    std::vector<int> caps;
    for (int p = 0; p < n; ++p) {
        if (g.kind(p) != NodeKind::Pmos) continue;
        auto pc = channel(p, *vdd);
        if (!pc) return invalid_result("PMOS not tied to supply");
        bool matched = false;
        for (int q = 0; q < n && !matched; ++q) {
            if (g.kind(q) != NodeKind::Nmos || used[q]) continue;
            auto nc = channel(q, *vss);
            if (nc && nc->gate == pc->gate && nc->other == pc->other) {
                used[q] = used[p] = 1;
                inverters.push_back({pc->gate, pc->other});
                matched = true;
            }
        }
        if (!matched) return invalid_result("unpaired PMOS");
    }
    for (int u = 0; u < n; ++u) {
        NodeKind k = g.kind(u);
        if (k == NodeKind::Nmos && !used[u]) return invalid_result("unpaired NMOS");
        if (k == NodeKind::Resistor) return invalid_result("resistor in ring structure");
        if (k == NodeKind::Capacitor) caps.push_back(u);
    }
    if (inverters.empty()) return invalid_result("no inverters");

    std::vector<int> driver(static_cast<std::size_t>(n), -1);
    for (int i = 0; i < static_cast<int>(inverters.size()); ++i) {
        int out = inverters[i].out;
        if (driver[out] >= 0) return invalid_result("net driven by two inverters");
        if (g.kind(out) == NodeKind::SupplyNet || g.kind(out) == NodeKind::GroundNet)
            return invalid_result("inverter output shorted to rail");
        driver[out] = i;
    }
    for (const auto& inv : inverters)
        if (driver[inv.in] < 0) return invalid_result("floating inverter input");

    std::vector<int> fanout(static_cast<std::size_t>(n), 0), cap_load(static_cast<std::size_t>(n), 0);
    for (const auto& inv : inverters) ++fanout[inv.in];
    for (int c : caps) {
        int a = *g.terminal_net(c, EdgeKind::PassivePlus), b = *g.terminal_net(c, EdgeKind::PassiveMinus);
        bool a_rail = a == *vdd || a == *vss, b_rail = b == *vdd || b == *vss;
        if (a_rail == b_rail) return invalid_result("capacitor not a load to a rail");
        int node = a_rail ? b : a;
        if (driver[node] < 0) return invalid_result("capacitor on undriven net");
        ++cap_load[node];
    }

    // Each inverter has at most one predecessor (the driver of its input).
    const int m = static_cast<int>(inverters.size());
    std::vector<int> pred(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) pred[i] = driver[inverters[i].in];
    std::vector<int> color(static_cast<std::size_t>(m), 0);
    std::vector<std::vector<int>> cycles;
    for (int start = 0; start < m; ++start) {
        if (color[start]) continue;
        std::vector<int> path;
        int u = start;
        while (u >= 0 && color[u] == 0) {
            color[u] = 1;
            path.push_back(u);
            u = pred[u];
        }
        if (u >= 0 && color[u] == 1) {
            auto it = std::find(path.begin(), path.end(), u);
            cycles.emplace_back(it, path.end());
        }
        for (int v : path) color[v] = 2;
    }
    if (cycles.size() != 1) return invalid_result(cycles.empty() ? "no feedback loop" : "multiple loops");
    const auto& ring = cycles.front();
    const int stages = static_cast<int>(ring.size());
    if (stages < 3 || stages % 2 == 0) return invalid_result("ring of " + std::to_string(stages) + " stages does not oscillate");

    double loop_delay = 0.0;
    for (int i : ring) {
        int out = inverters[i].out;
        loop_delay += spec.t_inv * (1.0 + 0.5 * (fanout[out] - 1) + cap_load[out]);
    }
    SimResult r;
    r.sim_valid = true;
    r.measurements["frequency"] = {1.0 / (2.0 * loop_delay), "Hz"};
    r.measurements["duty_cycle"] = {50.0, "%"};
    r.measurements["stages"] = {static_cast<double>(stages), ""};
    r.diagnostics = std::to_string(stages) + "-stage ring";
    return r;
}

// ---------------------------------------------------------------------------
// Linear small-signal AC analysis (modified nodal analysis)
// ---------------------------------------------------------------------------

struct FrequencyGrid {
    double f_min = 1.0;
    double f_max = 100e9;
    int points_per_decade = 10;

    [[nodiscard]] std::vector<double> points() const
    {
        std::vector<double> out;
        const double decades = std::log10(f_max / f_min);
        const int count = static_cast<int>(std::ceil(decades * points_per_decade));
        for (int i = 0; i <= count; ++i) out.push_back(f_min * std::pow(10.0, decades * i / count));
        return out;
    }
};

namespace detail {

inline bool starts_with(const std::string& s, const char* p) { return s.rfind(p, 0) == 0; }

/// MOS devices whose channel lies on some supply-to-ground DC path.
inline std::vector<int> unbiased_transistors(const CircuitGraph& g, int vdd, int vss)
{
    const int n = g.num_nodes();
    std::vector<int> bad;
    struct Link {
        int dev, a, b;
    };
    std::vector<Link> links;
    for (int u = 0; u < n; ++u) {
        NodeKind k = g.kind(u);
        if (is_transistor(k)) {
            auto d = g.terminal_net(u, EdgeKind::Drain), s = g.terminal_net(u, EdgeKind::Source);
            if (d && s) links.push_back({u, *d, *s});
        } else if (k == NodeKind::Resistor) {
            links.push_back({u, *g.terminal_net(u, EdgeKind::PassivePlus), *g.terminal_net(u, EdgeKind::PassiveMinus)});
        }
    }
    auto reach = [&](int from, int skip) {
        std::vector<char> seen(static_cast<std::size_t>(n), 0);
        std::vector<int> stack{from};
        seen[from] = 1;
        while (!stack.empty()) {
            int u = stack.back();
            stack.pop_back();
            for (const auto& l : links) {
                if (l.dev == skip) continue;
                int v = l.a == u ? l.b : (l.b == u ? l.a : -1);
                if (v >= 0 && !seen[v]) { seen[v] = 1; stack.push_back(v); }
            }
        }
        return seen;
    };
    for (int u = 0; u < n; ++u) {
        if (!is_transistor(g.kind(u))) continue;
        auto d = g.terminal_net(u, EdgeKind::Drain), s = g.terminal_net(u, EdgeKind::Source);
        if (!d || !s) { bad.push_back(u); continue; }
        auto from_vdd = reach(vdd, u), from_vss = reach(vss, u);
        bool ok = (from_vdd[*d] && from_vss[*s]) || (from_vdd[*s] && from_vss[*d]);
        if (!ok) bad.push_back(u);
    }
    return bad;
}

} // namespace detail

/// Small-signal AC evaluation. IO nets labelled in* are driven (one input:
/// 1 V; a p/n pair: +-0.5 V), out* are observed and loaded with c_load,
/// vb*/ib*/clk* are AC ground. MOS: gm * v_gs from drain to source plus r_o.
inline SimResult evaluate_mna_ac(const CircuitGraph& g, const EvaluatorSpec& spec, const FrequencyGrid& grid = {})
{
    using cd = std::complex<double>;
    auto vdd = g.find_kind(NodeKind::SupplyNet), vss = g.find_kind(NodeKind::GroundNet);
    if (!vdd || !vss) return invalid_result("missing supply or ground");
    if (!validate_structure(g).complete) return invalid_result("structurally incomplete");
    if (auto bad = detail::unbiased_transistors(g, *vdd, *vss); !bad.empty())
        return invalid_result("transistor " + std::to_string(bad.front()) + " has no supply-to-ground DC path");

    const int n = g.num_nodes();
    std::vector<int> inputs, outputs;
    std::vector<double> drive(static_cast<std::size_t>(n), 0.0);
    std::vector<char> known(static_cast<std::size_t>(n), 0);
    for (int u = 0; u < n; ++u) {
        const auto& nd = g.nodes()[u];
        if (nd.kind == NodeKind::SupplyNet || nd.kind == NodeKind::GroundNet) known[u] = 1;
        if (nd.kind != NodeKind::IoNet) continue;
        if (detail::starts_with(nd.label, "in")) inputs.push_back(u);
        else if (detail::starts_with(nd.label, "out")) outputs.push_back(u);
        else known[u] = 1; // bias and clock nets
    }
    if (inputs.empty()) return invalid_result("no input nets");
    if (outputs.empty()) return invalid_result("no output nets");
    if (inputs.size() == 1) {
        drive[inputs[0]] = 1.0;
    } else if (inputs.size() == 2) {
        for (int u : inputs) {
            const auto& lbl = g.nodes()[u].label;
            drive[u] = (!lbl.empty() && (lbl.back() == 'n' || lbl.back() == '-')) ? -0.5 : 0.5;
        }
        if (drive[inputs[0]] == drive[inputs[1]]) drive[inputs[1]] = -drive[inputs[0]];
    } else {
        return invalid_result("more than two input nets");
    }
    for (int u : inputs) known[u] = 1;

    std::vector<int> index(static_cast<std::size_t>(n), -1);
    int unknowns = 0;
    for (int u = 0; u < n; ++u)
        if (is_net(g.kind(u)) && !known[u]) index[u] = unknowns++;
    if (unknowns == 0) return invalid_result("no free nodes");

    auto solve_at = [&](double f, std::vector<cd>& volts, double& residual) -> bool {
        const double w = 2.0 * std::numbers::pi * f;
        Eigen::MatrixXcd Y = Eigen::MatrixXcd::Zero(unknowns, unknowns);
        Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(unknowns);
        // Stamp into row `a` the current leaving node a: coef * v(b).
        auto stamp = [&](int a, int b, cd coef) {
            if (index[a] < 0) return;
            if (index[b] >= 0) Y(index[a], index[b]) += coef;
            else rhs(index[a]) -= coef * drive[b];
        };
        auto admittance = [&](int a, int b, cd y) {
            stamp(a, a, y);
            stamp(a, b, -y);
            stamp(b, b, y);
            stamp(b, a, -y);
        };
        for (int u = 0; u < n; ++u) {
            NodeKind k = g.kind(u);
            if (k == NodeKind::Resistor) {
                admittance(*g.terminal_net(u, EdgeKind::PassivePlus), *g.terminal_net(u, EdgeKind::PassiveMinus),
                           cd(1.0 / spec.r_unit, 0.0));
            } else if (k == NodeKind::Capacitor) {
                admittance(*g.terminal_net(u, EdgeKind::PassivePlus), *g.terminal_net(u, EdgeKind::PassiveMinus),
                           cd(0.0, w * spec.c_unit));
            } else if (is_transistor(k)) {
                int d = *g.terminal_net(u, EdgeKind::Drain), s = *g.terminal_net(u, EdgeKind::Source),
                    gt = *g.terminal_net(u, EdgeKind::Gate);
                admittance(d, s, cd(1.0 / spec.ro, 0.0));
                stamp(d, gt, spec.gm);
                stamp(d, s, -spec.gm);
                stamp(s, gt, -spec.gm);
                stamp(s, s, spec.gm);
            }
        }
        if (spec.c_load > 0.0)
            for (int o : outputs) stamp(o, o, cd(0.0, w * spec.c_load));

        Eigen::FullPivLU<Eigen::MatrixXcd> lu(Y);
        if (!lu.isInvertible()) return false;
        Eigen::VectorXcd x = lu.solve(rhs);
        const double bnorm = rhs.norm();
        residual = bnorm > 0 ? (Y * x - rhs).norm() / bnorm : (Y * x - rhs).norm();
        if (!x.allFinite() || residual > 1e-9) return false;
        volts.assign(static_cast<std::size_t>(n), cd(0.0, 0.0));
        for (int u = 0; u < n; ++u) volts[u] = index[u] >= 0 ? x(index[u]) : cd(drive[u], 0.0);
        return true;
    };

    SimResult r;
    auto response = [&](double f, double& gain, double& mismatch_db) -> bool {
        std::vector<cd> v;
        double res = 0.0;
        if (!solve_at(f, v, res)) return false;
        r.max_residual = std::max(r.max_residual, res);
        if (outputs.size() == 1) {
            gain = std::abs(v[outputs[0]]);
            mismatch_db = 0.0;
        } else {
            gain = std::abs(v[outputs[0]] - v[outputs[1]]);
            double a = std::abs(v[outputs[0]]), b = std::abs(v[outputs[1]]);
            mismatch_db = (a > 0 && b > 0) ? std::abs(20.0 * std::log10(a / b)) : 1e3;
        }
        return true;
    };

    auto freqs = grid.points();
    double g0 = 0.0, mm0 = 0.0;
    if (!response(freqs.front(), g0, mm0)) return invalid_result("singular small-signal system");
    if (!(g0 > 0.0)) return invalid_result("zero gain");
    const double corner = g0 / std::sqrt(2.0);
    double bandwidth = freqs.back();
    bool rolled_off = false;
    for (std::size_t i = 1; i < freqs.size(); ++i) {
        double gi = 0.0, mmi = 0.0;
        if (!response(freqs[i], gi, mmi)) return invalid_result("singular small-signal system");
        if (gi < corner) {
            double lo = std::log(freqs[i - 1]), hi = std::log(freqs[i]);
            for (int it = 0; it < 60; ++it) {
                double mid = 0.5 * (lo + hi), gm = 0.0, mmm = 0.0;
                if (!response(std::exp(mid), gm, mmm)) return invalid_result("singular small-signal system");
                (gm < corner ? hi : lo) = mid;
            }
            bandwidth = std::exp(0.5 * (lo + hi));
            rolled_off = true;
            break;
        }
    }
    r.sim_valid = true;
    r.measurements["gain"] = {g0, "V/V"};
    r.measurements["gain_db"] = {20.0 * std::log10(g0), "dB"};
    r.measurements["bandwidth"] = {bandwidth, "Hz"};
    if (outputs.size() == 2) r.measurements["gain_mismatch"] = {mm0, "dB"};
    if (!rolled_off) r.diagnostics = "no roll-off inside the frequency grid";
    return r;
}

} // namespace astrl
