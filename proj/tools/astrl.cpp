// astrl: pretrain, train, generate and score circuit-generation policies.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <atomic>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "astrl/metrics.hpp"
#include "astrl/trainer.hpp"

#ifndef ASTRL_VERSION
#define ASTRL_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using namespace astrl;

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop.store(true); }

struct Common {
    std::uint64_t seed = 1;
    std::string config;
    bool quiet = false;
};

struct Ablations {
    bool no_disc = false, no_bc = false, no_mask = false, no_sym = false;

    void add(CLI::App* app)
    {
        app->add_flag("--no-disc", no_disc, "Disable the similarity discriminator");
        app->add_flag("--no-bc", no_bc, "Disable behavioural cloning during training");
        app->add_flag("--no-mask", no_mask, "Disable action masking");
        app->add_flag("--no-sym", no_sym, "Disable symmetric addition modifiers");
    }

    void apply(TrainConfig& c) const
    {
        if (no_disc) c.use_disc = false;
        if (no_bc) c.use_bc = false;
        if (no_mask) c.use_masks = false;
        if (no_sym) c.use_symmetry = false;
    }
};

TrainConfig load_config(const Common& common)
{
    TrainConfig c;
    if (!common.config.empty()) {
        json j;
        try {
            j = json::parse(read_file(common.config));
        } catch (const json::exception& ex) {
            throw Error(Errc::Config, common.config + ": " + ex.what());
        }
        c = train_config_from_json(j);
    }
    c.seed = common.seed;
    c.validate();
    return c;
}

// Write-then-rename so a reader never sees half a checkpoint.
void save_atomic(const PolicyNet& net, const std::string& path)
{
    const std::string tmp = path + ".tmp";
    net.save(tmp);
    fs::rename(tmp, path);
}

std::string file_hash(const std::string& path) { return hash_hex(fnv1a(read_file(path))); }

json manifest_base(const std::string& command, const std::vector<std::string>& argv, const TrainConfig& cfg)
{
    return {{"format", "astrl-manifest"},
            {"version", 1},
            {"astrl_version", ASTRL_VERSION},
            {"command", command},
            {"argv", argv},
            {"seed", cfg.seed},
            {"config", cfg.to_json()}};
}

void log(const Common& c, const std::string& line)
{
    if (!c.quiet) std::cerr << line << '\n';
}

// ---------------------------------------------------------------------------

struct PretrainArgs {
    std::string dataset, out, task, index_out;
    int epochs = -1;
};

int cmd_pretrain(const PretrainArgs& a, const Common& common, const std::vector<std::string>& argv)
{
    if (!fs::is_directory(a.dataset)) throw Error(Errc::Io, "dataset directory not found: " + a.dataset);
    TrainConfig cfg = load_config(common);
    if (a.epochs >= 0) cfg.pretrain_epochs = a.epochs;

    const auto designs = load_netlist_dir(a.dataset);
    if (designs.empty()) throw Error(Errc::Config, "no netlists in " + a.dataset);
    std::vector<ExpertSample> samples;
    const auto trajs = dataset_trajectories(designs);
    for (std::size_t i = 0; i < trajs.size(); ++i) {
        const auto& t = trajs[i];
        if (canonical_hash(replay(t)) != canonical_hash(designs[i].graph))
            throw Error(Errc::InfeasibleExpertAction, "expert trajectory does not replay: " + t.name);
        auto s = expert_samples(t);
        samples.insert(samples.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
    }
    std::string task_hash;
    if (!a.task.empty()) {
        const auto task = load_task(a.task);
        auto s = task_expert_samples(task, cfg);
        samples.insert(samples.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
        task_hash = file_hash(a.task);
    }
    log(common, "pretrain: " + std::to_string(designs.size()) + " designs, " + std::to_string(samples.size()) +
                    " expert steps, " + std::to_string(cfg.pretrain_epochs) + " epochs");

    PolicyConfig pc;
    pc.seed = cfg.seed;
    PolicyNet net(pc);
    const auto rep = pretrain_bc(net, samples, cfg, ActionConfig{}, 32, [&](int ep, double loss) {
        if ((ep + 1) % 10 == 0) log(common, "  epoch " + std::to_string(ep + 1) + " loss " + std::to_string(loss));
    });
    save_atomic(net, a.out);

    std::set<std::uint64_t> index;
    for (const auto& d : designs) index.insert(canonical_hash(d.graph));
    if (!a.index_out.empty()) write_file(a.index_out, dataset_index_json(index).dump(2) + "\n");

    json m = manifest_base("pretrain", argv, cfg);
    m["dataset"] = {{"path", a.dataset}, {"designs", designs.size()}, {"samples", rep.samples}};
    if (!task_hash.empty()) m["task"] = {{"path", a.task}, {"hash", task_hash}};
    m["checkpoint"] = {{"path", a.out}, {"fingerprint", hash_hex(net.fingerprint())}};
    m["report"] = {{"epochs", rep.epochs},
                   {"initial_loss", rep.initial_loss},
                   {"final_loss", rep.final_loss},
                   {"accuracy", rep.accuracy}};
    write_file(a.out + ".manifest.json", m.dump(2) + "\n");

    std::printf("samples %d  epochs %d  loss %.4f -> %.4f  top-1 accuracy %.1f%%\n", rep.samples, rep.epochs,
                rep.initial_loss, rep.final_loss, 100.0 * rep.accuracy);
    return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string task, init, out, metrics;
    int iterations = -1;
    Ablations ablations;
};

int cmd_train(const TrainArgs& a, const Common& common, const std::vector<std::string>& argv)
{
    TrainConfig cfg = load_config(common);
    if (a.iterations >= 0) cfg.iterations = a.iterations;
    a.ablations.apply(cfg);
    const auto task = load_task(a.task);
    check_evaluator_ready(task);

    PolicyConfig pc;
    pc.seed = cfg.seed;
    PolicyNet net(pc);
    std::string init_fp;
    if (!a.init.empty()) {
        if (!fs::exists(a.init)) throw Error(Errc::Io, "checkpoint not found: " + a.init);
        net.load(a.init);
        init_fp = hash_hex(net.fingerprint());
    } else {
        log(common, "train: no --init checkpoint, starting from random weights");
    }

    std::ofstream csv;
    if (!a.metrics.empty()) {
        csv.open(a.metrics);
        if (!csv) throw Error(Errc::Io, "cannot write " + a.metrics);
        csv << metrics_csv_header(task) << '\n';
    }

    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    TrainHooks hooks;
    hooks.stop = &g_stop;
    hooks.on_iteration = [&](const IterationMetrics& m) {
        if (csv.is_open()) csv << metrics_csv_row(m, task) << std::endl;
        char buf[200];
        std::snprintf(buf, sizeof buf, "iter %4d  return %7.2f  sim-valid %5.1f%%  spec %5.1f%%  steps %5.1f  %.1fs",
                      m.iteration, m.mean_return, 100.0 * m.simulation_validity, 100.0 * m.spec_fulfillment,
                      m.mean_steps, m.seconds);
        log(common, buf);
    };
    hooks.on_checkpoint = [&](int) { save_atomic(net, a.out); };

    const auto sum = train(net, task, cfg, hooks);
    save_atomic(net, a.out);

    json m = manifest_base("train", argv, cfg);
    m["task"] = {{"path", a.task}, {"hash", file_hash(a.task)}};
    if (!init_fp.empty()) m["init_checkpoint"] = {{"path", a.init}, {"fingerprint", init_fp}};
    m["checkpoint"] = {{"path", a.out}, {"fingerprint", hash_hex(net.fingerprint())}};
    m["metrics_csv"] = {{"path", a.metrics}, {"schema_version", 1}};
    m["summary"] = {{"iterations", sum.history.size()},
                    {"interrupted", sum.interrupted},
                    {"spec_meeting_designs", sum.spec_meeting_designs},
                    {"expert_samples", sum.expert_samples}};
    if (sum.discriminator_trained)
        m["discriminator"] = {{"positives", sum.discriminator.positives},
                              {"negatives", sum.discriminator.negatives},
                              {"accuracy", sum.discriminator.accuracy}};
    write_file(a.out + ".manifest.json", m.dump(2) + "\n");

    std::printf("%s after %zu iterations; %d spec-meeting designs\n", sum.interrupted ? "stopped" : "finished",
                sum.history.size(), sum.spec_meeting_designs);
    return 0;
}

// ---------------------------------------------------------------------------

struct GenerateArgs {
    std::string checkpoint, task, out, index;
    int n = 0;
    bool greedy = false;
    Ablations ablations;
};

int cmd_generate(const GenerateArgs& a, const Common& common, const std::vector<std::string>& argv)
{
    if (a.n < 0) throw Error(Errc::Config, "n must be non-negative");
    TrainConfig cfg = load_config(common);
    a.ablations.apply(cfg);
    const auto task = load_task(a.task);
    if (!fs::exists(a.checkpoint)) throw Error(Errc::Io, "checkpoint not found: " + a.checkpoint);
    const auto index = load_dataset_index(a.index, task.graph);
    if (a.n > 0) check_evaluator_ready(task);
    PolicyNet net;
    net.load(a.checkpoint);
    fs::create_directories(a.out);

    const auto batch = collect_rollouts(net, task, cfg, {}, a.n, cfg.seed, a.greedy);
    std::vector<DesignRow> rows;
    json designs = json::array();
    for (std::size_t i = 0; i < batch.designs.size(); ++i) {
        const auto& d = batch.designs[i];
        char stem[32];
        std::snprintf(stem, sizeof stem, "design_%04zu", i);
        const fs::path base = fs::path(a.out) / stem;
        std::optional<std::string> netlist;
        try {
            netlist = emit_netlist(d.graph, task.graph);
        } catch (const Error&) {
        }
        if (netlist) write_file(base.string() + ".sp", *netlist);
        write_file(base.string() + ".json", graph_to_json(d.graph).dump() + "\n");
        write_file(base.string() + ".sim", sim_result_to_json(d.sim).dump(2) + "\n");
        rows.push_back(classify_design(stem, d.graph, netlist, d.sim, &task, index));
        designs.push_back({{"name", stem}, {"seed", batch.trajectories[i].seed}, {"hash", hash_hex(rows.back().hash)}});
    }
    const auto report = aggregate_metrics(std::move(rows));

    json m = manifest_base("generate", argv, cfg);
    m["task"] = {{"path", a.task}, {"hash", file_hash(a.task)}};
    m["checkpoint"] = {{"path", a.checkpoint}, {"fingerprint", hash_hex(net.fingerprint())}};
    m["n"] = a.n;
    m["greedy"] = a.greedy;
    m["designs"] = designs;
    if (!a.index.empty()) m["dataset_index"] = {{"path", a.index}, {"entries", index.size()}};
    m["metrics"] = report.to_json();
    m["metrics"].erase("rows");
    write_file((fs::path(a.out) / "manifest.json").string(), m.dump(2) + "\n");

    std::cout << format_metrics(report);
    return 0;
}

// ---------------------------------------------------------------------------

struct MetricsArgs {
    std::string designs, index, task, json_out;
};

int cmd_metrics(const MetricsArgs& a, const Common&)
{
    std::optional<TaskSpec> task;
    if (!a.task.empty()) task = load_task(a.task);
    const auto index = load_dataset_index(a.index, task ? task->graph : GraphConfig{});
    if (!fs::is_directory(a.designs)) throw Error(Errc::Io, "designs directory not found: " + a.designs);
    const auto report = metrics_from_dir(a.designs, index, task ? &*task : nullptr);
    if (!a.json_out.empty()) write_file(a.json_out, report.to_json().dump(2) + "\n");
    std::cout << format_metrics(report);
    return 0;
}

int cmd_index(const std::string& dataset, const std::string& out)
{
    if (!fs::is_directory(dataset)) throw Error(Errc::Io, "dataset directory not found: " + dataset);
    const auto idx = load_dataset_index(dataset);
    write_file(out, dataset_index_json(idx).dump(2) + "\n");
    std::printf("%zu canonical hashes\n", idx.size());
    return 0;
}

int exit_code_for(Errc c)
{
    switch (c) {
    case Errc::Config:
    case Errc::Io:
    case Errc::EngineNotConfigured:
    case Errc::MalformedScaffold: return 2;
    default: return 1;
    }
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Reinforcement-learning generation of transistor-level analog circuits"};
    app.set_version_flag("--version", ASTRL_VERSION);
    app.require_subcommand(1);
    Common common;
    app.add_option("--seed", common.seed, "Random seed")->capture_default_str();
    app.add_option("--config", common.config, "JSON file overriding training configuration fields");
    app.add_flag("-q,--quiet", common.quiet, "Suppress progress output");

    PretrainArgs pa;
    auto* pre = app.add_subcommand("pretrain", "Behavioural-cloning pretraining on a netlist dataset");
    pre->add_option("dataset_dir", pa.dataset, "Directory of .sp/.cir netlists")->required();
    pre->add_option("out_checkpoint", pa.out, "Checkpoint to write")->required();
    pre->add_option("--task", pa.task, "Also clone this task's expert designs");
    pre->add_option("--epochs", pa.epochs, "Override pretrain_epochs");
    pre->add_option("--index-out", pa.index_out, "Write the dataset's canonical-hash index here");

    TrainArgs ta;
    auto* tr = app.add_subcommand("train", "PPO training with annealed behavioural cloning");
    tr->add_option("task_file", ta.task, "Task JSON")->required();
    tr->add_option("out_checkpoint", ta.out, "Checkpoint written periodically and at the end")->required();
    tr->add_option("--init", ta.init, "Start from this checkpoint (usually a pretrained one)");
    tr->add_option("--metrics", ta.metrics, "Per-iteration metrics CSV");
    tr->add_option("--iterations", ta.iterations, "Override iterations");
    ta.ablations.add(tr);

    GenerateArgs ga;
    auto* gen = app.add_subcommand("generate", "Sample designs from a checkpoint");
    gen->add_option("checkpoint", ga.checkpoint, "Policy checkpoint")->required();
    gen->add_option("task_file", ga.task, "Task JSON")->required();
    gen->add_option("n", ga.n, "Number of rollouts")->required();
    gen->add_option("out_dir", ga.out, "Output directory")->required();
    gen->add_option("--dataset-index", ga.index, "Dataset directory or index JSON for novelty");
    gen->add_flag("--greedy", ga.greedy, "Take the most likely action at every head");
    ga.ablations.add(gen);

    MetricsArgs ma;
    auto* met = app.add_subcommand("metrics", "Recompute validity, fulfilment and novelty from a design directory");
    met->add_option("designs_dir", ma.designs, "Directory written by generate")->required();
    met->add_option("--dataset-index", ma.index, "Dataset directory or index JSON for novelty");
    met->add_option("--task", ma.task, "Task JSON (re-simulates built-in evaluators, enables fulfilment)");
    met->add_option("--json", ma.json_out, "Also write the report as JSON");

    std::string idx_dataset, idx_out;
    auto* idx = app.add_subcommand("index", "Write the canonical-hash index of a netlist dataset");
    idx->add_option("dataset_dir", idx_dataset)->required();
    idx->add_option("out_json", idx_out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    const std::vector<std::string> args(argv, argv + argc);
    try {
        if (*pre) return cmd_pretrain(pa, common, args);
        if (*tr) return cmd_train(ta, common, args);
        if (*gen) return cmd_generate(ga, common, args);
        if (*met) return cmd_metrics(ma, common);
        if (*idx) return cmd_index(idx_dataset, idx_out);
    } catch (const Error& e) {
        std::cerr << "astrl: " << e.what() << '\n';
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::cerr << "astrl: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
