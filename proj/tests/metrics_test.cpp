#include <gtest/gtest.h>

#include <filesystem>

#include "astrl/metrics.hpp"
#include "fixtures.hpp"

using namespace astrl;
namespace fs = std::filesystem;

TEST(Metrics, EmptySetIsUndefined)
{
    const auto r = aggregate_metrics({});
    EXPECT_EQ(r.designs, 0);
    EXPECT_FALSE(r.simulation_validity.has_value());
    const auto text = format_metrics(r);
    EXPECT_NE(text.find("simulation validity: undefined"), std::string::npos);
    EXPECT_EQ(text.find('%'), std::string::npos);
}

TEST(Metrics, ClassificationAndPercentages)
{
    const auto task = load_task(fixtures::data("tasks/ro_toy.json"));
    const auto r3 = fixtures::inverter_ring(3), r5 = fixtures::inverter_ring(5), r4 = fixtures::inverter_ring(4);
    const std::set<std::uint64_t> index{canonical_hash(r3)};
    std::vector<DesignRow> rows;
    for (const auto* g : {&r3, &r5, &r4}) {
        const auto sim = evaluate_design(*g, task);
        rows.push_back(classify_design("d", *g, emit_netlist(*g), sim, &task, index));
    }
    // a design whose netlist is missing
    rows.push_back(classify_design("e", r5, std::nullopt, evaluate_design(r5, task), &task, index));
    EXPECT_TRUE(rows[0].spec_met);
    EXPECT_FALSE(rows[0].novel);
    EXPECT_TRUE(rows[1].sim_valid);
    EXPECT_FALSE(rows[1].spec_met); // 5 stages run at 3/5 of the target
    EXPECT_FALSE(rows[2].sim_valid);
    EXPECT_FALSE(rows[3].netlist_valid);
    const auto rep = aggregate_metrics(rows);
    EXPECT_DOUBLE_EQ(*rep.netlist_validity, 75.0);
    EXPECT_DOUBLE_EQ(*rep.simulation_validity, 75.0);
    EXPECT_DOUBLE_EQ(*rep.spec_fulfillment, 25.0);
    EXPECT_DOUBLE_EQ(*rep.novelty, 75.0);
}

TEST(Metrics, DatasetIndexRoundTrip)
{
    const auto dir_index = load_dataset_index(fixtures::data("experts"));
    EXPECT_EQ(dir_index.size(), 12u);
    const auto path = (fs::temp_directory_path() / "astrl_index_test.json").string();
    write_file(path, dataset_index_json(dir_index).dump());
    EXPECT_EQ(load_dataset_index(path), dir_index);
    fs::remove(path);
    EXPECT_TRUE(load_dataset_index("").empty());
}

TEST(Metrics, DatasetDesignsAreNotNovel)
{
    const auto designs = load_netlist_dir(fixtures::data("experts"));
    const auto index = load_dataset_index(fixtures::data("experts"));
    for (const auto& d : designs) {
        std::mt19937_64 rng(canonical_hash(d.graph));
        const auto shuffled = permute_nodes(d.graph, fixtures::random_permutation(d.graph.num_nodes(), rng));
        const auto row = classify_design(d.name, shuffled, emit_netlist(shuffled), SimResult{}, nullptr, index);
        EXPECT_FALSE(row.novel) << d.name;
        EXPECT_TRUE(row.netlist_valid) << d.name;
    }
}

TEST(Metrics, SimResultJsonRoundTrip)
{
    SimResult r;
    r.sim_valid = true;
    r.measurements["delay"] = {1.25e-10, "s"};
    r.diagnostics = "ok";
    const auto back = sim_result_from_json(sim_result_to_json(r));
    EXPECT_EQ(back.sim_valid, r.sim_valid);
    EXPECT_EQ(back.measurements.at("delay").value, 1.25e-10);
    EXPECT_EQ(back.measurements.at("delay").unit, "s");
}
