#include <gtest/gtest.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>

#include "astrl/external.hpp"
#include "astrl/graph_io.hpp"

using namespace astrl;
namespace fs = std::filesystem;

namespace {

// Writes an executable shell script into a fresh temp dir.
class MockEngine {
public:
    explicit MockEngine(const std::string& body)
    {
        std::string pattern = (fs::temp_directory_path() / "astrl-mock-XXXXXX").string();
        dir_ = ::mkdtemp(pattern.data());
        path_ = (fs::path(dir_) / "engine.sh").string();
        write_file(path_, "#!/bin/sh\n" + body + "\n");
        fs::permissions(path_, fs::perms::owner_all);
    }
    ~MockEngine() { fs::remove_all(dir_); }
    [[nodiscard]] const std::string& path() const { return path_; }

private:
    std::string dir_, path_;
};

EvaluatorSpec spec_for(const MockEngine& e, std::vector<std::string> keys = {"delay", "noise"})
{
    EvaluatorSpec s;
    s.kind = EvaluatorKind::ExternalProcess;
    s.engine = e.path();
    s.required_keys = std::move(keys);
    s.timeout_s = 5.0;
    return s;
}

} // namespace

TEST(External, ParseMeasurements)
{
    const auto m = parse_measurements("delay = 1.5e-10 s\n  noise=2e-3 V\nrandom text\nx = abc\ngain = -3\n");
    ASSERT_EQ(m.size(), 3u);
    EXPECT_DOUBLE_EQ(m.at("delay").value, 1.5e-10);
    EXPECT_EQ(m.at("delay").unit, "s");
    EXPECT_DOUBLE_EQ(m.at("noise").value, 2e-3);
    EXPECT_DOUBLE_EQ(m.at("gain").value, -3.0);
}

TEST(External, FillTemplate)
{
    EXPECT_EQ(fill_template("a {NETLIST} b {NETLIST}", "X"), "a X b X");
    EXPECT_EQ(fill_template("none", "X"), "none");
    EXPECT_EQ(fill_template("{NETLIST}", "{NETLIST}"), "{NETLIST}");
}

TEST(External, EngineSeesTheFilledDeck)
{
    MockEngine e("grep -q 'M1 a b c' \"$1\" && grep -q '.tran' \"$1\" || exit 3\necho 'delay = 1e-10 s'\necho 'noise = 1e-3 V'");
    const auto r = evaluate_external("M1 a b c vss nfet", "{NETLIST}\n.tran 1p 1n\n", spec_for(e));
    EXPECT_TRUE(r.sim_valid) << r.diagnostics;
    EXPECT_DOUBLE_EQ(*r.get("delay"), 1e-10);
}

TEST(External, FailuresAreSimInvalid)
{
    MockEngine missing("echo 'delay = 1e-10'");
    EXPECT_FALSE(evaluate_external("x", "", spec_for(missing)).sim_valid);
    MockEngine bad_exit("echo 'delay = 1'; echo 'noise = 1'; exit 1");
    EXPECT_FALSE(evaluate_external("x", "", spec_for(bad_exit)).sim_valid);
    MockEngine non_finite("echo 'delay = nan'; echo 'noise = 1'");
    EXPECT_FALSE(evaluate_external("x", "", spec_for(non_finite)).sim_valid);
}

TEST(External, TimeoutKillsTheEngine)
{
    MockEngine slow("sleep 30\necho 'delay = 1'");
    auto s = spec_for(slow);
    s.timeout_s = 0.5;
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = evaluate_external("x", "", s);
    const double took = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    EXPECT_FALSE(r.sim_valid);
    EXPECT_NE(r.diagnostics.find("timeout"), std::string::npos);
    EXPECT_LT(took, 5.0);
}

TEST(External, UnconfiguredEngine)
{
    EvaluatorSpec s;
    s.kind = EvaluatorKind::ExternalProcess;
    const char* saved = std::getenv(kEngineEnvVar);
    const std::string keep = saved ? saved : "";
    ::unsetenv(kEngineEnvVar);
    try {
        evaluate_external("x", "", s);
        ADD_FAILURE() << "ran without an engine";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::EngineNotConfigured);
    }
    ::setenv(kEngineEnvVar, "/nonexistent/engine", 1);
    EXPECT_THROW(require_engine(s), Error);
    if (saved) ::setenv(kEngineEnvVar, keep.c_str(), 1);
    else ::unsetenv(kEngineEnvVar);
}

TEST(External, PoolBoundsConcurrencyAndKeepsOrder)
{
    MockEngine e("sleep 0.2\necho \"delay = $(wc -c < \"$1\")\"\necho 'noise = 1'");
    const auto s = spec_for(e);
    std::vector<std::function<SimResult()>> jobs;
    for (int i = 0; i < 40; ++i) {
        const std::string deck(static_cast<std::size_t>(i + 1), 'x');
        jobs.push_back([deck, s] { return evaluate_external(deck, "{NETLIST}", s); });
    }
    jobs.push_back([]() -> SimResult { throw std::runtime_error("boom"); });
    PoolStats stats;
    const auto t0 = std::chrono::steady_clock::now();
    const auto res = evaluate_pool(jobs, 16, &stats);
    const double took = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    ASSERT_EQ(res.size(), jobs.size());
    for (int i = 0; i < 40; ++i) {
        ASSERT_TRUE(res[i].sim_valid) << res[i].diagnostics;
        EXPECT_EQ(*res[i].get("delay"), i + 1);
    }
    EXPECT_FALSE(res.back().sim_valid);
    EXPECT_LE(stats.peak_in_flight, 16);
    EXPECT_GT(stats.peak_in_flight, 1);
    EXPECT_LT(took, 40 * 0.2);
}
