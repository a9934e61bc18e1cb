#pragma once

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <functional>
#include <mutex>
#include <regex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include "astrl/evaluators.hpp"
#include "astrl/graph_io.hpp"

namespace astrl {

// External simulator protocol:
//   deck   = testbench template with every "{NETLIST}" replaced by the netlist
//   run    = <engine> deck.sp, cwd = private temp dir, stdout captured
//   output = lines "<name> = <number> [unit]"; anything else is ignored
// Nonzero exit, timeout, or a missing required key makes the result sim-invalid.

inline constexpr const char* kEngineEnvVar = "ASTRL_SIM_ENGINE";

inline std::string resolve_engine(const EvaluatorSpec& spec)
{
    if (!spec.engine.empty()) return spec.engine;
    if (const char* env = std::getenv(kEngineEnvVar)) return env;
    return {};
}

/// Fails fast when no runnable engine is configured.
inline std::string require_engine(const EvaluatorSpec& spec)
{
    auto engine = resolve_engine(spec);
    if (engine.empty())
        throw Error(Errc::EngineNotConfigured, std::string("set ") + kEngineEnvVar + " or evaluator.engine");
    if (::access(engine.c_str(), X_OK) != 0)
        throw Error(Errc::EngineNotConfigured, "engine not executable: " + engine);
    return engine;
}

inline std::map<std::string, Measurement> parse_measurements(const std::string& text)
{
    static const std::regex line_re(R"(^\s*([A-Za-z_][A-Za-z0-9_.]*)\s*=\s*([-+0-9.eE]+|[-+]?inf|nan)\s*(\S*)\s*$)");
    std::map<std::string, Measurement> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        std::smatch m;
        if (!std::regex_match(line, m, line_re)) continue;
        char* end = nullptr;
        const std::string num = m[2].str();
        double v = std::strtod(num.c_str(), &end);
        if (end == num.c_str() || *end != '\0') continue;
        out[m[1].str()] = {v, m[3].str()};
    }
    return out;
}

inline std::string fill_template(const std::string& tmpl, const std::string& netlist)
{
    static const std::string token = "{NETLIST}";
    std::string out = tmpl;
    for (auto pos = out.find(token); pos != std::string::npos; pos = out.find(token, pos + netlist.size()))
        out.replace(pos, token.size(), netlist);
    return out;
}

namespace detail {

struct ProcessOutcome {
    bool timed_out = false;
    int exit_code = -1;
    std::string stdout_text;
};

inline ProcessOutcome run_process(const std::string& engine, const std::filesystem::path& dir,
                                  const std::string& deck, double timeout_s)
{
    int fds[2];
    if (::pipe(fds) != 0) throw Error(Errc::Io, "pipe failed");
    pid_t pid = ::fork();
    if (pid < 0) {
        ::close(fds[0]);
        ::close(fds[1]);
        throw Error(Errc::Io, "fork failed");
    }
    if (pid == 0) {
        ::setpgid(0, 0);
        ::dup2(fds[1], STDOUT_FILENO);
        int devnull = ::open("/dev/null", O_WRONLY);
        if (devnull >= 0) ::dup2(devnull, STDERR_FILENO);
        ::close(fds[0]);
        ::close(fds[1]);
        if (::chdir(dir.c_str()) != 0) ::_exit(126);
        ::execl(engine.c_str(), engine.c_str(), deck.c_str(), static_cast<char*>(nullptr));
        ::_exit(127);
    }
    ::close(fds[1]);
    ProcessOutcome out;
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_s);
    char buf[4096];
    for (;;) {
        auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) {
            out.timed_out = true;
            break;
        }
        pollfd p{fds[0], POLLIN, 0};
        int rc = ::poll(&p, 1, static_cast<int>(std::min<long long>(left.count(), 1000)));
        if (rc < 0 && errno == EINTR) continue;
        if (rc <= 0) continue;
        ssize_t got = ::read(fds[0], buf, sizeof buf);
        if (got <= 0) break;
        out.stdout_text.append(buf, static_cast<std::size_t>(got));
    }
    ::close(fds[0]);
    int status = 0;
    if (out.timed_out) {
        ::kill(-pid, SIGKILL);
        ::kill(pid, SIGKILL);
        ::waitpid(pid, &status, 0);
        return out;
    }
    // stdout closed; the process may still be running past the deadline.
    for (;;) {
        pid_t w = ::waitpid(pid, &status, WNOHANG);
        if (w == pid) break;
        if (std::chrono::steady_clock::now() >= deadline) {
            ::kill(-pid, SIGKILL);
            ::kill(pid, SIGKILL);
            ::waitpid(pid, &status, 0);
            out.timed_out = true;
            return out;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    out.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + (WIFSIGNALED(status) ? WTERMSIG(status) : 0);
    return out;
}

} // namespace detail

/// Runs the configured engine on one netlist inside a private temp dir.
inline SimResult evaluate_external(const std::string& netlist, const std::string& testbench_template,
                                   const EvaluatorSpec& spec)
{
    const std::string engine = require_engine(spec);
    std::string pattern = (std::filesystem::temp_directory_path() / "astrl-job-XXXXXX").string();
    if (!::mkdtemp(pattern.data())) throw Error(Errc::Io, "mkdtemp failed");
    const std::filesystem::path dir(pattern);
    SimResult r;
    try {
        const std::string tmpl = testbench_template.empty() ? std::string("{NETLIST}") : testbench_template;
        write_file((dir / "deck.sp").string(), fill_template(tmpl, netlist));
        auto outcome = detail::run_process(engine, dir, "deck.sp", spec.timeout_s);
        if (outcome.timed_out) {
            r = invalid_result("timeout after " + std::to_string(spec.timeout_s) + " s");
        } else if (outcome.exit_code != 0) {
            r = invalid_result("engine exited with status " + std::to_string(outcome.exit_code));
        } else {
            r.measurements = parse_measurements(outcome.stdout_text);
            r.sim_valid = true;
            for (const auto& key : spec.required_keys) {
                if (!r.measurements.contains(key)) {
                    r.sim_valid = false;
                    r.diagnostics = "missing measurement '" + key + "'";
                    break;
                }
            }
            for (const auto& [k, m] : r.measurements) {
                if (!std::isfinite(m.value)) {
                    r.sim_valid = false;
                    r.diagnostics = "non-finite measurement '" + k + "'";
                }
            }
        }
    } catch (...) {
        std::error_code ec;
        std::filesystem::remove_all(dir, ec);
        throw;
    }
    std::error_code ec;
    std::filesystem::remove_all(dir, ec);
    return r;
}

struct PoolStats {
    int peak_in_flight = 0;
    int jobs = 0;
};

/// Runs jobs with at most `max_parallel` in flight; results keep input
/// order and a throwing job yields a sim-invalid result for that slot only.
inline std::vector<SimResult> evaluate_pool(const std::vector<std::function<SimResult()>>& jobs,
                                            int max_parallel = 16, PoolStats* stats = nullptr)
{
    std::vector<SimResult> results(jobs.size());
    if (jobs.empty()) return results;
    const int workers = std::max(1, std::min<int>(max_parallel, static_cast<int>(jobs.size())));
    std::atomic<std::size_t> next{0};
    std::atomic<int> in_flight{0}, peak{0};
    auto work = [&] {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= jobs.size()) return;
            int now = ++in_flight;
            int prev = peak.load();
            while (now > prev && !peak.compare_exchange_weak(prev, now)) {}
            try {
                results[i] = jobs[i]();
            } catch (const std::exception& ex) {
                results[i] = invalid_result(std::string("evaluation failed: ") + ex.what());
            } catch (...) {
                results[i] = invalid_result("evaluation failed");
            }
            --in_flight;
        }
    };
    if (workers == 1) {
        work();
    } else {
        std::vector<std::jthread> threads;
        for (int t = 0; t < workers; ++t) threads.emplace_back(work);
    }
    if (stats) {
        stats->peak_in_flight = peak.load();
        stats->jobs = static_cast<int>(jobs.size());
    }
    return results;
}

} // namespace astrl
