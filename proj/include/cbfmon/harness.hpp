#pragma once

/**
 * @file harness.hpp
 * @brief Batch experiment driver: seeded trace generation, horizon sweeps,
 *        per-bucket aggregation, and CSV / gnuplot emission.
 *
 * An experiment pairs one system with one or more barrier networks, rolls
 * n_traces closed-loop simulations from seeded initial states, monitors each
 * trace at every requested horizon, and buckets the traces per
 * (net, horizon) into all-clear versus violation. Initial states are drawn
 * once per net and shared across horizons, so horizon comparisons see the
 * same trajectories. Every monitored trace gets a fresh monitor; nothing is
 * shared between traces, which keeps the optional thread pool free of
 * ordering effects on anything except wall-clock columns.
 */

#include <Eigen/Dense>

#include <nlohmann/json.hpp>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "cbfmon/dynamics.hpp"
#include "cbfmon/monitor.hpp"
#include "cbfmon/relu_network.hpp"
#include "cbfmon/rng.hpp"
#include "cbfmon/synthetic.hpp"

namespace cbfmon {

struct ControllerSpec {
    enum class Kind { Zero, Proportional, Executable } kind = Kind::Zero;
    double gain = 1.0;
    Eigen::VectorXd target;  // empty = origin
    std::string command;     // executable: state on stdin, control on stdout
};

namespace detail {

inline Eigen::VectorXd run_executable_controller(const std::string& command,
                                                 const Eigen::VectorXd& x, int control_dim) {
    std::ostringstream line;
    line.precision(17);
    for (int i = 0; i < x.size(); ++i) line << (i ? " " : "") << x(i);
    std::string cmd = "printf '%s\\n' '" + line.str() + "' | " + command;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) throw std::runtime_error("controller command failed to start: " + command);
    std::string out;
    char buf[256];
    while (fgets(buf, sizeof buf, pipe)) out += buf;
    int rc = pclose(pipe);
    if (rc != 0) throw std::runtime_error("controller command exited nonzero: " + command);
    std::istringstream in(out);
    Eigen::VectorXd u(control_dim);
    for (int i = 0; i < control_dim; ++i)
        if (!(in >> u(i)))
            throw std::runtime_error("controller command produced too few values: " + command);
    return u;
}

} // namespace detail

/// Builds the closed-loop controller. Proportional drives toward a target
/// point through the input matrix, u = gain * B^T (target - x), which reduces
/// to plain proportional feedback when B is the identity; simulate clamps
/// the result into the control box.
inline Controller make_controller(const SystemSpec& spec, const ControllerSpec& cs) {
    const int m = spec.system.control_dim();
    const int n = spec.system.state_dim();
    switch (cs.kind) {
        case ControllerSpec::Kind::Zero:
            return [m](const Eigen::VectorXd&) { return Eigen::VectorXd::Zero(m); };
        case ControllerSpec::Kind::Proportional: {
            Eigen::VectorXd target =
                cs.target.size() ? cs.target : Eigen::VectorXd::Zero(n);
            if (target.size() != n)
                throw std::invalid_argument("controller target dimension mismatch");
            double gain = cs.gain;
            Eigen::MatrixXd Bt = spec.system.B.transpose();
            return [gain, target, Bt](const Eigen::VectorXd& x) {
                return (gain * (Bt * (target - x))).eval();
            };
        }
        case ControllerSpec::Kind::Executable: {
            std::string command = cs.command;
            return [command, m](const Eigen::VectorXd& x) {
                return detail::run_executable_controller(command, x, m);
            };
        }
    }
    throw std::logic_error("make_controller: unreachable");
}

struct NamedNetwork {
    std::string id;
    ReluNetwork net;
};

struct ExperimentConfig {
    std::string name = "experiment";
    SystemSpec spec;
    std::vector<NamedNetwork> networks;
    ControllerSpec controller;
    std::vector<int> horizons;       // nonempty, ascending
    int n_traces = 1;
    int trace_len = 50;              // closed-loop transitions per trace
    std::uint64_t seed = 0;
    double bloat = 0.0;
    bool calibrate = false;          // compute bloat from one-step defect probes
    double budget = 0.0;             // 0 = sampling period
    VerifierConfig verifier;
    int threads = 1;
    std::string output = "results.csv";
};

inline void validate_experiment(const ExperimentConfig& cfg) {
    validate_spec(cfg.spec);
    if (cfg.networks.empty())
        throw std::invalid_argument("experiment: at least one network required");
    if (cfg.horizons.empty())
        throw std::invalid_argument("experiment: horizons must be nonempty");
    for (std::size_t i = 1; i < cfg.horizons.size(); ++i)
        if (cfg.horizons[i] <= cfg.horizons[i - 1])
            throw std::invalid_argument("experiment: horizons must be strictly ascending");
    if (cfg.horizons.front() < 1)
        throw std::invalid_argument("experiment: horizons must be >= 1");
    if (cfg.n_traces < 1)
        throw std::invalid_argument("experiment: n_traces must be >= 1");
    if (cfg.trace_len < 1)
        throw std::invalid_argument("experiment: trace_len must be >= 1");
    if (cfg.threads < 1)
        throw std::invalid_argument("experiment: threads must be >= 1");
    for (const auto& nn : cfg.networks)
        if (nn.net.input_dim != cfg.spec.system.state_dim())
            throw std::invalid_argument("experiment: network '" + nn.id +
                                        "' input dimension mismatch");
}

/// Rejection-samples n states uniform over the initial set, keeping those the
/// barrier classifies as safe (B >= 0). Substreamed per state index so the
/// draw for trace t does not depend on how many rejections earlier traces
/// needed.
inline std::vector<Eigen::VectorXd> sample_initial_states(const SystemSpec& spec,
                                                          const ReluNetwork& net, int n,
                                                          std::uint64_t seed) {
    const Box& init = spec.initial_set;
    const int dim = static_cast<int>(init.dim());
    std::vector<Eigen::VectorXd> out;
    out.reserve(n);
    constexpr int kMaxAttempts = 1000000;
    for (int t = 0; t < n; ++t) {
        std::uint64_t stream = rng_substream(seed, static_cast<std::uint64_t>(t));
        bool found = false;
        for (int a = 0; a < kMaxAttempts && !found; ++a) {
            Eigen::VectorXd x(dim);
            for (int i = 0; i < dim; ++i)
                x(i) = rng_uniform(stream, static_cast<std::uint64_t>(a) * dim + i,
                                   init.lower(i), init.upper(i));
            if (forward(net, x) >= 0.0) {
                out.push_back(std::move(x));
                found = true;
            }
        }
        if (!found)
            throw std::runtime_error(
                "sample_initial_states: initial set contains too few safe states");
    }
    return out;
}

struct TraceSummary {
    std::string net;
    int horizon = 0;
    int trace = 0;
    int first_warning = -1;  // step index of the first 0 verdict, -1 if none
    Cause cause = Cause::None;
    int budget_overruns = 0;
    std::vector<double> step_ms;  // per observation, index 0 is warm-up
};

struct ResultsRow {
    std::string net;
    int horizon = 0;
    std::string outcome;  // "all-clear" or "violation"
    int n_traces = 0;
    double mean_ms = 0.0;
    double max_ms = 0.0;
    std::optional<int> first_warning_step;  // min over the bucket's traces
};

struct ExperimentResult {
    std::vector<ResultsRow> rows;
    std::vector<TraceSummary> traces;
    double bloat_used = 0.0;
};

namespace detail {

inline TraceSummary monitor_one_trace(const ExperimentConfig& cfg, const NamedNetwork& nn,
                                      int horizon, int trace_index, const Trace& tr) {
    MonitorConfig mc;
    mc.horizon_steps = horizon;
    mc.budget = cfg.budget;
    mc.bloat = cfg.bloat;
    mc.verifier = cfg.verifier;
    MonitorState st = monitor_init(cfg.spec, nn.net, mc);

    TraceSummary ts;
    ts.net = nn.id;
    ts.horizon = horizon;
    ts.trace = trace_index;
    ts.step_ms.reserve(tr.states.size());
    for (const auto& x : tr.states) {
        MonitorStep step = monitor_next(st, x);
        ts.step_ms.push_back(step.ms);
        if (step.cause == Cause::BudgetOverrun && step.verdict == 1) ++ts.budget_overruns;
        if (step.verdict == 0 && ts.first_warning < 0) {
            ts.first_warning = step.k;
            ts.cause = step.cause;
        }
    }
    return ts;
}

} // namespace detail

/// Runs the full sweep. Per net: sample initial states once, simulate each
/// trace once, then monitor the same trajectories at every horizon. Rows come
/// out sorted by (net order, horizon order, all-clear before violation) with
/// empty buckets omitted. Deterministic for a fixed config and seed up to the
/// timing columns, regardless of thread count.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    validate_experiment(cfg);
    ExperimentConfig work = cfg;
    if (work.calibrate) work.bloat = calibrate_bloat(work.spec);
    Controller controller = make_controller(work.spec, work.controller);

    struct Task {
        const NamedNetwork* nn;
        int horizon;
        int trace;
        const Trace* tr;
    };
    std::vector<Task> tasks;
    std::vector<std::vector<Trace>> traces_per_net(work.networks.size());

    for (std::size_t ni = 0; ni < work.networks.size(); ++ni) {
        const auto& nn = work.networks[ni];
        std::uint64_t net_seed = rng_substream(work.seed, 0x6e657400u + ni);
        auto x0s = sample_initial_states(work.spec, nn.net, work.n_traces, net_seed);
        auto& traces = traces_per_net[ni];
        traces.reserve(work.n_traces);
        for (int t = 0; t < work.n_traces; ++t)
            traces.push_back(simulate(work.spec, controller, x0s[t], work.trace_len));
        for (int h : work.horizons)
            for (int t = 0; t < work.n_traces; ++t)
                tasks.push_back(Task{&nn, h, t, &traces[t]});
    }

    std::vector<TraceSummary> summaries(tasks.size());
    const int n_threads = std::min<int>(work.threads, static_cast<int>(tasks.size()));
    if (n_threads <= 1) {
        for (std::size_t i = 0; i < tasks.size(); ++i)
            summaries[i] = detail::monitor_one_trace(work, *tasks[i].nn, tasks[i].horizon,
                                                     tasks[i].trace, *tasks[i].tr);
    } else {
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (;;) {
                std::size_t i = next.fetch_add(1);
                if (i >= tasks.size()) return;
                summaries[i] = detail::monitor_one_trace(work, *tasks[i].nn,
                                                         tasks[i].horizon, tasks[i].trace,
                                                         *tasks[i].tr);
            }
        };
        std::vector<std::thread> pool;
        pool.reserve(n_threads);
        for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    ExperimentResult res;
    res.bloat_used = work.bloat;
    res.traces = summaries;

    std::size_t idx = 0;
    for (std::size_t ni = 0; ni < work.networks.size(); ++ni) {
        for (int h : work.horizons) {
            struct Bucket {
                int count = 0;
                double sum_ms = 0.0;
                std::size_t n_ms = 0;
                double max_ms = 0.0;
                std::optional<int> first_warning;
            } clear, violation;
            for (int t = 0; t < work.n_traces; ++t, ++idx) {
                const TraceSummary& ts = summaries[idx];
                Bucket& b = ts.first_warning < 0 ? clear : violation;
                ++b.count;
                // Step 0 pays one-time setup costs; timings pool the rest.
                for (std::size_t s = 1; s < ts.step_ms.size(); ++s) {
                    b.sum_ms += ts.step_ms[s];
                    b.max_ms = std::max(b.max_ms, ts.step_ms[s]);
                    ++b.n_ms;
                }
                if (ts.first_warning >= 0)
                    b.first_warning = b.first_warning
                                          ? std::min(*b.first_warning, ts.first_warning)
                                          : ts.first_warning;
            }
            auto emit = [&](const Bucket& b, const char* outcome) {
                if (b.count == 0) return;
                ResultsRow row;
                row.net = work.networks[ni].id;
                row.horizon = h;
                row.outcome = outcome;
                row.n_traces = b.count;
                row.mean_ms = b.n_ms ? b.sum_ms / static_cast<double>(b.n_ms) : 0.0;
                row.max_ms = b.max_ms;
                row.first_warning_step = b.first_warning;
                res.rows.push_back(std::move(row));
            };
            emit(clear, "all-clear");
            emit(violation, "violation");
        }
    }
    return res;
}

inline void write_csv(const ExperimentResult& res, std::ostream& os) {
    os << "net,horizon,outcome,n_traces,mean_ms,max_ms,first_warning_step\n";
    for (const auto& r : res.rows) {
        os << r.net << ',' << r.horizon << ',' << r.outcome << ',' << r.n_traces << ','
           << r.mean_ms << ',' << r.max_ms << ',';
        if (r.first_warning_step) os << *r.first_warning_step;
        os << '\n';
    }
}

/// Same table, whitespace separated with a # header so gnuplot's `plot ...
/// using` reads it directly; missing first warnings print as -1.
inline void write_gnuplot(const ExperimentResult& res, std::ostream& os) {
    os << "# net horizon outcome n_traces mean_ms max_ms first_warning_step\n";
    for (const auto& r : res.rows)
        os << r.net << ' ' << r.horizon << ' ' << r.outcome << ' ' << r.n_traces << ' '
           << r.mean_ms << ' ' << r.max_ms << ' '
           << (r.first_warning_step ? *r.first_warning_step : -1) << '\n';
}

inline void write_results(const ExperimentResult& res, const std::string& csv_path) {
    {
        std::ofstream f(csv_path);
        if (!f) throw std::runtime_error("cannot open output: " + csv_path);
        write_csv(res, f);
    }
    std::filesystem::path dat = csv_path;
    dat.replace_extension(".dat");
    std::ofstream f(dat);
    if (!f) throw std::runtime_error("cannot open output: " + dat.string());
    write_gnuplot(res, f);
}

// --- configuration parsing ------------------------------------------------

namespace detail {

inline ControllerSpec controller_from_json(const nlohmann::json& j) {
    ControllerSpec cs;
    std::string kind = j.value("kind", "zero");
    if (kind == "zero") {
        cs.kind = ControllerSpec::Kind::Zero;
    } else if (kind == "proportional") {
        cs.kind = ControllerSpec::Kind::Proportional;
        cs.gain = j.value("gain", 1.0);
        if (j.contains("target"))
            cs.target = detail::vec_from_json(j.at("target"), "controller.target");
    } else if (kind == "executable") {
        cs.kind = ControllerSpec::Kind::Executable;
        cs.command = j.at("command").get<std::string>();
    } else {
        throw std::invalid_argument("unknown controller kind: " + kind);
    }
    return cs;
}

inline NamedNetwork network_from_json(const nlohmann::json& j,
                                      const std::filesystem::path& base) {
    NamedNetwork nn;
    if (j.is_string()) {
        std::filesystem::path p = base / j.get<std::string>();
        nn.id = p.stem().string();
        nn.net = load_network(p.string());
        return nn;
    }
    if (j.contains("path")) {
        std::filesystem::path p = base / j.at("path").get<std::string>();
        nn.id = j.value("id", p.stem().string());
        nn.net = load_network(p.string());
        return nn;
    }
    const auto& s = j.at("synthetic");
    SyntheticParams params;
    params.margin = s.value("margin", params.margin);
    params.radius = s.value("radius", params.radius);
    if (s.contains("center"))
        params.center = detail::vec_from_json(s.at("center"), "synthetic.center");
    std::string kind = s.at("kind").get<std::string>();
    int dim = s.at("dim").get<int>();
    nn.net = make_synthetic_cbf(synthetic_kind_from_string(kind), dim, params);
    nn.id = j.value("id", kind);
    return nn;
}

} // namespace detail

/// Reads an experiment description. Relative system/network paths resolve
/// against the config file's directory.
inline ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config: " + path);
    nlohmann::json j = nlohmann::json::parse(f);
    std::filesystem::path base = std::filesystem::path(path).parent_path();

    ExperimentConfig cfg;
    cfg.name = j.value("name", cfg.name);
    if (j.at("system").is_string())
        cfg.spec = load_system_spec((base / j.at("system").get<std::string>()).string());
    else
        cfg.spec = parse_system_spec(j.at("system"));

    if (j.contains("networks"))
        for (const auto& nj : j.at("networks"))
            cfg.networks.push_back(detail::network_from_json(nj, base));
    else
        cfg.networks.push_back(detail::network_from_json(j.at("network"), base));

    if (j.contains("controller"))
        cfg.controller = detail::controller_from_json(j.at("controller"));
    cfg.horizons = j.at("horizons").get<std::vector<int>>();
    cfg.n_traces = j.value("n_traces", cfg.n_traces);
    cfg.trace_len = j.value("trace_len", cfg.trace_len);
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("bloat")) {
        if (j.at("bloat").is_string()) {
            if (j.at("bloat").get<std::string>() != "calibrate")
                throw std::invalid_argument("bloat must be a number or \"calibrate\"");
            cfg.calibrate = true;
        } else {
            cfg.bloat = j.at("bloat").get<double>();
        }
    }
    cfg.budget = j.value("budget", cfg.budget);
    std::string mode = j.value("mode", "robust");
    if (mode == "robust")
        cfg.verifier.robust = true;
    else if (mode == "existential")
        cfg.verifier.robust = false;
    else
        throw std::invalid_argument("mode must be robust or existential");
    cfg.verifier.check_unstable = j.value("check_unstable", cfg.verifier.check_unstable);
    cfg.verifier.interior_lie_check =
        j.value("interior_lie_check", cfg.verifier.interior_lie_check);
    cfg.verifier.lambda = j.value("lambda", cfg.verifier.lambda);
    cfg.verifier.tol = j.value("tol", cfg.verifier.tol);
    cfg.threads = j.value("threads", cfg.threads);
    cfg.output = j.value("output", cfg.output);
    validate_experiment(cfg);
    return cfg;
}

} // namespace cbfmon
