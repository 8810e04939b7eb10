// Command line front end.
//
//   monitor run --config exp.json        batch experiment, CSV + gnuplot out
//   monitor check --net B.json --system sys.json --horizon 50
//                                        states on stdin, one verdict line
//                                        "k,verdict,cause,ms" per state
//   monitor make-cbf --kind valid_box --dim 2 --out B.json
//                                        write a synthetic certificate

#include <CLI11.hpp>

#include <Eigen/Dense>

#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "cbfmon/harness.hpp"
#include "cbfmon/monitor.hpp"
#include "cbfmon/synthetic.hpp"

namespace {

int cmd_run(const std::string& config_path, const std::string& mode, double bloat,
            bool has_bloat, std::uint64_t seed, bool has_seed, const std::string& output,
            int threads) {
    cbfmon::ExperimentConfig cfg = cbfmon::load_experiment_config(config_path);
    if (!mode.empty()) cfg.verifier.robust = (mode == "robust");
    if (has_bloat) {
        cfg.bloat = bloat;
        cfg.calibrate = false;
    }
    if (has_seed) cfg.seed = seed;
    if (!output.empty()) cfg.output = output;
    if (threads > 0) cfg.threads = threads;

    cbfmon::ExperimentResult res = cbfmon::run_experiment(cfg);
    cbfmon::write_results(res, cfg.output);
    cbfmon::write_csv(res, std::cout);
    std::cerr << "wrote " << res.rows.size() << " rows to " << cfg.output
              << " (bloat " << res.bloat_used << ")\n";
    return 0;
}

int cmd_check(const std::string& net_path, const std::string& system_path, int horizon,
              const std::string& mode, double bloat, double budget, bool check_unstable) {
    cbfmon::ReluNetwork net = cbfmon::load_network(net_path);
    cbfmon::SystemSpec spec = cbfmon::load_system_spec(system_path);

    cbfmon::MonitorConfig mc;
    mc.horizon_steps = horizon;
    mc.bloat = bloat;
    mc.budget = budget;
    mc.verifier.robust = (mode != "existential");
    mc.verifier.check_unstable = check_unstable;
    cbfmon::MonitorState st = cbfmon::monitor_init(spec, net, mc);

    const int dim = net.input_dim;
    std::string line;
    std::cout << std::fixed << std::setprecision(3);
    while (std::getline(std::cin, line)) {
        std::istringstream in(line);
        Eigen::VectorXd x(dim);
        int got = 0;
        double v;
        while (got < dim && (in >> v)) x(got++) = v;
        if (got == 0) continue;  // blank line
        if (got < dim) {
            std::cerr << "state line has " << got << " of " << dim << " coordinates\n";
            return 2;
        }
        cbfmon::MonitorStep step = cbfmon::monitor_next(st, x);
        std::cout << step.k << ',' << step.verdict << ','
                  << cbfmon::cause_name(step.cause) << ',' << step.ms << '\n';
    }
    return 0;
}

int cmd_make_cbf(const std::string& kind, const std::string& out, int dim, double margin,
                 double radius, const std::vector<double>& center) {
    cbfmon::SyntheticParams params;
    params.margin = margin;
    params.radius = radius;
    if (!center.empty())
        params.center = Eigen::Map<const Eigen::VectorXd>(center.data(),
                                                          static_cast<long>(center.size()));
    cbfmon::ReluNetwork net =
        cbfmon::make_synthetic_cbf(cbfmon::synthetic_kind_from_string(kind), dim, params);
    cbfmon::save_network(net, out);
    std::cerr << "wrote " << kind << " certificate (dim " << dim << ") to " << out << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"runtime monitor for ReLU control barrier certificates"};
    app.require_subcommand(1);

    std::string config_path, mode, output;
    double bloat = 0.0, budget = 0.0, margin = 0.5, radius = 10.0;
    std::uint64_t seed = 0;
    int horizon = 50, dim = 2, threads = 0;
    std::string net_path, system_path, kind, out_path;
    std::vector<double> center;

    auto* run = app.add_subcommand("run", "run a batch experiment from a config file");
    run->add_option("--config", config_path, "experiment config (JSON)")->required();
    auto* run_mode = run->add_option("--mode", mode, "robust|existential")
                         ->check(CLI::IsMember({"robust", "existential"}));
    auto* run_bloat = run->add_option("--bloat", bloat, "override slice inflation radius");
    auto* run_seed = run->add_option("--seed", seed, "override experiment seed");
    run->add_option("--output", output, "override output CSV path");
    run->add_option("--threads", threads, "override worker thread count");

    auto* check = app.add_subcommand("check", "monitor one trace read from stdin");
    check->add_option("--net", net_path, "barrier network (JSON)")->required();
    check->add_option("--system", system_path, "system description (JSON)")->required();
    check->add_option("--horizon", horizon, "lookahead horizon in steps")->required();
    check->add_option("--mode", mode, "robust|existential")
        ->check(CLI::IsMember({"robust", "existential"}));
    check->add_option("--bloat", bloat, "slice inflation radius");
    check->add_option("--budget", budget, "per-step budget in seconds (0 = period)");
    bool check_unstable = false;
    check->add_flag("--check-unstable", check_unstable, "verify every unstable face");

    auto* make = app.add_subcommand("make-cbf", "write a synthetic certificate");
    make->add_option("--kind", kind, "affine|valid_box|invalid_flipped")->required();
    make->add_option("--out", out_path, "output path (JSON)")->required();
    make->add_option("--dim", dim, "state dimension");
    make->add_option("--margin", margin, "box half-width of the zero level");
    make->add_option("--radius", radius, "domain radius bound");
    make->add_option("--center", center, "box center (defaults to origin)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed())
            return cmd_run(config_path, run_mode->count() ? mode : "", bloat,
                           run_bloat->count() > 0, seed, run_seed->count() > 0, output,
                           threads);
        if (check->parsed())
            return cmd_check(net_path, system_path, horizon, mode, bloat, budget,
                             check_unstable);
        if (make->parsed())
            return cmd_make_cbf(kind, out_path, dim, margin, radius, center);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
