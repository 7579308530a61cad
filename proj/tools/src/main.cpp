#include <CLI11.hpp>

#include <iostream>

#include "mbp_cli/commands.hpp"

int main(int argc, char** argv) {
    using namespace mbp::cli;
    CLI::App app{"Maximum-bound-principle preserving ETD solvers for semilinear parabolic equations", "mbp-etd"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOptions g;
    std::string out_dir;
    std::uint64_t seed = 0;
    app.add_option("--out-dir", out_dir, "Output directory (overrides output.dir)");
    app.add_option("--seed", seed, "Seed for random initial data (overrides seed)");
    app.add_option("--threads", g.threads, "Worker threads for sweeps; 0 uses every hardware thread");

    std::string config;
    std::vector<double> taus;
    double tau_ref = 0.0;
    std::size_t steps = 100;
    std::string sweep;

    auto* run = app.add_subcommand("run", "Run one experiment");
    run->add_option("config", config, "Experiment config (TOML, or JSON by extension)")->required();

    auto* conv = app.add_subcommand("converge", "Self-convergence study against an ETDRK2 reference");
    conv->add_option("config", config)->required();
    conv->add_option("--taus", taus, "Step sizes")->required()->delimiter(',');
    conv->add_option("--tau-ref", tau_ref, "Reference step size, at most min(taus)/8")->required();

    auto* stress = app.add_subcommand("mbp-stress", "Bound excess over a range of step sizes");
    stress->add_option("config", config)->required();
    stress->add_option("--taus", taus, "Step sizes")->required()->delimiter(',');
    stress->add_option("--steps", steps, "Steps per step size")->capture_default_str();

    auto* ops = app.add_subcommand("verify-ops", "Structure and spectral checks over operator constructors");
    ops->add_option("--sweep", sweep, "Sweep file; the built-in sweep is used when absent");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitError;
    }
    if (app.count("--out-dir")) g.out_dir = out_dir;
    if (app.count("--seed")) g.seed = seed;

    try {
        if (*run) return cmd_run(config, g, std::cout);
        if (*conv) return cmd_converge(config, taus, tau_ref, g, std::cout);
        if (*stress) return cmd_mbp_stress(config, taus, steps, g, std::cout);
        if (*ops) {
            std::optional<std::filesystem::path> s;
            if (!sweep.empty()) s = sweep;
            return cmd_verify_ops(s, g, std::cout);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    }
    return kExitError;
}
