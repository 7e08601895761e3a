#include <CLI11.hpp>

#include "streplica/cli_app.hpp"

// Thin wrapper: subcommand + flags are forwarded to the shared app entry
// point so tests can drive the exact same code path in-process.
int main(int argc, char** argv) {
    CLI::App app{"self-training asymptotics: RS saddle-point solver and finite-size simulator"};
    app.require_subcommand(0, 1);

    std::string config_path, out_dir = "out";
    std::vector<std::string> sets;
    std::string seed_str;
    int threads = 0;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON run configuration");
        sub->add_option("--set", sets, "dotted-path override, e.g. scenario.lambda_u=0.05");
        sub->add_option("--out", out_dir, "output directory");
        sub->add_option("--seed", seed_str, "master seed");
        sub->add_option("--threads", threads, "worker threads");
    };
    const char* names[] = {"solve", "simulate", "compare", "optimize", "analytic"};
    const char* descs[] = {"solve the RS saddle-point trajectory",
                           "run finite-size self-training",
                           "cross-validate theory against finite-size runs",
                           "tune hyperparameters on the RS generalization error",
                           "closed-form continuum dynamics and perturbative checks"};
    for (int k = 0; k < 5; ++k) add_common(app.add_subcommand(names[k], descs[k]));

    CLI11_PARSE(app, argc, argv);

    std::vector<std::string> args;
    if (!app.get_subcommands().empty()) args.push_back(app.get_subcommands()[0]->get_name());
    if (!config_path.empty()) {
        args.push_back("--config");
        args.push_back(config_path);
    }
    for (const auto& s : sets) {
        args.push_back("--set");
        args.push_back(s);
    }
    args.push_back("--out");
    args.push_back(out_dir);
    if (!seed_str.empty()) {
        args.push_back("--seed");
        args.push_back(seed_str);
    }
    if (threads > 0) {
        args.push_back("--threads");
        args.push_back(std::to_string(threads));
    }

    return streplica::cli::run_with_exit_codes(args);
}
