#include <iostream>

#include "CLI11.hpp"
#include "app/commands.hpp"

using namespace ssmc::app;

int main(int argc, char** argv) {
    CLI::App app{"SSM-based optimal vibration control"};
    app.require_subcommand(1, 1);
    CommandOptions opts;
    std::string config, out, metric, boundaries;
    double threshold = 0.0;

    struct Sub {
        const char* name;
        const char* help;
        int (*run)(const CommandOptions&, std::ostream&);
    };
    const Sub subs[] = {
        {"eig", "eigenpairs of the linearization, spectrum.csv", cmd_eig},
        {"ssm", "autonomous SSM to ssm.json plus residual table", cmd_ssm},
        {"select", "modal ranking and basis selection", cmd_select},
        {"control", "receding-horizon control design and closed loop", cmd_control},
        {"validate", "replay u.csv on the full model", cmd_validate},
        {"chain-demo", "write the oscillator-chain model and config", cmd_chain_demo},
    };
    std::vector<std::pair<CLI::App*, const Sub*>> registered;
    for (const auto& s : subs) {
        CLI::App* sc = app.add_subcommand(s.name, s.help);
        if (std::string(s.name) != "chain-demo") sc->add_option("--config", config, "run configuration (JSON)")->required();
        sc->add_flag("--fresh", opts.fresh, "recompute SSM and selection instead of loading them");
        sc->add_option("--metric", metric, "dcgain or mhsv");
        sc->add_option("--threshold", threshold, "selection threshold in [0, 1]");
        sc->add_option("--boundaries", boundaries, "interior segment boundaries t1,t2,...");
        sc->add_flag("--no-validate", opts.no_validate, "skip the full-model run");
        sc->add_option("--out", out, "artifact directory");
        registered.emplace_back(sc, &s);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    for (const auto& [sc, s] : registered) {
        if (!sc->parsed()) continue;
        opts.config = config;
        if (sc->count("--metric")) opts.metric = metric;
        if (sc->count("--threshold")) opts.threshold = threshold;
        if (sc->count("--boundaries")) opts.boundaries = boundaries;
        if (sc->count("--out")) opts.out = out;
        try {
            return s->run(opts, std::cout);
        } catch (const std::exception& e) {
            const int rc = exit_code_for(e);
            std::cerr << "error: " << e.what() << '\n';
            return rc;
        }
    }
    return 2;
}
