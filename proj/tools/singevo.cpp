// Command-line entry point: one subcommand per experiment, JSON configs in, JSON/CSV artifacts out.

#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "singevo/experiment.hpp"

namespace {

struct Flags {
    std::string config;
    std::string out;
    std::optional<int> threads;
    std::optional<long long> seed;
};

int dispatch(const std::string& command, const Flags& f) {
    using namespace singevo;
    try {
        ExperimentConfig cfg;
        if (!f.config.empty()) {
            cfg = load_config(f.config);
            if (cfg.command != command)
                throw ConfigError("config command \"" + cfg.command + "\" does not match subcommand \"" + command + "\"");
        } else if (command == "report") {
            cfg.command = "report";
            cfg.name = "summary";
        } else {
            throw ConfigError("--config is required for " + command);
        }
        if (!f.out.empty()) cfg.output_dir = f.out;
        if (f.threads) {
            if (*f.threads < 1) throw ConfigError("--threads must be >= 1");
            cfg.threads = *f.threads;
        }
        if (f.seed) {
            if (*f.seed < 0 || *f.seed > 0xffffffffLL) throw ConfigError("--seed must fit in 32 bits");
            cfg.seed = static_cast<unsigned>(*f.seed);
        }
        const auto res = run_experiment(cfg);
        std::cout << res.report.at("pass").dump() << " " << (res.dir / (command == "report" ? "summary.json" : "report.json")).string()
                  << "\n";
        if (!res.pass()) {
            std::cerr << nlohmann::json{{"failures", res.failures}}.dump() << "\n";
            return exit_numerical;
        }
        return exit_pass;
    } catch (const ConfigError& e) {
        std::cerr << nlohmann::json{{"error", "config"}, {"message", e.what()}}.dump() << "\n";
        return singevo::exit_config;
    } catch (const MissingArtifacts& e) {
        std::cerr << nlohmann::json{{"error", "missing_artifacts"}, {"message", e.what()}}.dump() << "\n";
        return singevo::exit_config;
    } catch (const Error& e) {
        std::cerr << nlohmann::json{{"error", "numerical"}, {"message", e.what()}}.dump() << "\n";
        return singevo::exit_numerical;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Evolution operators for singular non-autonomous parabolic problems"};
    app.require_subcommand(1);
    Flags flags;
    std::string chosen;
    for (const auto& name : singevo::experiment_commands()) {
        auto* sub = app.add_subcommand(name, "run the " + name + " experiment");
        sub->add_option("--config", flags.config, "JSON config")->envname("SINGEVO_CONFIG");
        sub->add_option("--out", flags.out, "output directory")->envname("SINGEVO_OUT");
        sub->add_option("--threads", flags.threads, "worker threads")->envname("SINGEVO_THREADS");
        sub->add_option("--seed", flags.seed, "seed for random suites")->envname("SINGEVO_SEED");
        sub->callback([&chosen, name] { chosen = name; });
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return singevo::exit_config;
    }
    return dispatch(chosen, flags);
}
