#include "CLI11.hpp"

#include <cmath>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "quasispec/parallel.hpp"
#include "quasispec/pipeline.hpp"

using namespace quasispec;

int main(int argc, char** argv) {
    CLI::App app{"quasispec: multiscale spectral objects of a 2D quasi-periodic polyharmonic operator"};
    app.set_version_flag("--version", std::string("quasispec ") + kToolVersion);
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<std::string> out_dir;
    std::optional<int> threads;
    app.add_option("-c,--config", config_path, "JSON run configuration")->required()->check(CLI::ExistingFile);
    app.add_option("-s,--set", overrides, "override a config entry, e.g. --set k=12 --set levels.0.ball=3");
    app.add_option("-o,--out", out_dir, "output directory");
    app.add_option("-j,--threads", threads, "worker threads (default: QUASISPEC_THREADS, then the config)")->check(CLI::PositiveNumber);

    auto* lattice = app.add_subcommand("lattice", "index enumeration, best-rational table, cluster report");
    auto* resonance = app.add_subcommand("resonance", "level-1 resonant discs and non-resonant arcs");
    auto* spectrum = app.add_subcommand("spectrum", "Step-I eigenvalues: series against direct eigensolve");
    auto* isocurve = app.add_subcommand("isocurve", "angle sets and isoenergetic curves, level by level");
    auto* regions = app.add_subcommand("regions", "multiscale region coloring and block check");
    auto* params = app.add_subcommand("params", "parameter schedule and its inequalities");

    std::optional<double> lambda;
    int levels = 1;
    isocurve->add_option("--lambda", lambda, "energy (default: config lambda, else k^{2l})");
    isocurve->add_option("--levels", levels, "number of levels")->check(CLI::PositiveNumber);
    std::optional<double> r1, r2;
    regions->add_option("--r1", r1, "inner exponent (default: config regions.r1)");
    regions->add_option("--r2", r2, "outer exponent (default: config regions.r2)");

    CLI11_PARSE(app, argc, argv);

    RunConfig config;
    try {
        if (out_dir) overrides.push_back("output_dir=\"" + *out_dir + "\"");
        if (threads) overrides.push_back("threads=" + std::to_string(*threads));
        else if (std::getenv("QUASISPEC_THREADS")) overrides.push_back("threads=" + std::to_string(default_threads()));
        config = load_config(config_path, overrides);
    } catch (const ConfigError& e) {
        std::cerr << e.what() << "\n";
        return kExitConfigInvalid;
    }

    CommandResult result;
    if (lattice->parsed()) result = cmd_lattice(config);
    else if (resonance->parsed()) result = cmd_resonance(config);
    else if (spectrum->parsed()) result = cmd_spectrum(config);
    else if (isocurve->parsed()) result = cmd_isocurve(config, lambda ? *lambda : config.energy(), levels);
    else if (regions->parsed()) result = cmd_regions(config, r1 ? *r1 : config.regions.r1, r2 ? *r2 : config.regions.r2);
    else if (params->parsed()) result = cmd_params(config);

    for (const auto& e : result.errors) std::cerr << "error: " << e << "\n";
    std::cout << result.files.size() << " file(s) in " << config.output_dir << (result.partial ? " (partial)" : "") << "\n";
    return result.exit_code;
}
