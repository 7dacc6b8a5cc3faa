// fllab: run one federated experiment from a config file.
//
//   fllab --config exp.cfg [--out DIR] [--seed N] [--preset NAME] [--quiet]
//         [--parallel-clients N]
//
// Exit codes: 0 success, 2 configuration error, 3 runtime error.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "fllab/config.hpp"
#include "fllab/error.hpp"
#include "fllab/metrics.hpp"
#include "fllab/presets.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Federated low-rank update decomposition simulator"};

    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::string preset;
    bool quiet = false;
    std::optional<std::size_t> parallel;

    app.add_option("--config", config_path, "Experiment config file")->required();
    app.add_option("--out", out_dir, "Output directory (default: $FLLAB_OUT, then [output] dir, then .)");
    app.add_option("--seed", seed, "Global seed, overrides the config file");
    app.add_option("--preset", preset, "Method preset, overrides the config file");
    app.add_flag("--quiet", quiet, "Suppress per-round progress");
    app.add_option("--parallel-clients", parallel, "Clients trained concurrently within a round");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    fllab::config::Experiment experiment;
    try {
        experiment = fllab::config::parse_config(config_path);
        if (seed) experiment.fed.global_seed = *seed;
        if (parallel) experiment.fed.parallel_clients = *parallel;
        if (!preset.empty()) {
            const auto m = fllab::federation::parse_method(preset);
            if (!m) throw fllab::ConfigError({"unknown preset '" + preset + "'"});
            experiment.fed.method = *m;
        }
        if (auto errs = fllab::config::validation_errors(experiment); !errs.empty()) {
            throw fllab::ConfigError(std::move(errs));
        }
    } catch (const fllab::ConfigError& e) {
        std::cerr << "fllab: configuration error\n";
        for (const auto& p : e.problems()) std::cerr << "  " << p << '\n';
        return kExitConfig;
    }

    if (out_dir.empty()) {
        if (const char* env = std::getenv("FLLAB_OUT"); env && *env) {
            out_dir = env;
        } else if (!experiment.output.dir.empty()) {
            out_dir = experiment.output.dir;
        } else {
            out_dir = ".";
        }
    }

    try {
        bool noted_skip = false;
        auto progress = [&](const fllab::RoundReport& r) {
            if (r.sigma_skipped > 0 && !noted_skip) {
                std::cerr << "fllab: note: sigma_min diagnostic skipped " << r.sigma_skipped
                          << " factor(s) larger than " << fllab::metrics::kSigmaMaxDim << " on a side\n";
                noted_skip = true;
            }
            if (quiet) return;
            std::printf("round %4zu  train_loss %.4f  test_loss %.4f  test_acc %.4f%s\n", r.round, r.train_loss,
                        r.test_loss, r.test_acc, r.merged ? "  [merged]" : "");
            std::fflush(stdout);
        };
        fllab::config::run_experiment(experiment, out_dir, progress);
    } catch (const fllab::ConfigError& e) {
        std::cerr << "fllab: configuration error\n";
        for (const auto& p : e.problems()) std::cerr << "  " << p << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "fllab: " << e.what() << '\n';
        return kExitRuntime;
    }
    if (!quiet) std::printf("wrote %s\n", (std::filesystem::path(out_dir) / "metrics.csv").string().c_str());
    return 0;
}
