#include <iostream>

#include <CLI11.hpp>

#include "matkit/cli/runner.hpp"

namespace {

using matkit::cli::ExperimentSpec;

ExperimentSpec make_spec(const std::string& spec_path, const std::string& out_dir,
                         const std::string& scenarios, const std::string& variant,
                         std::uint64_t root_seed, int parallelism) {
    ExperimentSpec spec;
    if (!spec_path.empty()) spec = matkit::cli::load_spec(spec_path);
    if (!out_dir.empty()) spec.out_dir = out_dir;
    if (!scenarios.empty() && scenarios != "all") {
        spec.scenario_ids.clear();
        std::size_t pos = 0;
        while (pos != std::string::npos) {
            auto comma = scenarios.find(',', pos);
            spec.scenario_ids.push_back(scenarios.substr(
                pos, comma == std::string::npos ? std::string::npos : comma - pos));
            pos = comma == std::string::npos ? comma : comma + 1;
        }
    }
    if (!variant.empty()) spec.variant = matkit::gov::variant_from(variant);
    if (root_seed) spec.root_seed = root_seed;
    if (parallelism) spec.parallelism = parallelism;
    return spec;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Contract-enriched trace recording, stress search, fault injection, "
                 "governance mediation, and metrics over a deterministic simulated "
                 "multi-agent world"};
    app.require_subcommand(1);

    std::string spec_path, out_dir, scenarios, variant = "", bundle, matrix_file, replay_dir,
                suite_out = "suite_manifest.json", old_variant = "NoGovernance",
                new_variant = "ShieldCaps", search_kind;
    std::uint64_t root_seed = 0;
    int parallelism = 0;
    double budget = -1.0;
    std::string catalog_dir;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--spec", spec_path, "experiment spec file (JSON)");
        cmd->add_option("--out", out_dir, "output directory");
        cmd->add_option("--scenarios", scenarios, "comma-separated scenario ids or 'all'");
        cmd->add_option("--variant", variant,
                        "NoGovernance|Shield|ShieldCaps|ShieldRouting");
        cmd->add_option("--root-seed", root_seed, "root seed for search/bootstrap");
        cmd->add_option("--parallelism", parallelism, "worker threads over runs");
        cmd->add_option("--catalog", catalog_dir, "directory of extra scenario files");
    };

    CLI::App* run = app.add_subcommand("run", "execute a task x seed grid and emit reports");
    add_common(run);

    CLI::App* inject =
        app.add_subcommand("inject", "run with each scenario's default fault schedule");
    add_common(inject);

    CLI::App* stress = app.add_subcommand("stress", "budgeted counterexample search");
    add_common(stress);
    stress->add_option("--search", search_kind, "exhaustive|random|adaptive");
    stress->add_option("--budget", budget, "perturbation cost budget");

    CLI::App* replay = app.add_subcommand("replay", "re-execute a stored bundle and diff");
    replay->add_option("bundle", bundle, "bundle directory")->required();

    CLI::App* regress =
        app.add_subcommand("regress", "compare configurations over a suite");
    add_common(regress);
    regress->add_option("--old", old_variant, "baseline governance variant");
    regress->add_option("--new", new_variant, "candidate governance variant");
    regress->add_option("--replays", replay_dir, "replay bundles to re-check");

    CLI::App* suite = app.add_subcommand("suite-select", "greedy regression-suite selection");
    suite->add_option("replays", replay_dir, "directory of replay bundles")->required();
    suite->add_option("--out", suite_out, "suite manifest path");

    CLI::App* report = app.add_subcommand("report", "re-emit report files from a matrix");
    report->add_option("matrix", matrix_file, "matrix.json path")->required();
    report->add_option("--out", out_dir, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (!catalog_dir.empty()) matkit::sim::load_catalog_dir(catalog_dir);
        ExperimentSpec spec =
            make_spec(spec_path, out_dir, scenarios, variant, root_seed, parallelism);
        if (run->parsed()) return matkit::cli::cmd_run(spec);
        if (inject->parsed()) {
            spec.condition = matkit::cli::Condition::Fault;
            return matkit::cli::cmd_run(spec);
        }
        if (stress->parsed()) {
            spec.condition = matkit::cli::Condition::Adversarial;
            if (!search_kind.empty()) spec.search_kind = search_kind;
            if (budget >= 0.0) spec.budget = budget;
            return matkit::cli::cmd_stress(spec);
        }
        if (replay->parsed()) return matkit::cli::cmd_replay(bundle);
        if (regress->parsed())
            return matkit::cli::cmd_regress(spec, matkit::gov::variant_from(old_variant),
                                            matkit::gov::variant_from(new_variant),
                                            replay_dir);
        if (suite->parsed()) return matkit::cli::cmd_suite_select(replay_dir, suite_out);
        if (report->parsed())
            return matkit::cli::cmd_report(matrix_file,
                                           out_dir.empty() ? "reports" : out_dir);
    } catch (const matkit::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const matkit::ConfigMismatch& e) {
        std::cerr << "config mismatch: " << e.what() << "\n";
        return 2;
    } catch (const matkit::MissingStub& e) {
        std::cerr << "missing stub: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
