#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "fae/common.hpp"
#include "fae/runner/runner.hpp"

int main(int argc, char** argv) {
    CLI::App app{
        "Unsupervised anomaly localization: pretrained-feature autoencoder pipeline.\n"
        "Backbone weights resolve from the config, then from $FAE_BACKBONE_DIR/resnet18.ftar,\n"
        "then fall back to a seeded random initialization.\n"
        "Exit codes: 0 success, 1 cell failures or verification mismatch, 2 config error."};
    app.require_subcommand(1);

    std::string run_config, run_outdir;
    CLI::App* run = app.add_subcommand("run", "Run the experiment matrix from a JSON config");
    run->add_option("--config", run_config, "JSON experiment config file")->required();
    run->add_option("--output-dir", run_outdir, "Override the config's output directory");

    std::string abl_config, abl_outdir;
    CLI::App* ablation =
        app.add_subcommand("ablation", "Run the layer-selection ablation (feature_ae only)");
    ablation->add_option("--config", abl_config, "JSON experiment config file")->required();
    ablation->add_option("--output-dir", abl_outdir, "Override the config's output directory");

    std::string report_arg;
    CLI::App* report = app.add_subcommand("report", "Print the results table of a run directory");
    report->add_option("dir", report_arg, "Run output directory")->required();

    std::string verify_arg;
    CLI::App* verify =
        app.add_subcommand("verify", "Re-hash a run directory against its manifest");
    verify->add_option("dir", verify_arg, "Run output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;  // bad usage is a configuration problem
    }

    try {
        if (*run || *ablation) {
            const bool is_ablation = static_cast<bool>(*ablation);
            fae::runner::ExperimentConfig cfg =
                fae::runner::load_config(is_ablation ? abl_config : run_config);
            const std::string& outdir = is_ablation ? abl_outdir : run_outdir;
            if (!outdir.empty()) cfg.output_dir = outdir;
            const fae::runner::RunOutcome outcome =
                is_ablation ? fae::runner::run_ablation(cfg) : fae::runner::run_experiment(cfg);
            std::cout << outcome.n_cells - outcome.n_failed << "/" << outcome.n_cells
                      << " cells completed\n\n";
            fae::runner::report_dir(cfg.output_dir, std::cout);
            return outcome.n_failed > 0 ? 1 : 0;
        }
        if (*report) return fae::runner::report_dir(report_arg, std::cout);
        if (*verify) return fae::runner::verify_dir(verify_arg, std::cout);
    } catch (const fae::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
