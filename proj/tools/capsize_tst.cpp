#include <iostream>
#include <string>

#include <CLI11.hpp>

#include <capsize/experiment.hpp>

int main(int argc, char** argv) {
    CLI::App app{"Capsize risk analysis for stochastic roll models"};
    app.require_subcommand(1);
    auto* run = app.add_subcommand("run", "Run the experiment described by a JSON config");
    std::string config_file;
    int workers = 1;
    std::string out_dir;
    run->add_option("config", config_file, "Experiment config (JSON)")->required();
    run->add_option("--workers", workers, "Maximum number of worker threads")->check(CLI::PositiveNumber);
    run->add_option("--out", out_dir, "Output directory (overrides output_dir)");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }
    try {
        const auto cfg = capsize::load_config(config_file);
        capsize::RunOptions opts;
        opts.workers = workers;
        if (!out_dir.empty()) opts.out_dir = out_dir;
        const auto manifest = capsize::run_experiment(cfg, opts);
        std::cout << manifest["results"].dump(2) << '\n';
        return 0;
    } catch (const capsize::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const capsize::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
