#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "canoe/pipeline.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Knowledge-grounded QA synthesis, GRPO training and evaluation toolkit"};
    app.set_version_flag("--version", "canoe 0.1.0");
    app.require_subcommand(1);

    std::string config_path = "canoe.json";
    app.add_option("-c,--config", config_path, "JSON run configuration file")
        ->capture_default_str();

    app.add_subcommand("ingest", "Load the triple TSV and print store statistics");
    app.add_subcommand("synthesize", "Build the mixed QA dataset from the triple store");
    app.add_subcommand("rollout", "Sample tagged response groups for dataset prompts");
    app.add_subcommand("score", "Assign rule-based rewards to logged rollouts");
    app.add_subcommand("train-toy", "Train the toy softmax policy on the bandit environment");
    app.add_subcommand("eval", "Run the evaluation harness over a task file");
    app.add_subcommand("report", "Aggregate evaluation records into CSV and a table");

    CLI11_PARSE(app, argc, argv);

    canoe::pipeline::RunConfig config;
    try {
        config = canoe::pipeline::RunConfig::load(config_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    const std::string verb = app.get_subcommands().front()->get_name();
    return canoe::pipeline::run_command(verb, config, std::cout, std::cerr);
}
