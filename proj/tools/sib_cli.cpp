#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sib/pipeline.hpp"

using namespace sib;

int main(int argc, char** argv) {
    CLI::App app{"Early-SIB risk prediction pipeline"};
    app.require_subcommand(1);

    std::optional<std::string> config_path;
    std::vector<std::string> sets;
    std::string out_root = "runs";
    std::optional<uint64_t> seed;
    app.add_option("--config", config_path, "JSON config file")->expected(1);
    app.add_option("--set", sets, "Override config entries, key.path=value (repeatable)");
    app.add_option("--out", out_root, "Output root directory");
    app.add_option("--seed", seed, "Global seed override");

    const std::vector<std::pair<std::string, std::string>> commands = {
        {"synth", "Generate a synthetic forum corpus with ground truth"},
        {"ingest", "Validate a corpus file and report statistics"},
        {"detect-train", "Train the post-level SIB detector with cross-validation"},
        {"label", "Label every post in the corpus with a trained detector"},
        {"build-users", "Build the user-level early prediction dataset"},
        {"train", "Train and evaluate the early prediction model (5-fold CV)"},
        {"evaluate", "Baselines and McNemar tests against a training run"},
        {"sweep", "Context window size sweep"},
        {"ablate", "Component ablations and input configuration variants"},
        {"explain", "Shapley explanations, complexity and lead-time reports"},
        {"report", "Aggregate all runs under the output root"},
    };
    for (const auto& [name, desc] : commands) app.add_subcommand(name, desc);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        pipeline::json config = pipeline::load_config(config_path, sets, seed);
        const std::string name = app.get_subcommands().front()->get_name();
        std::string dir;
        if (name == "synth") dir = pipeline::run_synth(config, out_root);
        else if (name == "ingest") dir = pipeline::run_ingest(config, out_root);
        else if (name == "detect-train") dir = pipeline::run_detect_train(config, out_root);
        else if (name == "label") dir = pipeline::run_label(config, out_root);
        else if (name == "build-users") dir = pipeline::run_build_users(config, out_root);
        else if (name == "train") dir = pipeline::run_train(config, out_root);
        else if (name == "evaluate") dir = pipeline::run_evaluate(config, out_root);
        else if (name == "sweep") dir = pipeline::run_sweep(config, out_root);
        else if (name == "ablate") dir = pipeline::run_ablate(config, out_root);
        else if (name == "explain") dir = pipeline::run_explain(config, out_root);
        else if (name == "report") dir = pipeline::run_report(config, out_root);
        std::cout << dir << "\n";
        return 0;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return 2;
    }
}
