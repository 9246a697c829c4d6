#include "rulprune/errors.hpp"
#include "rulprune/parallel.hpp"
#include "rulprune/pipeline.hpp"

#include <CLI11.hpp>

#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace {

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string input;
    std::string test;
    std::string checkpoint;
    std::string index;
    std::string arm;
    std::vector<std::string> overrides;
    std::size_t threads = 0;
};

// Flags are folded into the config document before it is parsed, so they go through the same validation.
rulprune::PipelineConfig resolve(const Options& o) {
    rulprune::io::Json doc = o.config.empty() ? rulprune::io::Json::object() : rulprune::io::read_json(o.config);
    auto set = [&](const std::string& key, const rulprune::io::Json& value) {
        rulprune::apply_override(doc, key + "=" + value.dump());
    };
    if (o.seed) set("seed", *o.seed);
    if (!o.out.empty()) set("out", o.out);
    if (!o.input.empty()) set("data.input", o.input);
    if (!o.test.empty()) set("data.test", o.test);
    if (!o.checkpoint.empty()) set("checkpoint", o.checkpoint);
    if (!o.index.empty()) set("prune_index", o.index);
    if (!o.arm.empty()) set("arm", o.arm);
    for (const auto& kv : o.overrides) rulprune::apply_override(doc, kv);
    return rulprune::pipeline_config_from_json(doc);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Causal and quality-aware data pruning for RUL prediction"};
    app.require_subcommand(1);
    Options opts;

    using Command = std::function<int(const rulprune::PipelineConfig&, std::ostream&)>;
    const std::vector<std::tuple<std::string, std::string, Command>> commands = {
        {"synth", "Generate a synthetic degradation dataset with corruption labels", rulprune::cmd_synth},
        {"prune", "Run the configured pruning arm and write the prune index", rulprune::cmd_prune},
        {"train", "Train a predictor from scratch on the input data", rulprune::cmd_train},
        {"finetune", "Finetune a checkpoint on the windows retained by a prune index", rulprune::cmd_finetune},
        {"eval", "Evaluate a checkpoint on held-out test data", rulprune::cmd_eval},
        {"report", "Separability and entropy report for a prune index", rulprune::cmd_report},
    };
    std::map<CLI::App*, Command> handlers;
    for (const auto& [name, help, fn] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("-c,--config", opts.config, "JSON config file")->check(CLI::ExistingFile);
        sub->add_option("--seed", opts.seed, "Root seed");
        sub->add_option("-o,--out", opts.out, "Output directory");
        sub->add_option("--input", opts.input, "Input series file (data.input)");
        sub->add_option("--test", opts.test, "Held-out series file (data.test)");
        sub->add_option("--checkpoint", opts.checkpoint, "Checkpoint path");
        sub->add_option("--index", opts.index, "Prune index path");
        sub->add_option("--arm", opts.arm, "Pruning arm: CG, PC, Full or Sub");
        sub->add_option("-s,--set", opts.overrides, "Config override key.path=value (repeatable)");
        sub->add_option("--threads", opts.threads, "Worker threads (0 = all cores)");
        handlers.emplace(sub, fn);
    }

    CLI11_PARSE(app, argc, argv);
    rulprune::worker_count() = opts.threads;
    try {
        const auto config = resolve(opts);
        for (auto* sub : app.get_subcommands()) return handlers.at(sub)(config, std::cout);
    } catch (const rulprune::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const rulprune::ArgumentError& e) {
        std::cerr << "argument error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
