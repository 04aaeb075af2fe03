#include <iostream>

#include <CLI11.hpp>

#include "compfreeze/cli.hpp"

using namespace compfreeze;

int main(int argc, char** argv) {
    CLI::App app{"compfreeze: compacter adapters, layer freezing and LLM-assisted pipelines"};
    app.require_subcommand(1);

    std::string config_path, out, mock, task, strategy, checkpoint;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> reports;
    app.add_option("--config", config_path, "INI config file")->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "top-level seed");
    app.add_option("--out", out, "output directory");
    app.add_option("--mock", mock, "LLM mock: scripted, oracle, noisy:p, adversarial");
    app.fallthrough();

    auto add_task = [&](CLI::App* sub) {
        sub->add_option("--task", task, "spam, dga or cti");
        sub->add_option("--strategy", strategy, "odd_lc, even_lc, upper_lc, lower_lc, single(i), triple(a,b,c), full_finetune");
    };
    auto* train = app.add_subcommand("train", "fine-tune and write a delta checkpoint");
    add_task(train);
    auto* eval = app.add_subcommand("eval", "evaluate a delta checkpoint on the test split");
    add_task(eval);
    eval->add_option("--checkpoint", checkpoint, "run or delta checkpoint directory");
    auto* label = app.add_subcommand("label", "label the training split with an LLM");
    add_task(label);
    auto* route = app.add_subcommand("route", "route low-confidence predictions to an LLM");
    add_task(route);
    route->add_option("--checkpoint", checkpoint, "run or delta checkpoint directory");
    auto* bench = app.add_subcommand("bench", "latency and throughput per placement plan");
    add_task(bench);
    auto* report = app.add_subcommand("report", "merge run reports into a comparison table");
    report->add_option("reports", reports, "report JSON files")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        cli::RunConfig cfg = config_path.empty() ? cli::RunConfig{} : cli::load_config(config_path);
        if (seed) cfg.seed = *seed;
        if (!out.empty()) cfg.out = out;
        if (!mock.empty()) cfg.llm.mock = mock;
        if (!task.empty()) cfg.task = task;
        if (!strategy.empty()) cfg.strategy = strategy;
        if (!checkpoint.empty()) cfg.checkpoint = checkpoint;
        cfg.reports = reports;

        if (*train) return cli::cmd_train(cfg, std::cout);
        if (*eval) return cli::cmd_eval(cfg, std::cout);
        if (*label) return cli::cmd_label(cfg, std::cout);
        if (*route) return cli::cmd_route(cfg, std::cout);
        if (*bench) return cli::cmd_bench(cfg, std::cout);
        if (*report) return cli::cmd_report(cfg, std::cout);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
