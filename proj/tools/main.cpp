#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "gdbn/commands.hpp"

int main(int argc, char** argv) {
    CLI::App app{"gdbn: learn causal temporal graphs from multivariate time series"};
    app.set_version_flag("--version", gdbn::tool_version());
    app.require_subcommand(1);

    gdbn::CliOptions opts;
    uint64_t seed_raw = 0;
    bool seed_given = false;
    double omega_raw = 0.0;
    bool omega_given = false;

    const auto add_seed = [&](CLI::App* sub, const char* help) {
        sub->add_option("--seed", seed_raw, help)->each([&](const std::string&) {
            seed_given = true;
        });
    };

    CLI::App* generate = app.add_subcommand("generate", "simulate a dataset from [dataset] config");
    generate->add_option("--config", opts.config_path, "config file")->required();
    generate->add_option("--out", opts.out_dir, "output directory")->required();
    add_seed(generate, "override [dataset] seed");

    CLI::App* train = app.add_subcommand("train", "fit the model to a generated dataset");
    train->add_option("--data", opts.dataset_dir, "dataset directory from `generate`")->required();
    train->add_option("--config", opts.config_path, "config file with [model]/[train]")->required();
    train->add_option("--out", opts.out_dir, "output directory")->required();
    train->add_option("--resume", opts.resume_path, "checkpoint.txt to continue from");
    add_seed(train, "override [train] seed");

    CLI::App* eval = app.add_subcommand("eval", "score a learned TAM against the ground truth");
    eval->add_option("--learned", opts.learned_path, "learned TAM text file")->required();
    eval->add_option("--truth", opts.truth_path, "ground-truth TAM text file")->required();
    eval->add_option("--out", opts.out_dir, "output directory")->required();
    eval->add_option("--config", opts.config_path, "config file with [eval] (optional)");
    eval->add_option("--omega", omega_raw, "edge threshold (default 0.3)")
        ->each([&](const std::string&) { omega_given = true; });

    CLI::App* bench = app.add_subcommand("bench", "multi-seed grid over modes x m x methods");
    bench->add_option("--config", opts.config_path, "config file with [bench] grid")->required();
    bench->add_option("--out", opts.out_dir, "output directory")->required();
    bench->add_option("--jobs", opts.jobs, "parallel runs (default 1)");

    CLI::App* gradcheck =
        app.add_subcommand("gradcheck", "finite-difference audit of the training gradients");
    add_seed(gradcheck, "seed for the audit problems");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    if (generate->parsed()) opts.command = "generate";
    if (train->parsed()) opts.command = "train";
    if (eval->parsed()) opts.command = "eval";
    if (bench->parsed()) opts.command = "bench";
    if (gradcheck->parsed()) opts.command = "gradcheck";
    if (seed_given) opts.seed = seed_raw;
    if (omega_given) opts.omega = omega_raw;

    return gdbn::run_cli(opts, std::cout, std::cerr);
}
