/**
 * @file irriloop.cpp
 * @brief Command-line entry point: irriloop <subcommand> [--config FILE] [--seed N] [--out DIR] [--scale K].
 */
#include "irriloop/config.hpp"
#include "irriloop/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace irriloop;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct GlobalOptions {
    std::string config;
    std::uint64_t seed{0};
    bool seed_given{false};
    std::string out{"out"};
    int scale{1};
};

CommandContext make_context(const GlobalOptions& g) {
    CommandContext ctx;
    ctx.config = g.config.empty() ? PipelineConfig{} : load_config(g.config);
    ctx.seed = g.seed;
    ctx.scale = g.scale;
    ctx.out = g.out;
    return ctx;
}

void report(const std::vector<std::filesystem::path>& written) {
    for (const auto& p : written) std::cout << "wrote " << p.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Soil-moisture control pipeline: data generation, surrogate training, validation, "
                 "mismatch correction and zone MPC closed-loop runs."};
    app.require_subcommand(1);
    app.footer("\n" + config_reference() +
               "\nExit codes: 0 success, 2 configuration error, 3 runtime failure.");

    GlobalOptions g;
    app.add_option("--config", g.config, "YAML pipeline configuration (defaults when omitted)");
    app.add_option("--seed", g.seed, "base seed for data, training offsets and closed-loop noise");
    app.add_option("--out", g.out, "output directory (battery: report CSV path)");
    app.add_option("--scale", g.scale, "divide every dataset length by this factor")->check(CLI::PositiveNumber);

    auto* datagen = app.add_subcommand("datagen", "simulate the training and validation datasets");
    datagen->add_option("--spec", g.config, "alias of --config");

    std::string which;
    auto* train = app.add_subcommand("train", "train one model: m1, m2, m3, agg or baseline");
    train->add_option("which", which, "model to train")->required()->check(
        CLI::IsMember({"m1", "m2", "m3", "agg", "baseline"}));

    auto* validate = app.add_subcommand("validate", "multi-step NRMSE of every trained model");
    auto* correct = app.add_subcommand("correct-eval", "prediction error under each mismatch correction");
    auto* zmpc = app.add_subcommand("zmpc-run", "one closed-loop run of the configured controller");

    std::string configs_dir, models_dir;
    auto* battery = app.add_subcommand("battery", "run every config of a directory and compare them");
    battery->add_option("--configs", configs_dir, "directory of YAML run configs")->required();
    battery->add_option("--models", models_dir, "trained model directory (default: run.models of the first config)");

    std::string report_in;
    auto* rep = app.add_subcommand("report", "markdown and CSV summary of validation, correction and battery outputs");
    rep->add_option("--in", report_in, "directory holding nrmse.csv, correction.csv and battery CSVs")->required();

    for (auto* sub : {datagen, train, validate, correct, zmpc, battery, rep}) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }
    g.seed_given = app.count("--seed") > 0;

    try {
        if (*battery) {
            const std::string out = app.count("--out") ? g.out : "report.csv";
            report(cmd_battery(configs_dir, out, g.seed_given ? std::optional<std::uint64_t>(g.seed) : std::nullopt,
                               models_dir));
            return 0;
        }
        if (*rep) {
            report(cmd_report(report_in, g.out));
            return 0;
        }
        CommandContext ctx = make_context(g);
        if (!g.seed_given && *zmpc) ctx.seed = ctx.config.run.run.noise.seed;
        if (*datagen) report(cmd_datagen(ctx));
        if (*train) report(cmd_train(ctx, which));
        if (*validate) report(cmd_validate(ctx));
        if (*correct) report(cmd_correct_eval(ctx));
        if (*zmpc) report(cmd_zmpc_run(ctx));
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return 0;
}
