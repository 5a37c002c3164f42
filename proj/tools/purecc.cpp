#include <CLI11.hpp>

#include <cstdint>
#include <functional>
#include <iostream>
#include <optional>
#include <string>

#include "purecc/config.hpp"
#include "purecc/errors.hpp"
#include "purecc/pipeline.hpp"

namespace {

constexpr int kExitGeneric = 1;
constexpr int kExitConfig = 2;
constexpr int kExitPrerequisite = 3;
constexpr int kExitDivergence = 4;

struct Overrides {
    std::string config_path;
    std::optional<std::string> run_dir;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> lambda_mode;
    std::optional<std::string> original_mode;
    std::optional<double> eta;
};

purecc::RunConfig load(const Overrides& o) {
    purecc::RunConfig cfg = o.config_path.empty() ? purecc::RunConfig{} : purecc::parse_config(o.config_path);
    if (o.run_dir) cfg.run_dir = *o.run_dir;
    if (o.seed) cfg.seeds = purecc::StageSeeds::from(*o.seed);
    if (o.lambda_mode) purecc::parse_lambda_mode(*o.lambda_mode, cfg.purecc);
    if (o.original_mode) cfg.purecc.original_mode = purecc::parse_original_mode(*o.original_mode);
    if (o.eta) cfg.purecc.eta = *o.eta;
    cfg.validate();
    return cfg;
}

int run_stage(const Overrides& o, const std::function<void(const purecc::RunConfig&)>& stage) {
    try {
        const purecc::RunConfig cfg = load(o);
        purecc::write_config_echo(cfg);
        stage(cfg);
        return 0;
    } catch (const purecc::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const purecc::PrerequisiteError& e) {
        std::cerr << "prerequisite error: " << e.what() << '\n';
        return kExitPrerequisite;
    } catch (const purecc::DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << '\n';
        return kExitDivergence;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitGeneric;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Toy pure-learning customization pipeline"};
    app.require_subcommand(1);

    Overrides o;
    app.add_option("--config", o.config_path, "key = value config file")->check(CLI::ExistingFile);
    app.add_option("--run-dir", o.run_dir, "artifact directory");
    app.add_option("--seed", o.seed, "derive every stage seed from this value");
    app.add_option("--lambda-mode", o.lambda_mode, "adaptive | fixed:<value>");
    app.add_option("--original-mode", o.original_mode, "theta2 | theta3");
    app.add_option("--eta", o.eta, "weight of the pure learning loss");

    const std::pair<const char*, std::function<void(const purecc::RunConfig&)>> stages[] = {
        {"pretrain", purecc::stage_pretrain}, {"extract", purecc::stage_extract},
        {"customize", purecc::stage_customize}, {"baseline", purecc::stage_baseline},
        {"sample", purecc::stage_sample},       {"eval", purecc::stage_eval},
        {"report", purecc::stage_report},       {"run", purecc::run_pipeline},
    };
    const char* help[] = {
        "train the base flow model",
        "train the concept extractor",
        "pure learning customization",
        "plain customization loss baseline",
        "write samples of the customized model",
        "evaluate the customized model and the baseline",
        "aggregate report.csv and plot.csv",
        "every stage in order",
    };
    std::function<void(const purecc::RunConfig&)> chosen;
    for (std::size_t i = 0; i < std::size(stages); ++i) {
        auto* sub = app.add_subcommand(stages[i].first, help[i]);
        sub->fallthrough();
        sub->callback([&, i] { chosen = stages[i].second; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }
    return run_stage(o, chosen);
}
