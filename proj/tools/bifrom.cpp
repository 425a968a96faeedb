// Command-line driver for the bifurcation ROM pipeline. Each subcommand runs
// one stage and leaves its artifacts (CSV + JSON, with a manifest) under the
// configured output directory.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "bifrom/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitPrerequisite = 3;
constexpr int kExitNumerical = 4;

struct Options {
    std::string config_path;
    std::optional<std::string> out;
    std::optional<std::uint64_t> seed_override;
    std::string strategy = "nearest";
};

int run_stage(const Options& opt, const std::string& stage) {
    using namespace bifrom;
    using namespace bifrom::pipeline;
    PipelineConfig cfg;
    try {
        std::optional<std::filesystem::path> out;
        if (opt.out) out = *opt.out;
        cfg = load_config(opt.config_path, out, opt.seed_override);
        const bool hopf = cfg.kind == "hopf";
        if (stage == "generate") {
            hopf ? stage_generate_hopf(cfg) : stage_generate_pitchfork(cfg);
        } else if (stage == "pod") {
            stage_pod_hopf(cfg);
        } else if (stage == "dmd-fit") {
            stage_dmd_fit(cfg);
        } else if (stage == "dmd-stabilize") {
            stage_dmd_stabilize(cfg);
        } else if (stage == "hankel-fit") {
            stage_hankel_fit(cfg);
        } else if (stage == "predict") {
            stage_predict(cfg);
        } else if (stage == "interp") {
            stage_interp(cfg);
        } else if (stage == "cluster") {
            stage_cluster(cfg);
        } else if (stage == "error-table") {
            stage_error_table(cfg);
        } else if (stage == "train-ann") {
            stage_train_ann(cfg);
        } else if (stage == "diagram") {
            stage_diagram(cfg, opt.strategy);
        } else if (stage == "evaluate") {
            stage_evaluate(cfg);
            std::cout << evaluate_pitchfork(cfg).dump(2) << '\n';
        }
    } catch (const ParseError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const InvalidArgument& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const IoError& e) {
        std::cerr << "prerequisite error: " << e.what() << '\n';
        return kExitPrerequisite;
    } catch (const ValidationError& e) {
        std::cerr << "prerequisite error: " << e.what() << '\n';
        return kExitPrerequisite;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    }
    std::cout << stage << ": ok\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Data-driven reduced-order modeling for bifurcating systems"};
    app.require_subcommand(1);

    Options opt;
    const std::vector<std::string> stages = {
        "generate", "pod",     "dmd-fit",     "dmd-stabilize", "hankel-fit", "predict",
        "interp",   "cluster", "error-table", "train-ann",     "diagram",    "evaluate"};

    std::string chosen;
    for (const auto& name : stages) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("--config", opt.config_path, "pipeline configuration (JSON)")
            ->required();
        sub->add_option("--out", opt.out, "override the output directory");
        sub->add_option("--seed-override", opt.seed_override, "override the generator seed");
        if (name == "diagram")
            sub->add_option("--strategy", opt.strategy, "nearest | dual | oracle");
        sub->callback([&chosen, name] { chosen = name; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }
    return run_stage(opt, chosen);
}
