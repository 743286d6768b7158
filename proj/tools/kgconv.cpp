#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "kgconv/pipeline.h"

namespace fs = std::filesystem;
using namespace kgconv;

namespace {

struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    bool dry_run = false;
    std::string record;
    std::string replay;
    std::string dataset;  // stats only
};

void add_common(CLI::App* cmd, Flags& f, bool config_required) {
    auto* opt = cmd->add_option("--config", f.config, "pipeline configuration file");
    if (config_required) opt->required();
    cmd->add_option("--seed", f.seed, "override the global seed");
    cmd->add_flag("--dry-run", f.dry_run, "validate and list the stages that would run");
    cmd->add_option("--record", f.record, "write gateway transcripts to this directory");
    cmd->add_option("--replay", f.replay, "answer gateway requests from transcripts in this directory");
}

void print_file(const std::string& path) {
    if (fs::exists(path)) std::cout << read_file(path);
}

int run_stage(const Flags& f, const std::string& until) {
    PipelineConfig config = load_pipeline_config(f.config);
    if (f.seed) config.seed = *f.seed;
    if (!f.record.empty() && !f.replay.empty()) throw ContractViolation("--record and --replay are exclusive");

    RunOptions options;
    options.dry_run = f.dry_run;
    options.io = {f.record, f.replay};
    if (until != "pipeline") options.until = until;

    const auto result = run_pipeline(config, options);
    for (const auto& s : result.stages) {
        std::cout << s.name << ": " << s.status;
        if (!s.error.empty()) std::cout << " (" << s.error << ")";
        std::cout << "\n";
    }
    if (result.exit_code == 0 && !f.dry_run) {
        const fs::path work(config.work_dir);
        if (until == "evaluate" || until == "pipeline") print_file((work / "report.txt").string());
        if (until == "stats" || until == "pipeline") print_file((work / "stats.txt").string());
    }
    return result.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Conversational question dataset builder over a knowledge graph"};
    app.require_subcommand(1);
    std::string log_level = "info";
    app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");

    Flags flags;
    std::string chosen;
    for (const auto& name : stage_names()) {
        auto* cmd = app.add_subcommand(name, "bring the pipeline up to date through " + name);
        add_common(cmd, flags, name != "stats");
        if (name == "stats")
            cmd->add_option("--dataset", flags.dataset, "report on a dataset file instead of a pipeline run");
        cmd->callback([&chosen, name] { chosen = name; });
    }
    auto* pipeline = app.add_subcommand("pipeline", "run every stage");
    add_common(pipeline, flags, true);
    pipeline->callback([&chosen] { chosen = "pipeline"; });

    CLI11_PARSE(app, argc, argv);
    spdlog::set_default_logger(spdlog::stderr_color_mt("kgconv"));
    spdlog::set_level(spdlog::level::from_str(log_level));

    try {
        if (chosen == "stats" && !flags.dataset.empty()) {
            std::cout << format_report(report_stats_file(flags.dataset));
            return 0;
        }
        if (flags.config.empty()) {
            std::cerr << "error: --config or --dataset is required\n";
            return 2;
        }
        return run_stage(flags, chosen);
    } catch (const ContractViolation& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 2;
    } catch (const ParseError& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 2;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
}
