#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "amint/runner.hpp"

namespace {

using namespace amint;

// Shared experiment flags: --out and --seed override the config file.
struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    int64_t seed = -1;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "Experiment config file (JSON)")->required();
    cmd->add_option("--out", args.out_dir, "Output directory (overrides the config)");
    cmd->add_option("--seed", args.seed, "Master seed (overrides the config)");
}

ExperimentConfig resolve_config(const CommonArgs& args) {
    ExperimentConfig cfg = load_config(args.config_path);
    if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
    if (args.seed >= 0) cfg.seed = static_cast<uint64_t>(args.seed);
    return cfg;
}

int run_stage_command(const CommonArgs& args, std::vector<Method> methods) {
    ExperimentConfig cfg = resolve_config(args);
    cfg.methods = std::move(methods);
    RunResult result = run_experiment(cfg);
    for (const auto& r : result.records)
        std::printf("%s %s seed=%llu mint_acc=%.4f audited_acc=%.4f\n", to_string(r.method).c_str(),
                    r.dataset.c_str(), static_cast<unsigned long long>(r.seed), r.mint_acc,
                    r.audited_acc);
    std::printf("artifacts: %s\n", result.out_dir.string().c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Membership-detection training toolkit"};
    app.require_subcommand(1);

    CommonArgs active_args, passive_args, mia_args;
    auto* cmd_active = app.add_subcommand("train-active", "Joint audited+MINT training");
    add_common(cmd_active, active_args);
    auto* cmd_passive =
        app.add_subcommand("train-passive", "Audited-only training plus a post-hoc MINT head");
    add_common(cmd_passive, passive_args);
    auto* cmd_mia = app.add_subcommand("run-mia", "Loss and confidence threshold attacks");
    add_common(cmd_mia, mia_args);

    std::string report_dir, report_out;
    auto* cmd_report = app.add_subcommand("report", "Aggregate results files into the three tables");
    cmd_report->add_option("results_dir", report_dir, "Directory scanned for results.csv files")
        ->required();
    cmd_report->add_option("--out", report_out, "Output directory (default: results_dir)");

    std::string scale_name = "smoke", repro_out = "repro", repro_data_root;
    int64_t repro_seed = 1;
    int jobs = 1;
    auto* cmd_repro = app.add_subcommand("reproduce", "Full comparison pipeline at a chosen scale");
    cmd_repro->add_option("--scale", scale_name, "smoke|desk");
    cmd_repro->add_option("--out", repro_out, "Output directory");
    cmd_repro->add_option("--seed", repro_seed, "Master seed");
    cmd_repro->add_option("--jobs", jobs, "Accepted for compatibility; stages run sequentially");
    cmd_repro->add_option("--data-root", repro_data_root,
                          "Dataset root (default: $AMINT_DATA_ROOT, then ./data)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (cmd_active->parsed()) return run_stage_command(active_args, {Method::ACTIVE});
        if (cmd_passive->parsed()) return run_stage_command(passive_args, {Method::PASSIVE});
        if (cmd_mia->parsed())
            return run_stage_command(mia_args, {Method::MIA_LOSS, Method::MIA_CONF});
        if (cmd_report->parsed()) {
            ExperimentReport report =
                run_report(report_dir, report_out.empty() ? report_dir : report_out);
            std::fputs(report.full_text().c_str(), stdout);
            return 0;
        }
        if (cmd_repro->parsed()) {
            if (repro_seed < 0) throw config_error("reproduce: seed must be nonnegative");
            ReproduceResult result =
                run_reproduce(repro_scale_from_string(scale_name), repro_out,
                              static_cast<uint64_t>(repro_seed), jobs, repro_data_root);
            std::fputs(result.report.full_text().c_str(), stdout);
            std::printf("artifacts: %s\n", result.out_dir.string().c_str());
            return 0;
        }
    } catch (const config_error& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return 2;
}
