#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "arper/experiment.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Continual learning engine for semantically conditioned NLG"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    int workers = 0;
    std::vector<long long> seeds;

    auto add_common = [&](CLI::App* cmd, bool needs_config) {
        auto* opt = cmd->add_option("--config", config_path, "experiment config file");
        if (needs_config) opt->required();
        cmd->add_option("--out", out_dir, "output directory (default $ARPER_OUT_ROOT or ./runs)");
        cmd->add_option("--workers", workers, "parallel runs");
        cmd->add_option("--seed", seeds, "override run seeds");
    };

    CLI::App* run = app.add_subcommand("run", "execute the (method x seed x order) matrix");
    add_common(run, true);

    CLI::App* diagnose = app.add_subcommand("diagnose", "forgetting curve on a task transfer");
    add_common(diagnose, true);

    CLI::App* wdelta = app.add_subcommand("weight-delta",
                                          "elementwise |a-b| of a checkpoint segment");
    std::string ckpt_a, ckpt_b, segment, delta_out = "weight-delta.csv";
    wdelta->add_option("checkpoint_a", ckpt_a)->required();
    wdelta->add_option("checkpoint_b", ckpt_b)->required();
    wdelta->add_option("segment", segment, "layout segment name, e.g. u_forget")->required();
    wdelta->add_option("--out", delta_out, "output CSV path");

    CLI::App* report = app.add_subcommand("report", "aggregate run metrics into a table");
    std::vector<std::string> report_dirs;
    std::string report_out;
    report->add_option("dirs", report_dirs, "run directories")->required();
    report->add_option("--out", report_out, "also write the table to this file");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed() || diagnose->parsed()) {
            arper::RunConfig config = arper::parse_config_file(config_path);
            if (!out_dir.empty()) config.out_dir = out_dir;
            config.out_dir = arper::resolve_out_dir(config.out_dir);
            if (workers > 0) config.workers = workers;
            if (!seeds.empty()) {
                config.seeds.clear();
                for (long long s : seeds)
                    config.seeds.push_back(static_cast<std::uint64_t>(s));
            }
            return run->parsed() ? arper::cmd_run(config, std::cout)
                                 : arper::cmd_diagnose(config, std::cout);
        }
        if (wdelta->parsed())
            return arper::cmd_weight_delta(ckpt_a, ckpt_b, segment, delta_out, std::cout);
        if (report->parsed()) return arper::cmd_report(report_dirs, report_out, std::cout);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
