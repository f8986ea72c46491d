#ifndef ARPER_EXPERIMENT_HPP
#define ARPER_EXPERIMENT_HPP

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "arper/continual.hpp"

namespace arper {

// Experiment description parsed from a sectioned key-value config file.
struct RunConfig {
    // [corpus]: either a JSONL path or a synthetic spec.
    bool synthetic = false;
    SyntheticSpec synthetic_spec;
    std::string corpus_path;

    // [model] + [train] + eval knobs.
    RunSettings settings;

    // [run]
    std::vector<std::string> methods;
    std::vector<std::uint64_t> seeds{0};
    enum class OrderMode { Fixed, RotateFirst } order_mode = OrderMode::Fixed;
    std::vector<int> fixed_order;  // empty means natural order
    std::string out_dir;
    int workers = 1;

    // [diagnose]
    int diagnose_pretrain_task = 0;
    int diagnose_transfer_task = 1;
    int diagnose_eval_every = 5;
    std::vector<std::string> diagnose_methods;  // falls back to `methods`
};

RunConfig parse_config_text(const std::string& text);
RunConfig parse_config_file(const std::string& path);

TaskStream build_stream(const RunConfig& config);

// Task orders for one seed: the fixed order, or one order per task with that
// task leading and the rest shuffled deterministically from the seed.
std::vector<std::vector<int>> task_orders(const RunConfig& config, std::size_t n_tasks,
                                          std::uint64_t seed);

std::uint64_t fnv1a64(const std::string& text);

// Default output root: --out flag, else $ARPER_OUT_ROOT, else ./runs.
std::string resolve_out_dir(const std::string& flag_value);

// Subcommand drivers; return a process exit code. Progress goes to `log`.
int cmd_run(const RunConfig& config, std::ostream& log);
int cmd_diagnose(const RunConfig& config, std::ostream& log);
int cmd_weight_delta(const std::string& checkpoint_a, const std::string& checkpoint_b,
                     const std::string& segment, const std::string& out_csv,
                     std::ostream& log);
int cmd_report(const std::vector<std::string>& run_dirs, const std::string& out_path,
               std::ostream& log);

}  // namespace arper

#endif
