#include "arper/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "arper/errors.hpp"
#include "arper/rng.hpp"
#include "arper/serialize.hpp"

namespace fs = std::filesystem;

namespace arper {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    for (char c : s + ",") {
        if (c == ',' || c == ' ' || c == '\t') {
            if (!item.empty()) out.push_back(item);
            item.clear();
        } else {
            item += c;
        }
    }
    return out;
}

std::string fmt(double v, int prec = 9) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", prec, v);
    return buf;
}

// Flat "section.key = value" reader that rejects keys it does not know.
class ConfigReader {
public:
    static ConfigReader from_text(const std::string& text) {
        ConfigReader reader;
        std::istringstream in(text);
        std::string line, section;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const std::string t = trim(line);
            if (t.empty() || t[0] == '#' || t[0] == ';') continue;
            if (t.front() == '[') {
                if (t.back() != ']')
                    throw ConfigError("config line " + std::to_string(line_no) +
                                      ": malformed section header");
                section = trim(t.substr(1, t.size() - 2));
                continue;
            }
            const auto eq = t.find('=');
            if (eq == std::string::npos)
                throw ConfigError("config line " + std::to_string(line_no) +
                                  ": expected key = value");
            const std::string key = trim(t.substr(0, eq));
            const std::string value = trim(t.substr(eq + 1));
            if (key.empty())
                throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
            reader.values_[section + "." + key] = value;
        }
        return reader;
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string str(const std::string& key, const std::string& fallback) {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        used_.insert(key);
        return it->second;
    }

    double num(const std::string& key, double fallback) {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        used_.insert(key);
        try {
            std::size_t pos = 0;
            const double v = std::stod(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("trailing characters");
            return v;
        } catch (const std::exception&) {
            throw ConfigError("config field '" + key + "': not a number: " + it->second);
        }
    }

    long integer(const std::string& key, long fallback) {
        const double v = num(key, static_cast<double>(fallback));
        const long i = static_cast<long>(v);
        if (static_cast<double>(i) != v)
            throw ConfigError("config field '" + key + "': expected an integer");
        return i;
    }

    bool flag(const std::string& key, bool fallback) {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        used_.insert(key);
        const std::string v = it->second;
        if (v == "true" || v == "1" || v == "yes") return true;
        if (v == "false" || v == "0" || v == "no") return false;
        throw ConfigError("config field '" + key + "': expected a boolean, got " + v);
    }

    std::vector<std::string> list(const std::string& key) {
        auto it = values_.find(key);
        if (it == values_.end()) return {};
        used_.insert(key);
        return split_list(it->second);
    }

    void ensure_all_used() const {
        for (const auto& [key, value] : values_)
            if (!used_.count(key)) throw ConfigError("unknown config field '" + key + "'");
    }

private:
    std::map<std::string, std::string> values_;
    std::set<std::string> used_;
};

}  // namespace

RunConfig parse_config_text(const std::string& text) {
    ConfigReader reader = ConfigReader::from_text(text);
    RunConfig config;

    config.synthetic = reader.flag("corpus.synthetic", false);
    config.corpus_path = reader.str("corpus.path", "");
    if (config.synthetic && !config.corpus_path.empty())
        throw ConfigError("corpus.synthetic and corpus.path are mutually exclusive");
    if (!config.synthetic && config.corpus_path.empty())
        throw ConfigError("corpus section needs either synthetic = true or a path");
    config.synthetic_spec.n_tasks =
        static_cast<int>(reader.integer("corpus.n_tasks", config.synthetic_spec.n_tasks));
    config.synthetic_spec.utterances_per_task = static_cast<int>(
        reader.integer("corpus.utterances_per_task", config.synthetic_spec.utterances_per_task));
    config.synthetic_spec.slots_per_task = static_cast<int>(
        reader.integer("corpus.slots_per_task", config.synthetic_spec.slots_per_task));
    config.synthetic_spec.shared_slot_fraction =
        reader.num("corpus.shared_slot_fraction", config.synthetic_spec.shared_slot_fraction);
    config.synthetic_spec.template_count = static_cast<int>(
        reader.integer("corpus.template_count", config.synthetic_spec.template_count));
    config.synthetic_spec.seed = static_cast<std::uint64_t>(
        reader.integer("corpus.corpus_seed", static_cast<long>(config.synthetic_spec.seed)));

    RunSettings& s = config.settings;
    s.hidden_size = static_cast<int>(reader.integer("model.hidden_size", s.hidden_size));
    s.embed_size = static_cast<int>(reader.integer("model.embed_size", s.embed_size));

    TrainConfig& t = s.train;
    t.learning_rate = reader.num("train.learning_rate", t.learning_rate);
    t.batch_size = static_cast<int>(reader.integer("train.batch_size", t.batch_size));
    t.max_epochs = static_cast<int>(reader.integer("train.max_epochs", t.max_epochs));
    t.patience = static_cast<int>(reader.integer("train.patience", t.patience));
    t.beta = reader.num("train.beta", t.beta);
    t.lambda_base = reader.num("train.lambda_base", t.lambda_base);
    t.eta = reader.num("train.eta", t.eta);
    t.l2_weight = reader.num("train.l2_weight", t.l2_weight);
    t.dropout_rate = reader.num("train.dropout_rate", t.dropout_rate);
    t.exemplar_budget = static_cast<std::size_t>(
        reader.integer("train.exemplar_budget", static_cast<long>(t.exemplar_budget)));

    config.methods = reader.list("run.methods");
    const std::vector<std::string> seed_list = reader.list("run.seeds");
    if (!seed_list.empty()) {
        config.seeds.clear();
        for (const std::string& v : seed_list)
            config.seeds.push_back(static_cast<std::uint64_t>(std::stoll(v)));
    }
    const std::string order = reader.str("run.order", "fixed");
    if (order == "fixed")
        config.order_mode = RunConfig::OrderMode::Fixed;
    else if (order == "rotate-first")
        config.order_mode = RunConfig::OrderMode::RotateFirst;
    else
        throw ConfigError("run.order must be 'fixed' or 'rotate-first', got '" + order + "'");
    for (const std::string& v : reader.list("run.fixed_order"))
        config.fixed_order.push_back(std::stoi(v));
    config.out_dir = reader.str("run.out", "");
    config.workers = static_cast<int>(reader.integer("run.workers", config.workers));
    s.max_gen_len = static_cast<int>(reader.integer("run.max_gen_len", s.max_gen_len));
    s.macro_eval = reader.flag("run.macro_eval", s.macro_eval);

    config.diagnose_pretrain_task =
        static_cast<int>(reader.integer("diagnose.pretrain_task", config.diagnose_pretrain_task));
    config.diagnose_transfer_task =
        static_cast<int>(reader.integer("diagnose.transfer_task", config.diagnose_transfer_task));
    config.diagnose_eval_every =
        static_cast<int>(reader.integer("diagnose.eval_every", config.diagnose_eval_every));
    config.diagnose_methods = reader.list("diagnose.methods");

    reader.ensure_all_used();
    return config;
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config_text(text.str());
}

TaskStream build_stream(const RunConfig& config) {
    return config.synthetic ? generate_synthetic_stream(config.synthetic_spec)
                            : load_corpus(config.corpus_path);
}

std::vector<std::vector<int>> task_orders(const RunConfig& config, std::size_t n_tasks,
                                          std::uint64_t seed) {
    if (config.order_mode == RunConfig::OrderMode::Fixed) {
        std::vector<int> order = config.fixed_order;
        if (order.empty())
            for (std::size_t i = 0; i < n_tasks; ++i) order.push_back(static_cast<int>(i));
        if (order.size() != n_tasks)
            throw ConfigError("run.fixed_order must list every task id exactly once");
        return {order};
    }
    // Rotate-first: every task leads exactly once; the tail is shuffled
    // deterministically from (seed, leader).
    std::vector<std::vector<int>> orders;
    for (std::size_t lead = 0; lead < n_tasks; ++lead) {
        std::vector<int> rest;
        for (std::size_t i = 0; i < n_tasks; ++i)
            if (i != lead) rest.push_back(static_cast<int>(i));
        Rng rng(Rng::mix(Rng::mix(seed, 0x06de6), lead));
        rng.shuffle(rest);
        std::vector<int> order{static_cast<int>(lead)};
        order.insert(order.end(), rest.begin(), rest.end());
        orders.push_back(std::move(order));
    }
    return orders;
}

std::uint64_t fnv1a64(const std::string& text) {
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        hash ^= c;
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

std::string resolve_out_dir(const std::string& flag_value) {
    if (!flag_value.empty()) return flag_value;
    if (const char* env = std::getenv("ARPER_OUT_ROOT"); env && *env) return env;
    return "runs";
}

namespace {

std::string canonical_config(const RunConfig& c) {
    std::ostringstream out;
    const RunSettings& s = c.settings;
    const TrainConfig& t = s.train;
    out << "synthetic=" << c.synthetic << ";path=" << c.corpus_path << ";n_tasks="
        << c.synthetic_spec.n_tasks << ";upt=" << c.synthetic_spec.utterances_per_task
        << ";spt=" << c.synthetic_spec.slots_per_task << ";ssf="
        << fmt(c.synthetic_spec.shared_slot_fraction, 6) << ";templates="
        << c.synthetic_spec.template_count << ";cseed=" << c.synthetic_spec.seed
        << ";hidden=" << s.hidden_size << ";embed=" << s.embed_size << ";lr="
        << fmt(t.learning_rate, 9) << ";batch=" << t.batch_size << ";epochs=" << t.max_epochs
        << ";patience=" << t.patience << ";beta=" << fmt(t.beta, 6) << ";lambda_base="
        << fmt(t.lambda_base, 6) << ";eta=" << fmt(t.eta, 6) << ";l2=" << fmt(t.l2_weight, 9)
        << ";dropout=" << fmt(t.dropout_rate, 6) << ";budget=" << t.exemplar_budget
        << ";gen_len=" << s.max_gen_len << ";macro=" << s.macro_eval;
    return out.str();
}

std::string hex_id(std::uint64_t value) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%012llx", static_cast<unsigned long long>(value & 0xffffffffffffULL));
    return buf;
}

struct Job {
    MethodSpec method;
    std::string method_name;
    std::uint64_t seed = 0;
    std::vector<int> order;
    std::string run_id;
    fs::path dir;
};

struct JobOutcome {
    bool ok = false;
    bool skipped = false;
    std::string error;
    double omega_ser_all = 0, omega_bleu_all = 0, omega_ser_first = 0, omega_bleu_first = 0;
};

std::string order_string(const std::vector<int>& order) {
    std::string s;
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (i) s += ' ';
        s += std::to_string(order[i]);
    }
    return s;
}

void write_metrics_csv(const fs::path& path, const std::string& run_id,
                       const std::string& method, const std::vector<EvalRecord>& records) {
    std::ofstream out(path);
    out << "run_id,method,step,ser_all,bleu_all,ser_first,bleu_first\n";
    for (const EvalRecord& r : records)
        out << run_id << ',' << method << ',' << r.step << ',' << fmt(r.ser_all) << ','
            << fmt(r.bleu_all) << ',' << fmt(r.ser_first) << ',' << fmt(r.bleu_first) << '\n';
}

JobOutcome execute_job(const Job& job, const TaskStream& stream, const RunConfig& config,
                       const std::string& config_hash) {
    JobOutcome outcome;
    const fs::path manifest_path = job.dir / "manifest.json";
    if (fs::exists(manifest_path)) {
        std::ifstream in(manifest_path);
        nlohmann::json m = nlohmann::json::parse(in, nullptr, false);
        if (!m.is_discarded() && m.value("completed", false)) {
            outcome.ok = true;
            outcome.skipped = true;
            outcome.omega_ser_all = m.value("omega_ser_all", 0.0);
            outcome.omega_bleu_all = m.value("omega_bleu_all", 0.0);
            outcome.omega_ser_first = m.value("omega_ser_first", 0.0);
            outcome.omega_bleu_first = m.value("omega_bleu_first", 0.0);
            return outcome;
        }
    }

    RunSettings settings = config.settings;
    settings.train.seed = job.seed;
    const TaskStream run_stream_data = reorder_stream(stream, job.order);
    const ExperimentResult result = run_stream(run_stream_data, job.method, settings);

    fs::create_directories(job.dir);
    write_metrics_csv(job.dir / "metrics.csv", job.run_id, job.method_name, result.records);
    for (std::size_t i = 0; i < result.checkpoints.size(); ++i) {
        save_checkpoint(result.checkpoints[i],
                        (job.dir / ("checkpoint-task" + std::to_string(i) + ".json")).string());
        save_exemplar_store(result.store_snapshots[i], run_stream_data,
                            (job.dir / ("exemplars-task" + std::to_string(i) + ".jsonl")).string());
    }

    std::vector<std::string> order_names;
    for (int id : job.order)
        order_names.push_back(stream.tasks[static_cast<std::size_t>(id)].name);
    nlohmann::json manifest{{"run_id", job.run_id},
                            {"method", job.method_name},
                            {"seed", job.seed},
                            {"order", job.order},
                            {"order_names", order_names},
                            {"config_hash", config_hash},
                            {"config", canonical_config(config)},
                            {"omega_ser_all", result.omega_ser_all},
                            {"omega_bleu_all", result.omega_bleu_all},
                            {"omega_ser_first", result.omega_ser_first},
                            {"omega_bleu_first", result.omega_bleu_first},
                            {"task_seconds", result.task_seconds},
                            {"lambdas", result.lambdas},
                            {"epochs", result.epochs},
                            {"completed", true}};
    std::ofstream out(manifest_path);
    out << manifest.dump(2) << '\n';

    outcome.ok = true;
    outcome.omega_ser_all = result.omega_ser_all;
    outcome.omega_bleu_all = result.omega_bleu_all;
    outcome.omega_ser_first = result.omega_ser_first;
    outcome.omega_bleu_first = result.omega_bleu_first;
    return outcome;
}

struct Aggregate {
    std::vector<double> ser_all, bleu_all, ser_first, bleu_first;
};

std::pair<double, double> mean_std(const std::vector<double>& values) {
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(values.size());
    return {mean, std::sqrt(var)};
}

void write_summary(const fs::path& out_dir, const std::vector<std::string>& method_order,
                   const std::map<std::string, Aggregate>& by_method, std::ostream& log) {
    std::ofstream csv(out_dir / "summary.csv");
    csv << "method,runs,omega_ser_all_mean,omega_ser_all_std,omega_bleu_all_mean,"
           "omega_bleu_all_std,omega_ser_first_mean,omega_ser_first_std,"
           "omega_bleu_first_mean,omega_bleu_first_std\n";
    log << "\nmethod            runs  O_all SER    O_all BLEU   O_first SER  O_first BLEU\n";
    for (const std::string& method : method_order) {
        auto it = by_method.find(method);
        if (it == by_method.end()) continue;
        const Aggregate& agg = it->second;
        const auto [sam, sas] = mean_std(agg.ser_all);
        const auto [bam, bas] = mean_std(agg.bleu_all);
        const auto [sfm, sfs] = mean_std(agg.ser_first);
        const auto [bfm, bfs] = mean_std(agg.bleu_first);
        csv << method << ',' << agg.ser_all.size() << ',' << fmt(sam) << ',' << fmt(sas) << ','
            << fmt(bam) << ',' << fmt(bas) << ',' << fmt(sfm) << ',' << fmt(sfs) << ','
            << fmt(bfm) << ',' << fmt(bfs) << '\n';
        char line[160];
        std::snprintf(line, sizeof line, "%-17s %4zu  %.4f±%.4f %.3f±%.3f  %.4f±%.4f %.3f±%.3f",
                      method.c_str(), agg.ser_all.size(), sam, sas, bam, bas, sfm, sfs, bfm, bfs);
        log << line << '\n';
    }
}

}  // namespace

int cmd_run(const RunConfig& config, std::ostream& log) {
    if (config.methods.empty()) throw ConfigError("run.methods: at least one method required");
    if (config.seeds.empty()) throw ConfigError("run.seeds: at least one seed required");
    std::vector<MethodSpec> specs;
    for (const std::string& name : config.methods) {
        const MethodSpec spec = MethodSpec::parse(name);
        if (spec.variant == Variant::Arper && config.settings.train.lambda_base <= 0.0)
            throw ConfigError("train.lambda_base must be set (> 0) when running arper");
        specs.push_back(spec);
    }

    const TaskStream stream = build_stream(config);
    const std::string config_hash = hex_id(fnv1a64(canonical_config(config)));
    const fs::path out_dir = resolve_out_dir(config.out_dir);
    fs::create_directories(out_dir);

    std::vector<Job> jobs;
    for (std::uint64_t seed : config.seeds) {
        for (const std::vector<int>& order : task_orders(config, stream.tasks.size(), seed)) {
            for (std::size_t m = 0; m < specs.size(); ++m) {
                Job job;
                job.method = specs[m];
                job.method_name = config.methods[m];
                job.seed = seed;
                job.order = order;
                job.run_id = hex_id(fnv1a64(canonical_config(config) + "|" + job.method_name +
                                            "|" + std::to_string(seed) + "|" +
                                            order_string(order)));
                job.dir = out_dir / (job.method_name + "-s" + std::to_string(seed) + "-" +
                                     job.run_id);
                jobs.push_back(std::move(job));
            }
        }
    }

    std::vector<JobOutcome> outcomes(jobs.size());
    std::atomic<std::size_t> next{0};
    std::mutex log_mutex;
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= jobs.size()) return;
            const Job& job = jobs[i];
            try {
                outcomes[i] = execute_job(job, stream, config, config_hash);
                std::lock_guard<std::mutex> guard(log_mutex);
                log << (outcomes[i].skipped ? "skipped (completed): " : "finished: ")
                    << job.dir.filename().string() << " order [" << order_string(job.order)
                    << "]\n";
            } catch (const std::exception& e) {
                outcomes[i].ok = false;
                outcomes[i].error = e.what();
                std::lock_guard<std::mutex> guard(log_mutex);
                log << "FAILED: " << job.dir.filename().string() << ": " << e.what() << "\n";
            }
        }
    };
    const std::size_t n_workers =
        std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(config.workers),
                                                       jobs.size()));
    if (n_workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (std::size_t w = 0; w < n_workers; ++w) threads.emplace_back(worker);
        for (std::thread& th : threads) th.join();
    }

    std::map<std::string, Aggregate> by_method;
    int failures = 0;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        if (!outcomes[i].ok) {
            ++failures;
            continue;
        }
        Aggregate& agg = by_method[jobs[i].method_name];
        agg.ser_all.push_back(outcomes[i].omega_ser_all);
        agg.bleu_all.push_back(outcomes[i].omega_bleu_all);
        agg.ser_first.push_back(outcomes[i].omega_ser_first);
        agg.bleu_first.push_back(outcomes[i].omega_bleu_first);
    }
    std::vector<std::string> method_order;
    for (const std::string& m : config.methods)
        if (std::find(method_order.begin(), method_order.end(), m) == method_order.end())
            method_order.push_back(m);
    write_summary(out_dir, method_order, by_method, log);
    if (failures)
        log << failures << " of " << jobs.size() << " runs failed\n";
    return failures == 0 ? 0 : 1;
}

int cmd_diagnose(const RunConfig& config, std::ostream& log) {
    const TaskStream stream = build_stream(config);
    const std::vector<std::string>& methods =
        config.diagnose_methods.empty() ? config.methods : config.diagnose_methods;
    if (methods.empty()) throw ConfigError("diagnose.methods: at least one method required");
    const int n_tasks = static_cast<int>(stream.tasks.size());
    if (config.diagnose_pretrain_task < 0 || config.diagnose_pretrain_task >= n_tasks ||
        config.diagnose_transfer_task < 0 || config.diagnose_transfer_task >= n_tasks)
        throw ConfigError("diagnose: task index out of range");

    const fs::path out_dir = resolve_out_dir(config.out_dir);
    fs::create_directories(out_dir);
    int failures = 0;
    for (const std::string& name : methods) {
        try {
            const MethodSpec spec = MethodSpec::parse(name);
            if (spec.variant == Variant::Arper && config.settings.train.lambda_base <= 0.0)
                throw ConfigError("train.lambda_base must be set (> 0) when running arper");
            const std::vector<DiagnosisPoint> curve = diagnose_forgetting(
                stream, config.diagnose_pretrain_task, config.diagnose_transfer_task, spec,
                config.settings, config.diagnose_eval_every);
            const fs::path path = out_dir / ("diagnose-" + name + ".csv");
            std::ofstream out(path);
            out << "epoch,ser,bleu\n";
            for (const DiagnosisPoint& p : curve)
                out << p.epoch << ',' << fmt(p.ser) << ',' << fmt(p.bleu) << '\n';
            log << "wrote " << path.string() << " (" << curve.size() << " points)\n";
        } catch (const std::exception& e) {
            ++failures;
            log << "FAILED: diagnose " << name << ": " << e.what() << "\n";
        }
    }
    return failures == 0 ? 0 : 1;
}

int cmd_weight_delta(const std::string& checkpoint_a, const std::string& checkpoint_b,
                     const std::string& segment, const std::string& out_csv,
                     std::ostream& log) {
    const ModelParams a = load_checkpoint(checkpoint_a);
    const ModelParams b = load_checkpoint(checkpoint_b);
    const DeltaMatrix delta = weight_delta(a, b, segment);
    std::ofstream out(out_csv);
    if (!out) throw ValidationError("cannot write: " + out_csv);
    for (std::size_t r = 0; r < delta.rows; ++r) {
        for (std::size_t c = 0; c < delta.cols; ++c) {
            if (c) out << ',';
            out << fmt(delta.values[r * delta.cols + c]);
        }
        out << '\n';
    }
    log << "wrote " << out_csv << " (" << delta.rows << "x" << delta.cols << " segment "
        << delta.segment << ")\n";
    return 0;
}

int cmd_report(const std::vector<std::string>& run_dirs, const std::string& out_path,
               std::ostream& log) {
    struct RunRow {
        std::string method;
        std::vector<double> ser_all, bleu_all, ser_first, bleu_first;
    };
    std::map<std::string, RunRow> runs;  // keyed by run_id
    std::vector<std::string> problems;

    for (const std::string& root : run_dirs) {
        if (!fs::exists(root)) {
            problems.push_back(root + ": does not exist");
            continue;
        }
        for (const auto& entry : fs::recursive_directory_iterator(root)) {
            if (!entry.is_regular_file() || entry.path().filename() != "metrics.csv") continue;
            std::ifstream in(entry.path());
            std::string line;
            std::getline(in, line);  // header
            bool bad = false;
            std::size_t line_no = 1;
            while (std::getline(in, line)) {
                ++line_no;
                if (trim(line).empty()) continue;
                std::vector<std::string> cells;
                std::string cell;
                for (char c : line + ",") {
                    if (c == ',') {
                        cells.push_back(cell);
                        cell.clear();
                    } else {
                        cell += c;
                    }
                }
                if (cells.size() != 7) {
                    problems.push_back(entry.path().string() + ": malformed row " +
                                       std::to_string(line_no));
                    bad = true;
                    break;
                }
                try {
                    RunRow& row = runs[cells[0]];
                    row.method = cells[1];
                    row.ser_all.push_back(std::stod(cells[3]));
                    row.bleu_all.push_back(std::stod(cells[4]));
                    row.ser_first.push_back(std::stod(cells[5]));
                    row.bleu_first.push_back(std::stod(cells[6]));
                } catch (const std::exception&) {
                    problems.push_back(entry.path().string() + ": unparsable row " +
                                       std::to_string(line_no));
                    bad = true;
                    break;
                }
            }
            if (bad) continue;
        }
    }

    if (runs.empty()) {
        for (const std::string& p : problems) log << "problem: " << p << "\n";
        log << "no runs found\n";
        return 1;
    }

    std::map<std::string, Aggregate> by_method;
    for (const auto& [run_id, row] : runs) {
        if (row.ser_all.empty()) continue;
        Aggregate& agg = by_method[row.method];
        agg.ser_all.push_back(omega(row.ser_all));
        agg.bleu_all.push_back(omega(row.bleu_all));
        agg.ser_first.push_back(omega(row.ser_first));
        agg.bleu_first.push_back(omega(row.bleu_first));
    }

    std::ostringstream table;
    table << "| method | runs | O_all SER | O_all BLEU-4 | O_first SER | O_first BLEU-4 |\n";
    table << "|---|---|---|---|---|---|\n";
    for (const auto& [method, agg] : by_method) {
        const auto [sam, sas] = mean_std(agg.ser_all);
        const auto [bam, bas] = mean_std(agg.bleu_all);
        const auto [sfm, sfs] = mean_std(agg.ser_first);
        const auto [bfm, bfs] = mean_std(agg.bleu_first);
        char line[256];
        std::snprintf(line, sizeof line,
                      "| %s | %zu | %.4f ± %.4f | %.4f ± %.4f | %.4f ± %.4f | %.4f ± %.4f |",
                      method.c_str(), agg.ser_all.size(), sam, sas, bam, bas, sfm, sfs, bfm,
                      bfs);
        table << line << '\n';
    }

    for (const std::string& p : problems) log << "problem: " << p << "\n";
    log << table.str();
    if (!out_path.empty()) {
        std::ofstream out(out_path);
        out << table.str();
        log << "wrote " << out_path << "\n";
    }
    return 0;
}

}  // namespace arper
