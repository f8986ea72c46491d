#include "arper/serialize.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "arper/errors.hpp"

namespace arper {

namespace {

nlohmann::json config_json(const ModelConfig& config) {
    return {{"hidden_size", config.hidden_size},
            {"embed_size", config.embed_size},
            {"vocab_size", config.vocab_size},
            {"da_dim", config.da_dim},
            {"dropout_rate", config.dropout_rate}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig config;
    config.hidden_size = j.at("hidden_size").get<int>();
    config.embed_size = j.at("embed_size").get<int>();
    config.vocab_size = j.at("vocab_size").get<int>();
    config.da_dim = j.at("da_dim").get<int>();
    config.dropout_rate = j.at("dropout_rate").get<double>();
    return config;
}

nlohmann::json parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open file: " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": invalid JSON: " + e.what());
    }
}

}  // namespace

void save_checkpoint(const ModelParams& model, const std::string& path) {
    nlohmann::json j{{"format", "arper-checkpoint-v1"},
                     {"config", config_json(model.config)},
                     {"theta", model.theta}};
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write checkpoint: " + path);
    out << j.dump() << '\n';
}

ModelParams load_checkpoint(const std::string& path) {
    const nlohmann::json j = parse_file(path);
    if (j.value("format", "") != "arper-checkpoint-v1")
        throw ParseError(path + ": not an arper checkpoint");
    ModelParams model;
    model.config = config_from_json(j.at("config"));
    model.layout = ParamLayout::make(model.config);
    model.theta = j.at("theta").get<std::vector<double>>();
    if (model.theta.size() != model.layout.total)
        throw ShapeError(path + ": theta length does not match the config layout");
    return model;
}

void save_exemplar_store(const ExemplarStore& store, const TaskStream& stream,
                         const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write exemplar store: " + path);
    for (const auto& [task_id, list] : store.per_task) {
        const std::string& task_name =
            stream.tasks.at(static_cast<std::size_t>(task_id)).name;
        for (const ScoredUtterance& item : list.items) {
            nlohmann::json slots = nlohmann::json::array();
            for (const SlotValue& p : item.utt.da.pairs)
                slots.push_back({{"slot", p.slot}, {"value", p.value}});
            std::string delex;
            for (std::size_t i = 0; i + 1 < item.utt.tokens.size(); ++i) {
                if (i) delex += ' ';
                delex += item.utt.tokens[i];
            }
            out << nlohmann::json{{"task", task_name},
                                  {"task_id", task_id},
                                  {"split", "train"},
                                  {"intent", item.utt.da.intent},
                                  {"slots", std::move(slots)},
                                  {"text", item.utt.raw_text},
                                  {"delex_text", std::move(delex)},
                                  {"u_score", item.u_score}}
                << '\n';
        }
    }
}

ExemplarStore load_exemplar_store(const std::string& path, std::size_t budget) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open exemplar store: " + path);
    ExemplarStore store;
    store.budget = budget;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("line " + std::to_string(line_no) + ": invalid JSON: " + e.what());
        }
        Utterance utt;
        utt.da.intent = rec.at("intent").get<std::string>();
        for (const auto& sv : rec.at("slots"))
            utt.da.pairs.push_back(
                {sv.at("slot").get<std::string>(), sv.at("value").get<std::string>()});
        utt.raw_text = rec.at("text").get<std::string>();
        std::istringstream toks(rec.at("delex_text").get<std::string>());
        std::string tok;
        while (toks >> tok) utt.tokens.push_back(tok);
        utt.tokens.push_back(kEndToken);
        store.per_task[rec.at("task_id").get<int>()].items.push_back(
            {std::move(utt), rec.at("u_score").get<double>()});
    }
    return store;
}

void save_anchor(const EwcAnchor& anchor, const std::string& path) {
    nlohmann::json j{{"format", "arper-anchor-v1"},
                     {"theta_prev", anchor.theta_prev},
                     {"fisher", anchor.fisher.f}};
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write anchor: " + path);
    out << j.dump() << '\n';
}

EwcAnchor load_anchor(const std::string& path) {
    const nlohmann::json j = parse_file(path);
    if (j.value("format", "") != "arper-anchor-v1")
        throw ParseError(path + ": not an arper anchor");
    EwcAnchor anchor;
    anchor.theta_prev = j.at("theta_prev").get<std::vector<double>>();
    anchor.fisher.f = j.at("fisher").get<std::vector<double>>();
    if (anchor.theta_prev.size() != anchor.fisher.f.size())
        throw ShapeError(path + ": theta/fisher length mismatch");
    return anchor;
}

}  // namespace arper
