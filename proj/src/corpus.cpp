#include "arper/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "arper/errors.hpp"
#include "arper/rng.hpp"

namespace arper {

namespace {

std::string to_lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::vector<std::string> whitespace_tokens(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

}  // namespace

std::set<std::string> DialogAct::slot_set() const {
    std::set<std::string> s;
    for (const auto& p : pairs) s.insert(p.slot);
    return s;
}

std::string slot_placeholder(const std::string& slot) {
    return "[slot-" + to_lower(slot) + "]";
}

bool is_slot_placeholder(const std::string& token) {
    return token.size() > 7 && token.rfind("[slot-", 0) == 0 && token.back() == ']';
}

Vocab::Vocab() {
    add(kStartToken);
    add(kEndToken);
}

int Vocab::add(const std::string& token, int task_id) {
    auto it = index_.find(token);
    if (it != index_.end()) return it->second;
    const int id = static_cast<int>(tokens_.size());
    tokens_.push_back(token);
    first_task_.push_back(task_id);
    index_.emplace(token, id);
    return id;
}

int Vocab::id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? -1 : it->second;
}

const std::string& Vocab::token(int id) const {
    return tokens_.at(static_cast<std::size_t>(id));
}

void DaInventory::add(const DialogAct& da) {
    if (intent_index.find(da.intent) == intent_index.end()) {
        intent_index.emplace(da.intent, static_cast<int>(intents.size()));
        intents.push_back(da.intent);
    }
    for (const auto& p : da.pairs) {
        if (slot_index.find(p.slot) == slot_index.end()) {
            slot_index.emplace(p.slot, static_cast<int>(slots.size()));
            slots.push_back(p.slot);
        }
    }
}

TaskStream finalize_stream(std::vector<Task> tasks) {
    TaskStream stream;
    stream.tasks = std::move(tasks);
    for (std::size_t t = 0; t < stream.tasks.size(); ++t) {
        Task& task = stream.tasks[t];
        task.id = static_cast<int>(t);
        if (task.train.empty())
            throw ValidationError("task '" + task.name + "' has an empty train split");
        std::set<int> train_ids;
        for (const auto* split : {&task.train, &task.valid, &task.test}) {
            const bool is_train = split == &task.train;
            for (const Utterance& utt : *split) {
                stream.inventory.add(utt.da);
                for (const std::string& tok : utt.tokens) {
                    const int id = stream.vocab.add(tok, static_cast<int>(t));
                    if (is_train && tok != kStartToken && tok != kEndToken)
                        train_ids.insert(id);
                }
            }
        }
        stream.train_vocab.push_back(std::move(train_ids));
    }
    return stream;
}

TaskStream load_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open corpus file: " + path);

    std::vector<Task> tasks;
    std::unordered_map<std::string, std::size_t> task_index;

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
        for (const char* field : {"task", "split", "intent", "slots", "text", "delex_text"}) {
            if (!rec.contains(field))
                throw ParseError("line " + std::to_string(line_no) + ": missing field '" +
                                 field + "'");
        }

        Utterance utt;
        try {
            utt.da.intent = rec.at("intent").get<std::string>();
            for (const auto& sv : rec.at("slots"))
                utt.da.pairs.push_back({sv.at("slot").get<std::string>(),
                                        sv.at("value").get<std::string>()});
            utt.raw_text = rec.at("text").get<std::string>();
            utt.tokens = whitespace_tokens(rec.at("delex_text").get<std::string>());
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("line " + std::to_string(line_no) + ": bad field type: " + e.what());
        }
        utt.tokens.push_back(kEndToken);

        const std::string task_name = rec.at("task").get<std::string>();
        auto it = task_index.find(task_name);
        if (it == task_index.end()) {
            it = task_index.emplace(task_name, tasks.size()).first;
            tasks.push_back(Task{static_cast<int>(tasks.size()), task_name, {}, {}, {}});
        }
        Task& task = tasks[it->second];

        const std::string split = rec.at("split").get<std::string>();
        if (split == "train")
            task.train.push_back(std::move(utt));
        else if (split == "valid")
            task.valid.push_back(std::move(utt));
        else if (split == "test")
            task.test.push_back(std::move(utt));
        else
            throw ParseError("line " + std::to_string(line_no) + ": unknown split label '" +
                             split + "'");
    }
    if (tasks.empty()) throw ValidationError("no tasks: corpus file is empty");
    return finalize_stream(std::move(tasks));
}

namespace {

nlohmann::json utterance_record(const Task& task, const std::string& split,
                                const Utterance& utt) {
    nlohmann::json slots = nlohmann::json::array();
    for (const auto& p : utt.da.pairs) slots.push_back({{"slot", p.slot}, {"value", p.value}});
    std::string delex;
    for (std::size_t i = 0; i + 1 < utt.tokens.size(); ++i) {  // drop the end marker
        if (i) delex += ' ';
        delex += utt.tokens[i];
    }
    return nlohmann::json{{"task", task.name},     {"split", split},
                          {"intent", utt.da.intent}, {"slots", std::move(slots)},
                          {"text", utt.raw_text},  {"delex_text", std::move(delex)}};
}

}  // namespace

void save_corpus(const TaskStream& stream, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write corpus file: " + path);
    for (const Task& task : stream.tasks) {
        for (const Utterance& u : task.train) out << utterance_record(task, "train", u) << '\n';
        for (const Utterance& u : task.valid) out << utterance_record(task, "valid", u) << '\n';
        for (const Utterance& u : task.test) out << utterance_record(task, "test", u) << '\n';
    }
}

std::vector<std::string> delexicalize(const std::string& text, const DialogAct& da) {
    // Pieces are either raw text still subject to replacement or frozen
    // placeholder tokens; matching never looks inside a placeholder.
    struct Piece {
        std::string text;
        bool frozen;
    };
    std::vector<Piece> pieces{{text, false}};

    // Longest value first so a value embedded in a longer one cannot clobber
    // the longer match.
    std::vector<const SlotValue*> order;
    for (const auto& p : da.pairs)
        if (!p.value.empty()) order.push_back(&p);
    std::stable_sort(order.begin(), order.end(), [](const SlotValue* a, const SlotValue* b) {
        return a->value.size() > b->value.size();
    });

    for (const SlotValue* sv : order) {
        const std::string needle = to_lower(sv->value);
        const std::string placeholder = slot_placeholder(sv->slot);
        std::vector<Piece> next;
        for (Piece& piece : pieces) {
            if (piece.frozen) {
                next.push_back(std::move(piece));
                continue;
            }
            const std::string lowered = to_lower(piece.text);
            std::size_t pos = 0;
            for (;;) {
                const std::size_t hit = lowered.find(needle, pos);
                if (hit == std::string::npos) {
                    next.push_back({piece.text.substr(pos), false});
                    break;
                }
                next.push_back({piece.text.substr(pos, hit - pos), false});
                next.push_back({" " + placeholder + " ", true});
                pos = hit + needle.size();
            }
        }
        pieces = std::move(next);
    }

    std::string joined;
    for (const Piece& piece : pieces) joined += piece.frozen ? piece.text : to_lower(piece.text);
    std::vector<std::string> tokens = whitespace_tokens(joined);
    tokens.push_back(kEndToken);
    return tokens;
}

std::vector<double> da_feature_vector(const DialogAct& da, const DaInventory& inventory) {
    std::vector<double> v(inventory.dim(), 0.0);
    auto it = inventory.intent_index.find(da.intent);
    if (it == inventory.intent_index.end())
        throw ValidationError("unknown intent '" + da.intent + "'");
    v[static_cast<std::size_t>(it->second)] = 1.0;
    for (const std::string& slot : da.slot_set()) {
        auto st = inventory.slot_index.find(slot);
        if (st == inventory.slot_index.end())
            throw ValidationError("unknown slot '" + slot + "'");
        v[inventory.intents.size() + static_cast<std::size_t>(st->second)] = 1.0;
    }
    return v;
}

VocabCounts vocab_counts(const TaskStream& stream, int upto_task) {
    if (upto_task < 1 || static_cast<std::size_t>(upto_task) > stream.tasks.size())
        throw ValidationError("vocab_counts: task index " + std::to_string(upto_task) +
                              " out of range 1.." + std::to_string(stream.tasks.size()));
    std::set<int> old_ids;
    for (int t = 0; t + 1 < upto_task; ++t)
        old_ids.insert(stream.train_vocab[static_cast<std::size_t>(t)].begin(),
                       stream.train_vocab[static_cast<std::size_t>(t)].end());
    std::size_t fresh = 0;
    for (int id : stream.train_vocab[static_cast<std::size_t>(upto_task - 1)])
        if (!old_ids.count(id)) ++fresh;
    return {old_ids.size(), fresh};
}

TaskStream reorder_stream(const TaskStream& stream, const std::vector<int>& order) {
    if (order.size() != stream.tasks.size())
        throw ValidationError("order length does not match task count");
    std::vector<char> seen(order.size(), 0);
    for (int id : order) {
        if (id < 0 || static_cast<std::size_t>(id) >= order.size() || seen[static_cast<std::size_t>(id)])
            throw ValidationError("order is not a permutation of task ids");
        seen[static_cast<std::size_t>(id)] = 1;
    }
    std::vector<Task> tasks;
    tasks.reserve(order.size());
    for (int id : order) tasks.push_back(stream.tasks[static_cast<std::size_t>(id)]);
    return finalize_stream(std::move(tasks));
}

namespace {

struct TemplateElement {
    enum Kind { Word, ContentWord, Slot } kind;
    std::string word;  // fixed function word, or slot name for Kind::Slot
};

struct UtteranceTemplate {
    std::string intent;
    std::vector<TemplateElement> elements;
    std::vector<std::string> slots;  // slots realized by this template, in order
};

}  // namespace

TaskStream generate_synthetic_stream(const SyntheticSpec& spec) {
    if (spec.n_tasks < 1 || spec.utterances_per_task < 3 || spec.slots_per_task < 1 ||
        spec.template_count < 1)
        throw ValidationError("synthetic spec: counts out of range (need n_tasks>=1, "
                              "utterances_per_task>=3, slots_per_task>=1, template_count>=1)");
    if (spec.shared_slot_fraction < 0.0 || spec.shared_slot_fraction > 1.0)
        throw ValidationError("synthetic spec: shared_slot_fraction must be in [0,1]");

    Rng rng(Rng::mix(spec.seed, 0x5e7a11));

    const int n_shared =
        std::min(spec.slots_per_task - (spec.shared_slot_fraction < 1.0 ? 1 : 0),
                 static_cast<int>(spec.shared_slot_fraction * spec.slots_per_task + 0.5));
    const int n_own = spec.slots_per_task - n_shared;

    std::vector<std::string> shared_slots;
    for (int s = 0; s < n_shared; ++s) shared_slots.push_back("shared-attr" + std::to_string(s));

    const std::vector<std::string> function_words = {
        "the", "a",  "is", "there", "it", "has", "in", "and",
        "you", "can", "at", "with",  "for", "near"};
    const std::vector<std::string> intents = {"inform", "request", "recommend"};

    // Sized so that three tasks land near a ~200 token vocabulary.
    const int content_pool = 50;

    std::vector<Task> tasks;
    for (int t = 0; t < spec.n_tasks; ++t) {
        Task task;
        task.name = "task" + std::to_string(t);

        std::vector<std::string> slots = shared_slots;
        for (int s = 0; s < n_own; ++s)
            slots.push_back(task.name + "-attr" + std::to_string(s));

        std::vector<std::string> content;
        for (int w = 0; w < content_pool; ++w)
            content.push_back(task.name + "word" + std::to_string(w));

        std::vector<UtteranceTemplate> templates;
        for (int j = 0; j < spec.template_count; ++j) {
            UtteranceTemplate tpl;
            tpl.intent = intents[rng.next_below(intents.size())];
            const int n_slots =
                1 + static_cast<int>(rng.next_below(
                        static_cast<std::uint64_t>(std::min<int>(4, spec.slots_per_task))));
            std::vector<std::string> pick = slots;
            rng.shuffle(pick);
            pick.resize(static_cast<std::size_t>(n_slots));
            tpl.slots = pick;

            // Pattern: lead-in words, then each slot preceded by a connective
            // and followed by a content position.
            tpl.elements.push_back({TemplateElement::Word,
                                    function_words[rng.next_below(function_words.size())]});
            tpl.elements.push_back({TemplateElement::ContentWord, ""});
            for (const std::string& slot : pick) {
                tpl.elements.push_back({TemplateElement::Word,
                                        function_words[rng.next_below(function_words.size())]});
                tpl.elements.push_back({TemplateElement::Slot, slot});
            }
            tpl.elements.push_back({TemplateElement::Word,
                                    function_words[rng.next_below(function_words.size())]});
            tpl.elements.push_back({TemplateElement::ContentWord, ""});
            templates.push_back(std::move(tpl));
        }

        std::vector<Utterance> utterances;
        for (int u = 0; u < spec.utterances_per_task; ++u) {
            const UtteranceTemplate& tpl = templates[rng.next_below(templates.size())];
            Utterance utt;
            utt.da.intent = tpl.intent;
            int value_id = 0;
            std::string raw;
            for (const TemplateElement& el : tpl.elements) {
                std::string surface;
                switch (el.kind) {
                    case TemplateElement::Word:
                        surface = el.word;
                        utt.tokens.push_back(el.word);
                        break;
                    case TemplateElement::ContentWord:
                        surface = content[rng.next_below(content.size())];
                        utt.tokens.push_back(surface);
                        break;
                    case TemplateElement::Slot: {
                        const std::string value =
                            "val" + std::to_string(value_id++) + "-" +
                            std::to_string(rng.next_below(1000));
                        utt.da.pairs.push_back({el.word, value});
                        surface = value;
                        utt.tokens.push_back(slot_placeholder(el.word));
                        break;
                    }
                }
                if (!raw.empty()) raw += ' ';
                raw += surface;
            }
            utt.tokens.push_back(kEndToken);
            utt.raw_text = std::move(raw);
            utterances.push_back(std::move(utt));
        }

        const std::size_t n = utterances.size();
        const std::size_t n_valid = std::max<std::size_t>(1, n / 10);
        const std::size_t n_test = std::max<std::size_t>(1, n / 10);
        const std::size_t n_train = n - n_valid - n_test;
        task.train.assign(utterances.begin(), utterances.begin() + static_cast<long>(n_train));
        task.valid.assign(utterances.begin() + static_cast<long>(n_train),
                          utterances.begin() + static_cast<long>(n_train + n_valid));
        task.test.assign(utterances.begin() + static_cast<long>(n_train + n_valid),
                         utterances.end());
        tasks.push_back(std::move(task));
    }
    return finalize_stream(std::move(tasks));
}

}  // namespace arper
