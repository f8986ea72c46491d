#ifndef ARPER_CORPUS_HPP
#define ARPER_CORPUS_HPP

#include <cstdint>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace arper {

inline constexpr const char* kStartToken = "<bos>";
inline constexpr const char* kEndToken = "<eos>";
// The two markers occupy fixed vocabulary ids.
inline constexpr int kStartId = 0;
inline constexpr int kEndId = 1;

struct SlotValue {
    std::string slot;   // slot name, domain-qualified by convention ("attraction-name")
    std::string value;  // surface value ("ADC Theatre")

    bool operator==(const SlotValue&) const = default;
};

// Structured meaning representation conditioning generation: an intent plus
// an ordered list of slot-value pairs. Slot names may repeat (multi-valued
// slots).
struct DialogAct {
    std::string intent;
    std::vector<SlotValue> pairs;

    // Distinct slot names, the set the priority score and Algorithm-1
    // diversity test operate on.
    std::set<std::string> slot_set() const;
    std::size_t slot_count() const { return slot_set().size(); }

    bool operator==(const DialogAct&) const = default;
};

// Placeholder token a slot value is replaced with, e.g. "attraction-name"
// -> "[slot-attraction-name]".
std::string slot_placeholder(const std::string& slot);
bool is_slot_placeholder(const std::string& token);

struct Utterance {
    std::vector<std::string> tokens;  // delexicalized, last token is kEndToken
    DialogAct da;
    std::string raw_text;  // original surface form, kept for reporting

    bool operator==(const Utterance&) const = default;
};

struct Task {
    int id = 0;
    std::string name;
    std::vector<Utterance> train;
    std::vector<Utterance> valid;
    std::vector<Utterance> test;

    bool operator==(const Task&) const = default;
};

// Global token inventory. Ids are dense and assigned in first-appearance
// order; <bos>/<eos> always occupy ids 0 and 1.
class Vocab {
public:
    Vocab();

    int add(const std::string& token, int task_id = -1);
    int id(const std::string& token) const;  // -1 when absent
    const std::string& token(int id) const;
    int first_task(int id) const { return first_task_[static_cast<std::size_t>(id)]; }
    std::size_t size() const { return tokens_.size(); }

    bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

private:
    std::vector<std::string> tokens_;
    std::vector<int> first_task_;
    std::unordered_map<std::string, int> index_;
};

// Ordered intent and slot inventories backing the binary DA feature map.
struct DaInventory {
    std::vector<std::string> intents;
    std::vector<std::string> slots;
    std::unordered_map<std::string, int> intent_index;
    std::unordered_map<std::string, int> slot_index;

    std::size_t dim() const { return intents.size() + slots.size(); }
    void add(const DialogAct& da);

    bool operator==(const DaInventory& other) const {
        return intents == other.intents && slots == other.slots;
    }
};

struct TaskStream {
    std::vector<Task> tasks;
    Vocab vocab;
    DaInventory inventory;
    // Distinct word ids per task train split; <bos>/<eos> excluded. This is
    // what the adaptive regularization weight counts.
    std::vector<std::set<int>> train_vocab;

    bool operator==(const TaskStream& other) const {
        return tasks == other.tasks && vocab == other.vocab && inventory == other.inventory;
    }
};

// Builds vocab/inventory/train_vocab from a task list; tasks are re-id'd
// 0..T-1 in order. Throws ValidationError when a train split is empty.
TaskStream finalize_stream(std::vector<Task> tasks);

// Reads a JSONL corpus; one record per line:
//   {"task":..,"split":"train|valid|test","intent":..,
//    "slots":[{"slot":..,"value":..}],"text":..,"delex_text":..}
// Tasks are ordered by first appearance.
TaskStream load_corpus(const std::string& path);
void save_corpus(const TaskStream& stream, const std::string& path);

// Replaces every exact, case-insensitive occurrence of a slot value with its
// placeholder token (longest value first), lowercases, whitespace-tokenizes
// and appends the end marker.
std::vector<std::string> delexicalize(const std::string& text, const DialogAct& da);

struct SyntheticSpec {
    int n_tasks = 3;
    int utterances_per_task = 100;
    int slots_per_task = 6;
    double shared_slot_fraction = 0.3;
    int template_count = 5;
    std::uint64_t seed = 0;
};

// Deterministic template-based task stream with per-task slot inventories
// that overlap by shared_slot_fraction. Splits are 80/10/10.
TaskStream generate_synthetic_stream(const SyntheticSpec& spec);

// Binary feature vector: one-hot intent block followed by a multi-hot block
// over distinct slots. Throws ValidationError for unknown intents/slots.
std::vector<double> da_feature_vector(const DialogAct& da, const DaInventory& inventory);

struct VocabCounts {
    std::size_t v_old = 0;  // distinct train tokens in tasks 1..t-1
    std::size_t v_new = 0;  // distinct train tokens first seen in task t
};

// t is 1-based; counts use train splits only.
VocabCounts vocab_counts(const TaskStream& stream, int upto_task);

// Rebuilds the stream with tasks permuted into `order` (a permutation of
// current task ids). Vocabulary and inventory are recomputed so that
// first-appearance bookkeeping matches the new order.
TaskStream reorder_stream(const TaskStream& stream, const std::vector<int>& order);

}  // namespace arper

#endif
