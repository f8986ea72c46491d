#include "arper/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "arper/errors.hpp"

namespace arper {

SerCounts ser_counts(std::span<const std::string> generated, const DialogAct& da) {
    std::map<std::string, long> balance;  // required count minus produced count
    SerCounts counts;
    for (const SlotValue& p : da.pairs) {
        balance[slot_placeholder(p.slot)] += 1;
        ++counts.required;
    }
    for (const std::string& tok : generated)
        if (is_slot_placeholder(tok)) balance[tok] -= 1;
    for (const auto& [token, diff] : balance) {
        if (diff > 0)
            counts.missing += static_cast<std::size_t>(diff);
        else
            counts.redundant += static_cast<std::size_t>(-diff);
    }
    return counts;
}

double ser(std::span<const std::string> generated, const DialogAct& da) {
    const SerCounts c = ser_counts(generated, da);
    if (c.required == 0)
        throw ValidationError("ser: dialog act has no slots");
    return static_cast<double>(c.missing + c.redundant) / static_cast<double>(c.required);
}

namespace {

using Ngram = std::vector<std::string>;

std::map<Ngram, std::size_t> ngram_counts(const std::vector<std::string>& tokens,
                                          std::size_t n) {
    std::map<Ngram, std::size_t> counts;
    if (tokens.size() < n) return counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i)
        counts[Ngram(tokens.begin() + static_cast<long>(i),
                     tokens.begin() + static_cast<long>(i + n))] += 1;
    return counts;
}

}  // namespace

double bleu4(const std::vector<std::vector<std::string>>& candidates,
             const std::vector<std::vector<std::vector<std::string>>>& reference_groups) {
    if (candidates.size() != reference_groups.size())
        throw ShapeError("bleu4: candidate/reference count mismatch");
    constexpr std::size_t kMaxOrder = 4;
    std::size_t clipped[kMaxOrder] = {0, 0, 0, 0};
    std::size_t totals[kMaxOrder] = {0, 0, 0, 0};
    std::size_t candidate_len = 0;
    std::size_t reference_len = 0;

    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const auto& cand = candidates[i];
        const auto& refs = reference_groups[i];
        if (refs.empty()) throw ValidationError("bleu4: empty reference group");

        candidate_len += cand.size();
        // Closest reference length; ties go to the shorter reference.
        std::size_t closest = refs[0].size();
        for (const auto& ref : refs) {
            const auto diff = [&](std::size_t len) {
                return len > cand.size() ? len - cand.size() : cand.size() - len;
            };
            if (diff(ref.size()) < diff(closest) ||
                (diff(ref.size()) == diff(closest) && ref.size() < closest))
                closest = ref.size();
        }
        reference_len += closest;

        for (std::size_t n = 1; n <= kMaxOrder; ++n) {
            const auto cand_counts = ngram_counts(cand, n);
            std::map<Ngram, std::size_t> max_ref;
            for (const auto& ref : refs)
                for (const auto& [gram, count] : ngram_counts(ref, n)) {
                    auto& slot = max_ref[gram];
                    slot = std::max(slot, count);
                }
            for (const auto& [gram, count] : cand_counts) {
                auto it = max_ref.find(gram);
                clipped[n - 1] += std::min(count, it == max_ref.end() ? 0 : it->second);
            }
            if (cand.size() >= n) totals[n - 1] += cand.size() - n + 1;
        }
    }

    double log_precision = 0.0;
    for (std::size_t n = 0; n < kMaxOrder; ++n) {
        if (clipped[n] == 0 || totals[n] == 0) return 0.0;
        log_precision +=
            std::log(static_cast<double>(clipped[n]) / static_cast<double>(totals[n]));
    }
    if (candidate_len == 0) return 0.0;
    const double bp = candidate_len > reference_len
                          ? 1.0
                          : std::exp(1.0 - static_cast<double>(reference_len) /
                                               static_cast<double>(candidate_len));
    return bp * std::exp(log_precision / static_cast<double>(kMaxOrder));
}

double omega(std::span<const double> values) {
    if (values.empty()) throw ValidationError("omega: empty value list");
    double sum = 0.0;
    for (double v : values) sum += v;
    return sum / static_cast<double>(values.size());
}

namespace {

// Reference-group key: utterances with the same intent and slot multiset are
// interchangeable references once delexicalized.
std::string da_group_key(const DialogAct& da) {
    std::vector<std::string> slots;
    for (const SlotValue& p : da.pairs) slots.push_back(p.slot);
    std::sort(slots.begin(), slots.end());
    std::string key = da.intent;
    for (const std::string& s : slots) {
        key += '\x1f';
        key += s;
    }
    return key;
}

EvalResult evaluate_pool(const ModelParams& model, const TaskStream& stream,
                         const std::vector<const Utterance*>& pool, int max_len) {
    if (pool.empty()) throw ValidationError("evaluate_model: empty test pool");

    std::map<std::string, std::vector<std::vector<std::string>>> groups;
    for (const Utterance* utt : pool) groups[da_group_key(utt->da)].push_back(utt->tokens);

    // Generation is a pure function of the DA key, so decode once per key.
    std::map<std::string, std::vector<std::string>> generated_by_key;
    SerCounts total;
    std::vector<std::vector<std::string>> candidates;
    std::vector<std::vector<std::vector<std::string>>> references;
    for (const Utterance* utt : pool) {
        const std::string key = da_group_key(utt->da);
        auto it = generated_by_key.find(key);
        if (it == generated_by_key.end()) {
            const std::vector<double> da_vec = da_feature_vector(utt->da, stream.inventory);
            it = generated_by_key
                     .emplace(key, decode_tokens(generate(model, da_vec, max_len), stream.vocab))
                     .first;
        }
        const std::vector<std::string>& gen = it->second;
        if (!utt->da.pairs.empty()) {
            const SerCounts c = ser_counts(gen, utt->da);
            total.missing += c.missing;
            total.redundant += c.redundant;
            total.required += c.required;
        }
        candidates.push_back(gen);
        references.push_back(groups.at(key));
    }

    EvalResult result;
    result.ser = total.required == 0
                     ? 0.0
                     : static_cast<double>(total.missing + total.redundant) /
                           static_cast<double>(total.required);
    result.bleu = bleu4(candidates, references);
    return result;
}

}  // namespace

EvalResult evaluate_model(const ModelParams& model, const TaskStream& stream,
                          std::span<const int> task_ids, int max_len, bool macro) {
    if (macro) {
        EvalResult mean;
        for (int id : task_ids) {
            std::vector<const Utterance*> pool;
            for (const Utterance& u : stream.tasks.at(static_cast<std::size_t>(id)).test)
                pool.push_back(&u);
            const EvalResult r = evaluate_pool(model, stream, pool, max_len);
            mean.ser += r.ser;
            mean.bleu += r.bleu;
        }
        if (task_ids.empty()) throw ValidationError("evaluate_model: no tasks given");
        mean.ser /= static_cast<double>(task_ids.size());
        mean.bleu /= static_cast<double>(task_ids.size());
        return mean;
    }
    std::vector<const Utterance*> pool;
    for (int id : task_ids)
        for (const Utterance& u : stream.tasks.at(static_cast<std::size_t>(id)).test)
            pool.push_back(&u);
    return evaluate_pool(model, stream, pool, max_len);
}

}  // namespace arper
