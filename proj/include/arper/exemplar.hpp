#ifndef ARPER_EXEMPLAR_HPP
#define ARPER_EXEMPLAR_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include "arper/corpus.hpp"

namespace arper {

// Priority score: cross-entropy loss scaled by |S(d)|^beta; lower is more
// exemplar-worthy. 0^beta is 0 for beta > 0 and 1 for beta == 0.
double priority_score(double loss, std::size_t slot_count, double beta);

struct ScoredUtterance {
    Utterance utt;
    double u_score = 0.0;
};

// Exemplars of one task, in selection order. Reduction only ever keeps a
// prefix, which is what makes it constant-time.
struct PriorityList {
    std::vector<ScoredUtterance> items;

    std::size_t size() const { return items.size(); }
    void truncate(std::size_t n) {
        if (n < items.size()) items.resize(n);
    }
};

struct ExemplarStore {
    std::map<int, PriorityList> per_task;  // task id -> list
    std::size_t budget = 0;                // M

    std::size_t total() const {
        std::size_t n = 0;
        for (const auto& [id, list] : per_task) n += list.size();
        return n;
    }
};

std::vector<ScoredUtterance> score_utterances(
    std::span<const Utterance> pool,
    const std::function<double(const Utterance&)>& loss_fn, double beta);

// Prioritized selection: one ascending sort by score, then repeated passes;
// within a pass an utterance whose slot set was already taken this pass is
// skipped. Selected items leave the pool, so later passes pick up duplicate
// slot sets. Returns fewer than m items only when the pool is exhausted.
PriorityList select_exemplars_prioritized(std::vector<ScoredUtterance> pool, std::size_t m);

// Uniform sample without replacement; the result is ordered ascending by
// score so prefix reduction keeps the best-scoring picks.
PriorityList select_exemplars_random(std::vector<ScoredUtterance> pool, std::size_t m,
                                     std::uint64_t seed);

// iCaRL-style greedy herding over `features` (parallel to pool): step k picks
// the candidate whose inclusion brings the running feature mean closest to
// the pool mean. Ties break toward input order.
PriorityList select_exemplars_herding(std::vector<ScoredUtterance> pool,
                                      const std::vector<std::vector<double>>& features,
                                      std::size_t m);

// Largest-remainder apportionment of M proportional to task sizes, capped at
// each size; remainder ties go to the earlier task. Sums to min(M, sum).
std::vector<std::size_t> allocate_budget(std::size_t budget,
                                         std::span<const std::size_t> sizes);

// Truncates every stored list to its allocate_budget share. sizes[i] is the
// train size of task id i and must cover all stored tasks.
void reduce_exemplars(ExemplarStore& store, std::span<const std::size_t> sizes);

// Replaces each exemplar's text with generate_fn(da) while keeping the
// DialogActs, order and count; scores are recomputed with score_fn.
PriorityList make_pseudo_exemplars(
    const PriorityList& exemplars,
    const std::function<std::vector<std::string>(const DialogAct&)>& generate_fn,
    const std::function<double(const Utterance&)>& score_fn);

}  // namespace arper

#endif
