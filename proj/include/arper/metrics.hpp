#ifndef ARPER_METRICS_HPP
#define ARPER_METRICS_HPP

#include <span>
#include <string>
#include <vector>

#include "arper/model.hpp"

namespace arper {

struct SerCounts {
    std::size_t missing = 0;
    std::size_t redundant = 0;
    std::size_t required = 0;
};

// Multiset comparison of the placeholder tokens a DA requires against the
// ones the generated utterance produced. Placeholders never required by the
// DA count as redundant.
SerCounts ser_counts(std::span<const std::string> generated, const DialogAct& da);

// (missing + redundant) / required. The DA must require at least one slot;
// the ratio may exceed 1.
double ser(std::span<const std::string> generated, const DialogAct& da);

// Corpus-level BLEU-4: clipped modified precisions, uniform weights,
// brevity penalty from the closest reference length, no smoothing (any empty
// n-gram precision gives 0).
double bleu4(const std::vector<std::vector<std::string>>& candidates,
             const std::vector<std::vector<std::vector<std::string>>>& reference_groups);

// Mean over continual steps.
double omega(std::span<const double> values);

struct EvalResult {
    double ser = 0.0;
    double bleu = 0.0;
};

// Scores recorded after the i-th continual step: pooled tasks 1..i and the
// first task alone.
struct EvalRecord {
    int step = 0;  // 1-based
    double ser_all = 0.0;
    double bleu_all = 0.0;
    double ser_first = 0.0;
    double bleu_first = 0.0;
};

// Generates for every test DA of the listed tasks and scores the pool.
// SER is micro-averaged (summed counts); BLEU references group test
// utterances with an identical (intent, slot multiset) DA key. With
// macro=true, per-task results are averaged with equal task weight instead.
EvalResult evaluate_model(const ModelParams& model, const TaskStream& stream,
                          std::span<const int> task_ids, int max_len, bool macro = false);

}  // namespace arper

#endif
