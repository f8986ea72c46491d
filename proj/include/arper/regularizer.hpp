#ifndef ARPER_REGULARIZER_HPP
#define ARPER_REGULARIZER_HPP

#include <set>
#include <span>
#include <vector>

#include "arper/model.hpp"

namespace arper {

struct FisherDiagonal {
    std::vector<double> f;  // non-negative, length N
};

// Frozen parameters of the model trained till the previous task plus the
// Fisher diagonal estimated on the stored exemplars.
struct EwcAnchor {
    std::vector<double> theta_prev;
    FisherDiagonal fisher;
};

// Empirical Fisher diagonal: mean over exemplars of the squared
// cross-entropy gradient, evaluated at model_prev in evaluation mode.
FisherDiagonal fisher_diagonal(const ModelParams& model_prev,
                               std::span<const EncodedExample> exemplars);

struct PenaltyResult {
    double value = 0.0;
    std::vector<double> grad;
};

// lambda * sum_i F_i (theta_i - theta_prev_i)^2, gradient 2 lambda F delta.
PenaltyResult ewc_penalty(std::span<const double> theta, const EwcAnchor& anchor,
                          double lambda);

// EWC with unit Fisher.
PenaltyResult l2_penalty(std::span<const double> theta, std::span<const double> theta_prev,
                         double weight);

// lambda_base * sqrt(V_old / max(V_new, 1)).
double adaptive_lambda(double lambda_base, std::size_t v_old, std::size_t v_new);

// Tokens that appear in previous tasks but not in the current one.
std::set<int> old_only_vocab(const std::set<int>& prev_vocab, const std::set<int>& cur_vocab);

// Distillation loss over the old-only vocabulary L: at each position both
// models' logits are restricted to L and renormalized; returns
// -sum_k sum_{i in L} p_prev log p_cur. Empty L gives 0.
double kd_loss(const ModelParams& model_cur, const ModelParams& model_prev,
               const EncodedExample& ex, const std::set<int>& old_only);

// Shared with the trainer: per-step KD contribution computed from logits.
// Adds eta * dKD/dlogits into dlogits_accum and returns the step's loss term.
double kd_step(std::span<const double> cur_logits, std::span<const double> prev_logits,
               std::span<const int> old_only_ids, std::vector<double>& dlogits_accum,
               double eta);

}  // namespace arper

#endif
