#include "arper/regularizer.hpp"

#include <algorithm>
#include <cmath>

#include "arper/errors.hpp"

namespace arper {

FisherDiagonal fisher_diagonal(const ModelParams& model_prev,
                               std::span<const EncodedExample> exemplars) {
    if (exemplars.empty())
        throw ValidationError("fisher_diagonal: exemplar set is empty (skip EWC at t=1)");
    FisherDiagonal fisher;
    fisher.f.assign(model_prev.layout.total, 0.0);
    std::vector<double> grad(model_prev.layout.total);
    for (const EncodedExample& ex : exemplars) {
        std::fill(grad.begin(), grad.end(), 0.0);
        loss_grad_ce(model_prev, ex, {}, grad);
        for (std::size_t i = 0; i < grad.size(); ++i) fisher.f[i] += grad[i] * grad[i];
    }
    for (double& x : fisher.f) x /= static_cast<double>(exemplars.size());
    return fisher;
}

PenaltyResult ewc_penalty(std::span<const double> theta, const EwcAnchor& anchor,
                          double lambda) {
    if (theta.size() != anchor.theta_prev.size() ||
        theta.size() != anchor.fisher.f.size())
        throw ShapeError("ewc_penalty: parameter/anchor length mismatch");
    PenaltyResult result;
    result.grad.assign(theta.size(), 0.0);
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double delta = theta[i] - anchor.theta_prev[i];
        result.value += anchor.fisher.f[i] * delta * delta;
        result.grad[i] = 2.0 * lambda * anchor.fisher.f[i] * delta;
    }
    result.value *= lambda;
    return result;
}

PenaltyResult l2_penalty(std::span<const double> theta, std::span<const double> theta_prev,
                         double weight) {
    if (theta.size() != theta_prev.size())
        throw ShapeError("l2_penalty: parameter length mismatch");
    EwcAnchor unit;
    unit.theta_prev.assign(theta_prev.begin(), theta_prev.end());
    unit.fisher.f.assign(theta.size(), 1.0);
    return ewc_penalty(theta, unit, weight);
}

double adaptive_lambda(double lambda_base, std::size_t v_old, std::size_t v_new) {
    const double denom = static_cast<double>(std::max<std::size_t>(v_new, 1));
    return lambda_base * std::sqrt(static_cast<double>(v_old) / denom);
}

std::set<int> old_only_vocab(const std::set<int>& prev_vocab, const std::set<int>& cur_vocab) {
    std::set<int> out;
    std::set_difference(prev_vocab.begin(), prev_vocab.end(), cur_vocab.begin(),
                        cur_vocab.end(), std::inserter(out, out.begin()));
    return out;
}

namespace {

// Softmax of `logits` restricted to the index set `ids`.
std::vector<double> restricted_softmax(std::span<const double> logits,
                                       std::span<const int> ids) {
    double mx = logits[static_cast<std::size_t>(ids[0])];
    for (int i : ids) mx = std::max(mx, logits[static_cast<std::size_t>(i)]);
    std::vector<double> p(ids.size());
    double sum = 0.0;
    for (std::size_t j = 0; j < ids.size(); ++j) {
        p[j] = std::exp(logits[static_cast<std::size_t>(ids[j])] - mx);
        sum += p[j];
    }
    for (double& x : p) x /= sum;
    return p;
}

}  // namespace

double kd_step(std::span<const double> cur_logits, std::span<const double> prev_logits,
               std::span<const int> old_only_ids, std::vector<double>& dlogits_accum,
               double eta) {
    if (old_only_ids.empty()) return 0.0;
    const std::vector<double> p_prev = restricted_softmax(prev_logits, old_only_ids);
    const std::vector<double> p_cur = restricted_softmax(cur_logits, old_only_ids);
    double loss = 0.0;
    for (std::size_t j = 0; j < old_only_ids.size(); ++j) {
        loss -= p_prev[j] * std::log(p_cur[j]);
        dlogits_accum[static_cast<std::size_t>(old_only_ids[j])] +=
            eta * (p_cur[j] - p_prev[j]);
    }
    return loss;
}

double kd_loss(const ModelParams& model_cur, const ModelParams& model_prev,
               const EncodedExample& ex, const std::set<int>& old_only) {
    if (old_only.empty()) return 0.0;
    const std::vector<int> ids(old_only.begin(), old_only.end());
    const Trace cur = forward_pass(model_cur, ex.targets, ex.da_vec);
    const Trace prev = forward_pass(model_prev, ex.targets, ex.da_vec);
    std::vector<double> scratch(static_cast<std::size_t>(model_cur.config.vocab_size), 0.0);
    double loss = 0.0;
    for (std::size_t k = 0; k < cur.steps.size(); ++k)
        loss += kd_step(cur.steps[k].logits, prev.steps[k].logits, ids, scratch, 0.0);
    return loss;
}

}  // namespace arper
