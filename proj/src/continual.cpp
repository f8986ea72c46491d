#include "arper/continual.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "arper/errors.hpp"
#include "arper/rng.hpp"

namespace arper {

std::string MethodSpec::name() const {
    std::string base;
    switch (variant) {
        case Variant::Finetune: base = "finetune"; break;
        case Variant::Full: base = "full"; break;
        case Variant::ExemplarReplay:
            base = selection == Selection::Random     ? "er_random"
                   : selection == Selection::Herding  ? "er_herding"
                                                      : "er_prio";
            break;
        case Variant::ReplayL2: base = "er_prio_l2"; break;
        case Variant::ReplayKd: base = "er_prio_kd"; break;
        case Variant::ReplayDropout: base = "er_prio_dropout"; break;
        case Variant::Arper: base = "arper"; break;
    }
    return pseudo_exemplars ? "pseudo_" + base : base;
}

MethodSpec MethodSpec::parse(const std::string& name) {
    MethodSpec spec;
    std::string base = name;
    if (base.rfind("pseudo_", 0) == 0) {
        spec.pseudo_exemplars = true;
        base = base.substr(7);
    }
    if (base == "finetune") spec.variant = Variant::Finetune;
    else if (base == "full") spec.variant = Variant::Full;
    else if (base == "er_prio") spec.variant = Variant::ExemplarReplay;
    else if (base == "er_random") { spec.variant = Variant::ExemplarReplay; spec.selection = Selection::Random; }
    else if (base == "er_herding") { spec.variant = Variant::ExemplarReplay; spec.selection = Selection::Herding; }
    else if (base == "er_prio_l2") spec.variant = Variant::ReplayL2;
    else if (base == "er_prio_kd") spec.variant = Variant::ReplayKd;
    else if (base == "er_prio_dropout") spec.variant = Variant::ReplayDropout;
    else if (base == "arper") spec.variant = Variant::Arper;
    else throw ConfigError("unknown method '" + name + "'");
    if (spec.pseudo_exemplars && !spec.uses_exemplars())
        throw ConfigError("method '" + name + "' cannot use pseudo exemplars");
    return spec;
}

namespace {

void append_encoded(std::vector<EncodedExample>& pool, const std::vector<Utterance>& utts,
                    const TaskStream& stream) {
    for (const Utterance& u : utts) pool.push_back(encode_example(u, stream));
}

// Front of every stored list feeds training; the tail tenth is held out for
// validation so replayed items never sit on both sides.
void store_slices(const ExemplarStore& store, const TaskStream& stream,
                  std::vector<EncodedExample>* train, std::vector<EncodedExample>* valid) {
    for (const auto& [id, list] : store.per_task) {
        const std::size_t n_valid = list.size() / 10;
        const std::size_t n_train = list.size() - n_valid;
        for (std::size_t i = 0; i < list.size(); ++i) {
            auto* dst = i < n_train ? train : valid;
            if (dst) dst->push_back(encode_example(list.items[i].utt, stream));
        }
    }
}

std::set<int> union_train_vocab(const TaskStream& stream, int upto_exclusive) {
    std::set<int> ids;
    for (int t = 0; t < upto_exclusive; ++t)
        ids.insert(stream.train_vocab[static_cast<std::size_t>(t)].begin(),
                   stream.train_vocab[static_cast<std::size_t>(t)].end());
    return ids;
}

}  // namespace

Objective objective_for(const MethodSpec& method, const ObjectiveContext& ctx) {
    if (!ctx.stream || !ctx.config) throw ConfigError("objective_for: missing stream/config");
    const TaskStream& stream = *ctx.stream;
    const int t = ctx.task_index;
    if (t < 0 || static_cast<std::size_t>(t) >= stream.tasks.size())
        throw ConfigError("objective_for: task index out of range");

    Objective obj;
    if (method.variant == Variant::Full) {
        for (int i = 0; i <= t; ++i)
            append_encoded(obj.pool, stream.tasks[static_cast<std::size_t>(i)].train, stream);
    } else {
        append_encoded(obj.pool, stream.tasks[static_cast<std::size_t>(t)].train, stream);
        if (method.uses_exemplars()) {
            if (!ctx.store) throw ConfigError("objective_for: replay method without a store");
            store_slices(*ctx.store, stream, &obj.pool, nullptr);
        }
    }

    // All methods train identically on the first task to share a common
    // starting point; regularizers and dropout engage from the second task.
    if (t == 0) return obj;

    switch (method.variant) {
        case Variant::ReplayL2:
            if (!ctx.model_prev) throw ConfigError("objective_for: L2 needs the previous model");
            obj.has_anchor = true;
            obj.anchor.theta_prev = ctx.model_prev->theta;
            obj.anchor.fisher.f.assign(ctx.model_prev->theta.size(), 1.0);
            obj.lambda = ctx.config->l2_weight;
            break;
        case Variant::Arper:
            if (ctx.anchor) {
                obj.has_anchor = true;
                obj.anchor = *ctx.anchor;
                obj.lambda = ctx.lambda;
            }
            break;
        case Variant::ReplayKd: {
            if (!ctx.model_prev) throw ConfigError("objective_for: KD needs the previous model");
            obj.kd_teacher = ctx.model_prev;
            obj.kd_eta = ctx.config->eta;
            const std::set<int> old_only = old_only_vocab(
                union_train_vocab(stream, t), stream.train_vocab[static_cast<std::size_t>(t)]);
            obj.kd_vocab.assign(old_only.begin(), old_only.end());
            break;
        }
        case Variant::ReplayDropout:
            obj.dropout_rate = ctx.config->dropout_rate;
            break;
        default:
            break;
    }
    return obj;
}

FitResult fit(const ModelParams& init, const Objective& objective,
              std::span<const EncodedExample> valid, const TrainConfig& config,
              const EpochHook& hook) {
    if (config.learning_rate <= 0.0 || config.batch_size < 1 || config.max_epochs < 1 ||
        config.patience < 1)
        throw ConfigError("fit: learning_rate, batch_size, max_epochs and patience must be positive");
    if (objective.pool.empty()) throw ValidationError("fit: empty training pool");

    ModelParams model = init;
    model.config.dropout_rate = objective.dropout_rate;
    const std::size_t n_params = model.layout.total;

    constexpr double kBeta1 = 0.9;
    constexpr double kBeta2 = 0.999;
    constexpr double kEps = 1e-8;
    std::vector<double> adam_m(n_params, 0.0), adam_v(n_params, 0.0);
    long adam_t = 0;

    std::vector<double> grad(n_params);
    const bool kd_active = objective.kd_teacher != nullptr && objective.kd_eta != 0.0 &&
                           !objective.kd_vocab.empty();

    const std::span<const EncodedExample> valid_pool =
        valid.empty() ? std::span<const EncodedExample>(objective.pool) : valid;

    auto mean_valid_loss = [&]() {
        double sum = 0.0;
        for (const EncodedExample& ex : valid_pool) sum += loss_ce(model, ex);
        return sum / static_cast<double>(valid_pool.size());
    };

    FitResult result;
    result.theta = model.theta;
    double best = std::numeric_limits<double>::infinity();
    int epochs_without_improvement = 0;

    std::vector<std::size_t> order(objective.pool.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        Rng shuffle_rng(Rng::mix(config.seed, 0xe60cull + static_cast<std::uint64_t>(epoch)));
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        shuffle_rng.shuffle(order);

        const std::size_t n = order.size();
        const auto batch_size = static_cast<std::size_t>(config.batch_size);
        for (std::size_t start = 0, batch_index = 0; start < n;
             start += batch_size, ++batch_index) {
            const std::size_t end = std::min(n, start + batch_size);
            const double inv_b = 1.0 / static_cast<double>(end - start);
            std::fill(grad.begin(), grad.end(), 0.0);
            double batch_loss = 0.0;

            for (std::size_t pos = start; pos < end; ++pos) {
                const EncodedExample& ex = objective.pool[order[pos]];
                ForwardOptions opts;
                opts.training = true;
                opts.dropout_seed = Rng::mix(
                    Rng::mix(config.seed, 0xd401ull + static_cast<std::uint64_t>(epoch)), pos);
                const Trace trace = forward_pass(model, ex.targets, ex.da_vec, opts);

                const std::size_t K = trace.steps.size();
                std::vector<std::vector<double>> dlogits(K);
                for (std::size_t k = 0; k < K; ++k) {
                    dlogits[k] = trace.steps[k].probs;
                    for (double& x : dlogits[k]) x /= static_cast<double>(K);
                    dlogits[k][static_cast<std::size_t>(trace.steps[k].target)] -=
                        1.0 / static_cast<double>(K);
                }
                double example_loss = trace.loss_ce;

                if (kd_active) {
                    const Trace teacher =
                        forward_pass(*objective.kd_teacher, ex.targets, ex.da_vec);
                    double kd = 0.0;
                    for (std::size_t k = 0; k < K; ++k)
                        kd += kd_step(trace.steps[k].logits, teacher.steps[k].logits,
                                      objective.kd_vocab, dlogits[k], objective.kd_eta);
                    example_loss += objective.kd_eta * kd;
                }

                backward_pass(model, trace, dlogits, grad, inv_b);
                batch_loss += example_loss * inv_b;
            }

            if (objective.has_anchor && objective.lambda != 0.0) {
                const PenaltyResult pen =
                    ewc_penalty(model.theta, objective.anchor, objective.lambda);
                batch_loss += pen.value;
                for (std::size_t i = 0; i < n_params; ++i) grad[i] += pen.grad[i];
            }

            if (!std::isfinite(batch_loss))
                throw DivergenceError("non-finite training loss at epoch " +
                                      std::to_string(epoch) + ", batch " +
                                      std::to_string(batch_index));

            ++adam_t;
            const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(adam_t));
            const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(adam_t));
            for (std::size_t i = 0; i < n_params; ++i) {
                adam_m[i] = kBeta1 * adam_m[i] + (1.0 - kBeta1) * grad[i];
                adam_v[i] = kBeta2 * adam_v[i] + (1.0 - kBeta2) * grad[i] * grad[i];
                model.theta[i] -= config.learning_rate * (adam_m[i] / bc1) /
                                  (std::sqrt(adam_v[i] / bc2) + kEps);
            }
        }

        const double valid_loss = mean_valid_loss();
        result.epochs_run = epoch;
        if (hook) hook(epoch, model);

        if (valid_loss < best) {
            best = valid_loss;
            result.theta = model.theta;
            result.best_epoch = epoch;
            epochs_without_improvement = 0;
        } else {
            ++epochs_without_improvement;
            if (epochs_without_improvement >= config.patience) break;
        }
    }
    result.best_valid_loss = best;
    return result;
}

namespace {

struct PreparedTask {
    Objective objective;
    std::vector<EncodedExample> valid;
    double effective_lambda = 0.0;
};

PreparedTask prepare_task(const TaskStream& stream, int task_index, const ExemplarStore& store,
                          const ModelParams& model_prev, const MethodSpec& method,
                          const TrainConfig& config) {
    PreparedTask prep;
    EwcAnchor anchor;
    const EwcAnchor* anchor_ptr = nullptr;
    double lambda = 0.0;

    if (method.variant == Variant::Arper && task_index > 0 && store.total() > 0 &&
        config.lambda_base > 0.0) {
        std::vector<EncodedExample> stored;
        for (const auto& [id, list] : store.per_task)
            for (const ScoredUtterance& item : list.items)
                stored.push_back(encode_example(item.utt, stream));
        anchor.theta_prev = model_prev.theta;
        anchor.fisher = fisher_diagonal(model_prev, stored);
        const VocabCounts vc = vocab_counts(stream, task_index + 1);
        lambda = adaptive_lambda(config.lambda_base, vc.v_old, vc.v_new);
        anchor_ptr = &anchor;
    }

    ObjectiveContext ctx;
    ctx.stream = &stream;
    ctx.task_index = task_index;
    ctx.store = &store;
    ctx.model_prev = &model_prev;
    ctx.anchor = anchor_ptr;
    ctx.lambda = lambda;
    ctx.config = &config;
    prep.objective = objective_for(method, ctx);
    prep.effective_lambda = prep.objective.has_anchor && method.variant == Variant::Arper
                                ? lambda
                                : 0.0;

    append_encoded(prep.valid, stream.tasks[static_cast<std::size_t>(task_index)].valid, stream);
    if (method.uses_exemplars()) store_slices(store, stream, nullptr, &prep.valid);
    return prep;
}

}  // namespace

TaskOutcome learn_task(const TaskStream& stream, int task_index, ExemplarStore& store,
                       const ModelParams& model_prev, const MethodSpec& method,
                       const RunSettings& settings) {
    const auto t_start = std::chrono::steady_clock::now();
    const TrainConfig& config = settings.train;

    PreparedTask prep = prepare_task(stream, task_index, store, model_prev, method, config);

    TaskOutcome outcome;
    outcome.model = model_prev;
    outcome.effective_lambda = prep.effective_lambda;

    const FitResult fitted = fit(outcome.model, prep.objective, prep.valid, config);
    outcome.model.theta = fitted.theta;
    outcome.epochs_run = fitted.epochs_run;

    if (method.uses_exemplars() && config.exemplar_budget > 0) {
        store.budget = config.exemplar_budget;
        std::vector<std::size_t> sizes;
        for (int i = 0; i <= task_index; ++i)
            sizes.push_back(stream.tasks[static_cast<std::size_t>(i)].train.size());
        const std::vector<std::size_t> shares = allocate_budget(store.budget, sizes);

        const ModelParams& model = outcome.model;
        auto loss_fn = [&](const Utterance& utt) {
            return loss_ce(model, encode_example(utt, stream));
        };
        const Task& task = stream.tasks[static_cast<std::size_t>(task_index)];
        std::vector<ScoredUtterance> scored =
            score_utterances(task.train, loss_fn, config.beta);

        const std::size_t share = shares[static_cast<std::size_t>(task_index)];
        PriorityList selected;
        switch (method.selection) {
            case Selection::Prioritized:
                selected = select_exemplars_prioritized(std::move(scored), share);
                break;
            case Selection::Random:
                selected = select_exemplars_random(
                    std::move(scored), share,
                    Rng::mix(config.seed, 0x5e1ec7ull + static_cast<std::uint64_t>(task_index)));
                break;
            case Selection::Herding: {
                std::vector<std::vector<double>> features;
                features.reserve(scored.size());
                for (const ScoredUtterance& s : scored)
                    features.push_back(da_feature_vector(s.utt.da, stream.inventory));
                selected = select_exemplars_herding(std::move(scored), features, share);
                break;
            }
        }
        store.per_task[task_index] = std::move(selected);
        reduce_exemplars(store, sizes);

        if (method.pseudo_exemplars) {
            auto generate_fn = [&](const DialogAct& da) {
                return decode_tokens(
                    generate(model, da_feature_vector(da, stream.inventory),
                             settings.max_gen_len),
                    stream.vocab);
            };
            auto score_fn = [&](const Utterance& utt) {
                return priority_score(loss_ce(model, encode_example(utt, stream)),
                                      utt.da.slot_count(), config.beta);
            };
            for (auto& [id, list] : store.per_task)
                list = make_pseudo_exemplars(list, generate_fn, score_fn);
        }
    }

    outcome.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return outcome;
}

ExperimentResult run_stream(const TaskStream& stream, const MethodSpec& method,
                            const RunSettings& settings) {
    if (stream.tasks.empty()) throw ValidationError("run_stream: stream has no tasks");

    ModelConfig model_config;
    model_config.hidden_size = settings.hidden_size;
    model_config.embed_size = settings.embed_size;
    model_config.vocab_size = static_cast<int>(stream.vocab.size());
    model_config.da_dim = static_cast<int>(stream.inventory.dim());
    ModelParams model = init_model(model_config, settings.train.seed);

    ExemplarStore store;
    store.budget = settings.train.exemplar_budget;

    ExperimentResult result;
    for (int t = 0; t < static_cast<int>(stream.tasks.size()); ++t) {
        TaskOutcome outcome = learn_task(stream, t, store, model, method, settings);
        model = std::move(outcome.model);
        result.task_seconds.push_back(outcome.seconds);
        result.lambdas.push_back(outcome.effective_lambda);
        result.epochs.push_back(outcome.epochs_run);

        std::vector<int> seen(static_cast<std::size_t>(t) + 1);
        for (int i = 0; i <= t; ++i) seen[static_cast<std::size_t>(i)] = i;
        const EvalResult all =
            evaluate_model(model, stream, seen, settings.max_gen_len, settings.macro_eval);
        const int first[] = {0};
        const EvalResult first_task =
            evaluate_model(model, stream, first, settings.max_gen_len, settings.macro_eval);
        result.records.push_back({t + 1, all.ser, all.bleu, first_task.ser, first_task.bleu});
        result.store_snapshots.push_back(store);
        result.checkpoints.push_back(model);
    }

    std::vector<double> ser_all, bleu_all, ser_first, bleu_first;
    for (const EvalRecord& r : result.records) {
        ser_all.push_back(r.ser_all);
        bleu_all.push_back(r.bleu_all);
        ser_first.push_back(r.ser_first);
        bleu_first.push_back(r.bleu_first);
    }
    result.omega_ser_all = omega(ser_all);
    result.omega_bleu_all = omega(bleu_all);
    result.omega_ser_first = omega(ser_first);
    result.omega_bleu_first = omega(bleu_first);
    return result;
}

std::vector<DiagnosisPoint> diagnose_forgetting(const TaskStream& stream, int pretrain_task,
                                                int transfer_task, const MethodSpec& method,
                                                const RunSettings& settings, int eval_every) {
    if (eval_every < 1) throw ConfigError("diagnose_forgetting: eval_every must be >= 1");
    if (pretrain_task == transfer_task)
        throw ConfigError("diagnose_forgetting: tasks must differ");

    // Two-task substream [A, B]; vocabulary bookkeeping is rebuilt so the
    // transfer task sees A as the only previous task.
    const TaskStream sub = finalize_stream(
        {stream.tasks.at(static_cast<std::size_t>(pretrain_task)),
         stream.tasks.at(static_cast<std::size_t>(transfer_task))});

    ModelConfig model_config;
    model_config.hidden_size = settings.hidden_size;
    model_config.embed_size = settings.embed_size;
    model_config.vocab_size = static_cast<int>(sub.vocab.size());
    model_config.da_dim = static_cast<int>(sub.inventory.dim());
    ModelParams model = init_model(model_config, settings.train.seed);

    ExemplarStore store;
    store.budget = settings.train.exemplar_budget;
    TaskOutcome pretrained = learn_task(sub, 0, store, model, method, settings);

    const int first[] = {0};
    std::vector<DiagnosisPoint> curve;
    auto eval_point = [&](int epoch, const ModelParams& m) {
        const EvalResult r = evaluate_model(m, sub, first, settings.max_gen_len);
        curve.push_back({epoch, r.ser, r.bleu});
    };
    eval_point(0, pretrained.model);

    PreparedTask prep =
        prepare_task(sub, 1, store, pretrained.model, method, settings.train);
    ModelParams last = pretrained.model;
    int last_recorded = 0;
    const EpochHook hook = [&](int epoch, const ModelParams& current) {
        last = current;
        if (epoch % eval_every == 0) {
            eval_point(epoch, current);
            last_recorded = epoch;
        }
    };
    const FitResult fitted = fit(pretrained.model, prep.objective, prep.valid,
                                 settings.train, hook);
    if (fitted.epochs_run != last_recorded) eval_point(fitted.epochs_run, last);
    return curve;
}

DeltaMatrix weight_delta(const ModelParams& a, const ModelParams& b,
                         const std::string& segment) {
    if (!(a.config == b.config) || a.theta.size() != b.theta.size())
        throw ShapeError("weight_delta: checkpoints have different layouts");
    const ParamSegment& seg = a.layout.segment(segment);
    DeltaMatrix delta;
    delta.segment = seg.name;
    delta.rows = seg.rows;
    delta.cols = seg.cols;
    delta.values.resize(seg.size());
    for (std::size_t i = 0; i < seg.size(); ++i)
        delta.values[i] = std::abs(a.theta[seg.offset + i] - b.theta[seg.offset + i]);
    return delta;
}

}  // namespace arper
