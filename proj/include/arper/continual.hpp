#ifndef ARPER_CONTINUAL_HPP
#define ARPER_CONTINUAL_HPP

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "arper/exemplar.hpp"
#include "arper/metrics.hpp"
#include "arper/model.hpp"
#include "arper/regularizer.hpp"

namespace arper {

enum class Selection { Prioritized, Random, Herding };

enum class Variant {
    Finetune,       // current task data only
    Full,           // all data seen so far
    ExemplarReplay, // current data plus stored exemplars
    ReplayL2,       // replay + static L2 anchor
    ReplayKd,       // replay + distillation on old-only vocabulary
    ReplayDropout,  // replay + non-recurrent dropout
    Arper           // replay + exemplar-anchored EWC with adaptive weight
};

struct MethodSpec {
    Variant variant = Variant::Finetune;
    Selection selection = Selection::Prioritized;
    bool pseudo_exemplars = false;

    bool uses_exemplars() const { return variant != Variant::Finetune && variant != Variant::Full; }
    std::string name() const;
    // Accepts: finetune, full, er_prio, er_random, er_herding, er_prio_l2,
    // er_prio_kd, er_prio_dropout, arper; an optional "pseudo_" prefix turns
    // on pseudo-exemplar replay. Throws ConfigError otherwise.
    static MethodSpec parse(const std::string& name);
};

struct TrainConfig {
    double learning_rate = 5e-3;
    int batch_size = 128;
    int max_epochs = 100;
    int patience = 10;
    double beta = 0.5;          // slot-count exponent in the priority score
    double lambda_base = 0.0;   // EWC base weight; tuned per corpus, no default
    double eta = 2.0;           // KD interpolation weight
    double l2_weight = 1e-3;
    double dropout_rate = 0.25;
    std::size_t exemplar_budget = 250;  // M
    std::uint64_t seed = 0;
};

struct RunSettings {
    TrainConfig train;
    int hidden_size = 128;
    int embed_size = 128;
    int max_gen_len = 40;
    bool macro_eval = false;  // per-task macro average instead of pooled micro
};

// Batch loss resolved for one (method, task) pair; owns everything it needs
// except the KD teacher, which must outlive the fit call.
struct Objective {
    std::vector<EncodedExample> pool;
    double dropout_rate = 0.0;
    bool has_anchor = false;
    EwcAnchor anchor;
    double lambda = 0.0;
    const ModelParams* kd_teacher = nullptr;
    double kd_eta = 0.0;
    std::vector<int> kd_vocab;
};

struct ObjectiveContext {
    const TaskStream* stream = nullptr;
    int task_index = 0;  // 0-based
    const ExemplarStore* store = nullptr;
    const ModelParams* model_prev = nullptr;
    const EwcAnchor* anchor = nullptr;  // ARPER beyond the first task
    double lambda = 0.0;
    const TrainConfig* config = nullptr;
};

// Resolves the method's training objective. On the first task every method
// reduces to plain cross-entropy so that all methods share an identical
// starting point. Throws ConfigError on inconsistent context.
Objective objective_for(const MethodSpec& method, const ObjectiveContext& ctx);

struct FitResult {
    std::vector<double> theta;  // parameters with the best validation loss
    int epochs_run = 0;
    int best_epoch = 0;
    double best_valid_loss = 0.0;
};

using EpochHook = std::function<void(int epoch, const ModelParams& current)>;

// Adam (beta1 0.9, beta2 0.999, eps 1e-8) over deterministic per-epoch
// shuffles; early-stops after `patience` epochs without strict validation
// improvement. An empty validation set falls back to the training pool.
// Throws DivergenceError when the loss goes non-finite.
FitResult fit(const ModelParams& init, const Objective& objective,
              std::span<const EncodedExample> valid, const TrainConfig& config,
              const EpochHook& hook = {});

struct TaskOutcome {
    ModelParams model;
    double seconds = 0.0;
    double effective_lambda = 0.0;  // EWC weight actually applied (ARPER)
    int epochs_run = 0;
};

// One continual step: initialize from the previous parameters, train with
// the method objective, then select this task's exemplars and shrink the
// stored ones to their budget shares.
TaskOutcome learn_task(const TaskStream& stream, int task_index, ExemplarStore& store,
                       const ModelParams& model_prev, const MethodSpec& method,
                       const RunSettings& settings);

struct ExperimentResult {
    std::vector<EvalRecord> records;  // one per task learned
    double omega_ser_all = 0.0;
    double omega_bleu_all = 0.0;
    double omega_ser_first = 0.0;
    double omega_bleu_first = 0.0;
    std::vector<double> task_seconds;
    std::vector<double> lambdas;
    std::vector<int> epochs;
    std::vector<ExemplarStore> store_snapshots;
    std::vector<ModelParams> checkpoints;
};

ExperimentResult run_stream(const TaskStream& stream, const MethodSpec& method,
                            const RunSettings& settings);

struct DiagnosisPoint {
    int epoch = 0;  // 0 is the pre-transfer evaluation
    double ser = 0.0;
    double bleu = 0.0;
};

// Trains on pretrain_task, then keeps training on transfer_task with the
// method objective while scoring the pretrain test split every `eval_every`
// epochs (plus the final epoch).
std::vector<DiagnosisPoint> diagnose_forgetting(const TaskStream& stream, int pretrain_task,
                                                int transfer_task, const MethodSpec& method,
                                                const RunSettings& settings, int eval_every);

struct DeltaMatrix {
    std::string segment;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;  // row-major |a - b|
};

// Elementwise |theta_a - theta_b| of one named layout segment. Throws
// ShapeError when the two models disagree on layout.
DeltaMatrix weight_delta(const ModelParams& a, const ModelParams& b,
                         const std::string& segment);

}  // namespace arper

#endif
