#ifndef ARPER_MODEL_HPP
#define ARPER_MODEL_HPP

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "arper/corpus.hpp"

namespace arper {

struct ModelConfig {
    int hidden_size = 128;
    int embed_size = 128;
    int vocab_size = 0;
    int da_dim = 0;
    // Applied to the input embedding and pre-softmax hidden output only
    // (non-recurrent connections), and only in training mode.
    double dropout_rate = 0.0;

    bool operator==(const ModelConfig&) const = default;
};

struct ParamSegment {
    std::string name;
    std::size_t offset = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;  // 1 for bias vectors
    std::size_t size() const { return rows * cols; }
};

// Flat parameter vector layout. Segment order is fixed; checkpoints are
// bit-exact against it.
struct ParamLayout {
    std::vector<ParamSegment> segments;
    std::size_t total = 0;

    static ParamLayout make(const ModelConfig& config);
    const ParamSegment& segment(const std::string& name) const;  // ShapeError if unknown
};

struct ModelParams {
    ModelConfig config;
    ParamLayout layout;
    std::vector<double> theta;
};

// Weights uniform in [-0.1, 0.1], biases zero, forget-gate bias 1.
ModelParams init_model(const ModelConfig& config, std::uint64_t seed);

struct ForwardOptions {
    bool training = false;
    // Seed for the dropout masks; loss and gradient calls that share options
    // see identical masks.
    std::uint64_t dropout_seed = 0;
};

// A training/eval unit resolved against a stream: target token ids (ending
// with <eos>) plus the binary DA conditioning vector.
struct EncodedExample {
    std::vector<int> targets;
    std::vector<double> da_vec;
    std::size_t slot_count = 0;
    const Utterance* source = nullptr;
};

// Throws ValidationError on out-of-vocabulary tokens.
EncodedExample encode_example(const Utterance& utt, const TaskStream& stream);

// Recurrent state threaded through decoding. `da` starts as the DA feature
// vector and is consumed multiplicatively by the reading gate.
struct CellState {
    std::vector<double> h;
    std::vector<double> c;
    std::vector<double> da;
};

CellState initial_state(const ModelParams& model, std::span<const double> da_vec);

// One cell update: gated recurrent step with the DA memory, producing output
// logits for the next token. Throws ShapeError on dimension mismatch.
void semantic_cell_step(const ModelParams& model, CellState& state, int input_token,
                        std::span<double> logits_out);

// Per-step cache kept by the forward pass; enough to run an exact backward
// pass and to inspect p_{y_k}.
struct StepTrace {
    int input = 0;
    int target = 0;
    std::vector<double> x;        // embedded input after dropout
    std::vector<double> gate_in;  // input gate
    std::vector<double> gate_forget;
    std::vector<double> gate_out;
    std::vector<double> cand;     // candidate cell update (tanh)
    std::vector<double> gate_read;  // DA reading gate
    std::vector<double> da;       // DA memory after this step
    std::vector<double> c;
    std::vector<double> tanh_c;
    std::vector<double> h;
    std::vector<double> h_dropped;
    std::vector<double> logits;
    std::vector<double> probs;
    double p_target = 0.0;
    std::vector<double> mask_x;  // scaled dropout masks; empty when unused
    std::vector<double> mask_h;
};

struct Trace {
    std::vector<StepTrace> steps;
    std::vector<double> da0;
    double loss_ce = 0.0;  // -(1/K) sum log p_{y_k}
};

Trace forward_pass(const ModelParams& model, std::span<const int> targets,
                   std::span<const double> da_vec, const ForwardOptions& opts = {});

// Exact reverse-mode gradient given dL/dlogits per step. Accumulates
// scale * grad into grad_accum (length N).
void backward_pass(const ModelParams& model, const Trace& trace,
                   const std::vector<std::vector<double>>& dlogits,
                   std::span<double> grad_accum, double scale = 1.0);

double loss_ce(const ModelParams& model, const EncodedExample& ex,
               const ForwardOptions& opts = {});
std::vector<double> grad_ce(const ModelParams& model, const EncodedExample& ex,
                            const ForwardOptions& opts = {});
// Single fused forward+backward; returns the loss and accumulates
// scale * grad into grad_accum.
double loss_grad_ce(const ModelParams& model, const EncodedExample& ex,
                    const ForwardOptions& opts, std::span<double> grad_accum,
                    double scale = 1.0);

// Greedy decoding; ties break toward the lowest token index. Stops after
// emitting <eos> or at max_len tokens. Pure function of (theta, da, max_len).
std::vector<int> generate(const ModelParams& model, std::span<const double> da_vec,
                          int max_len);

std::vector<std::string> decode_tokens(const std::vector<int>& ids, const Vocab& vocab);

}  // namespace arper

#endif
