#include "arper/model.hpp"

#include <algorithm>
#include <cmath>

#include "arper/errors.hpp"
#include "arper/rng.hpp"

namespace arper {

namespace {

void matvec_add(const double* w, std::size_t rows, std::size_t cols,
                const double* x, double* out) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = w + r * cols;
        double acc = 0.0;
        for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
        out[r] += acc;
    }
}

// out += W^T * dy
void matvec_t_add(const double* w, std::size_t rows, std::size_t cols,
                  const double* dy, double* out) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = w + r * cols;
        const double d = dy[r];
        for (std::size_t c = 0; c < cols; ++c) out[c] += row[c] * d;
    }
}

// dw += dy (x) x
void outer_add(double* dw, std::size_t rows, std::size_t cols, const double* dy,
               const double* x, double scale = 1.0) {
    for (std::size_t r = 0; r < rows; ++r) {
        double* row = dw + r * cols;
        const double d = dy[r] * scale;
        for (std::size_t c = 0; c < cols; ++c) row[c] += d * x[c];
    }
}

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// Resolved segment pointers into a flat theta (or gradient) vector.
template <typename Ptr>
struct Segments {
    Ptr embed;
    Ptr w_in, u_in, b_in;
    Ptr w_forget, u_forget, b_forget;
    Ptr w_out, u_out, b_out;
    Ptr w_cand, u_cand, b_cand;
    Ptr w_read, u_read, b_read;
    Ptr w_da;
    Ptr w_proj, b_proj;
};

template <typename Vec>
auto resolve(const ParamLayout& layout, Vec&& theta) {
    using Ptr = decltype(theta.data());
    Segments<Ptr> s;
    std::size_t i = 0;
    auto next = [&]() { return theta.data() + layout.segments[i++].offset; };
    s.embed = next();
    s.w_in = next(); s.u_in = next(); s.b_in = next();
    s.w_forget = next(); s.u_forget = next(); s.b_forget = next();
    s.w_out = next(); s.u_out = next(); s.b_out = next();
    s.w_cand = next(); s.u_cand = next(); s.b_cand = next();
    s.w_read = next(); s.u_read = next(); s.b_read = next();
    s.w_da = next();
    s.w_proj = next(); s.b_proj = next();
    return s;
}

}  // namespace

ParamLayout ParamLayout::make(const ModelConfig& config) {
    if (config.hidden_size < 1 || config.embed_size < 1 || config.vocab_size < 1 ||
        config.da_dim < 1)
        throw ValidationError("model config: all dimensions must be >= 1");
    const auto h = static_cast<std::size_t>(config.hidden_size);
    const auto e = static_cast<std::size_t>(config.embed_size);
    const auto v = static_cast<std::size_t>(config.vocab_size);
    const auto d = static_cast<std::size_t>(config.da_dim);

    ParamLayout layout;
    auto add = [&layout](const std::string& name, std::size_t rows, std::size_t cols) {
        layout.segments.push_back({name, layout.total, rows, cols});
        layout.total += rows * cols;
    };
    add("embed", v, e);
    for (const char* gate : {"in", "forget", "out", "cand"}) {
        add(std::string("w_") + gate, h, e);
        add(std::string("u_") + gate, h, h);
        add(std::string("b_") + gate, h, 1);
    }
    add("w_read", d, e);
    add("u_read", d, h);
    add("b_read", d, 1);
    add("w_da", h, d);
    add("w_proj", v, h);
    add("b_proj", v, 1);
    return layout;
}

const ParamSegment& ParamLayout::segment(const std::string& name) const {
    for (const ParamSegment& s : segments)
        if (s.name == name) return s;
    throw ShapeError("unknown parameter segment '" + name + "'");
}

ModelParams init_model(const ModelConfig& config, std::uint64_t seed) {
    ModelParams model;
    model.config = config;
    model.layout = ParamLayout::make(config);
    model.theta.assign(model.layout.total, 0.0);
    Rng rng(Rng::mix(seed, 0x1417));
    for (const ParamSegment& seg : model.layout.segments) {
        double* p = model.theta.data() + seg.offset;
        if (seg.name[0] == 'b') {
            const double fill = seg.name == "b_forget" ? 1.0 : 0.0;
            std::fill(p, p + seg.size(), fill);
        } else {
            for (std::size_t i = 0; i < seg.size(); ++i) p[i] = rng.uniform(-0.1, 0.1);
        }
    }
    return model;
}

EncodedExample encode_example(const Utterance& utt, const TaskStream& stream) {
    EncodedExample ex;
    ex.targets.reserve(utt.tokens.size());
    for (const std::string& tok : utt.tokens) {
        const int id = stream.vocab.id(tok);
        if (id < 0) throw ValidationError("out-of-vocabulary token '" + tok + "'");
        ex.targets.push_back(id);
    }
    ex.da_vec = da_feature_vector(utt.da, stream.inventory);
    ex.slot_count = utt.da.slot_count();
    ex.source = &utt;
    return ex;
}

CellState initial_state(const ModelParams& model, std::span<const double> da_vec) {
    if (static_cast<int>(da_vec.size()) != model.config.da_dim)
        throw ShapeError("DA vector length " + std::to_string(da_vec.size()) +
                         " does not match da_dim " + std::to_string(model.config.da_dim));
    CellState s;
    s.h.assign(static_cast<std::size_t>(model.config.hidden_size), 0.0);
    s.c.assign(static_cast<std::size_t>(model.config.hidden_size), 0.0);
    s.da.assign(da_vec.begin(), da_vec.end());
    return s;
}

namespace {

// Single cell update. x is the (already dropped-out) embedded input; all
// output spans must be pre-sized. d is updated in place from d_prev.
struct CellIo {
    const double* x;
    const double* h_prev;
    const double* c_prev;
    const double* d_prev;
    double* gate_in;
    double* gate_forget;
    double* gate_out;
    double* cand;
    double* gate_read;
    double* d;
    double* c;
    double* tanh_c;
    double* h;
};

template <typename Ptr>
void cell_forward(const Segments<Ptr>& w, const ModelConfig& cfg, const CellIo& io) {
    const auto h = static_cast<std::size_t>(cfg.hidden_size);
    const auto e = static_cast<std::size_t>(cfg.embed_size);
    const auto d = static_cast<std::size_t>(cfg.da_dim);

    std::copy(w.b_in, w.b_in + h, io.gate_in);
    matvec_add(w.w_in, h, e, io.x, io.gate_in);
    matvec_add(w.u_in, h, h, io.h_prev, io.gate_in);

    std::copy(w.b_forget, w.b_forget + h, io.gate_forget);
    matvec_add(w.w_forget, h, e, io.x, io.gate_forget);
    matvec_add(w.u_forget, h, h, io.h_prev, io.gate_forget);

    std::copy(w.b_out, w.b_out + h, io.gate_out);
    matvec_add(w.w_out, h, e, io.x, io.gate_out);
    matvec_add(w.u_out, h, h, io.h_prev, io.gate_out);

    std::copy(w.b_cand, w.b_cand + h, io.cand);
    matvec_add(w.w_cand, h, e, io.x, io.cand);
    matvec_add(w.u_cand, h, h, io.h_prev, io.cand);

    std::copy(w.b_read, w.b_read + d, io.gate_read);
    matvec_add(w.w_read, d, e, io.x, io.gate_read);
    matvec_add(w.u_read, d, h, io.h_prev, io.gate_read);

    for (std::size_t j = 0; j < h; ++j) {
        io.gate_in[j] = sigmoid(io.gate_in[j]);
        io.gate_forget[j] = sigmoid(io.gate_forget[j]);
        io.gate_out[j] = sigmoid(io.gate_out[j]);
        io.cand[j] = std::tanh(io.cand[j]);
    }
    for (std::size_t j = 0; j < d; ++j) {
        io.gate_read[j] = sigmoid(io.gate_read[j]);
        io.d[j] = io.gate_read[j] * io.d_prev[j];
    }
    for (std::size_t j = 0; j < h; ++j)
        io.c[j] = io.gate_forget[j] * io.c_prev[j] + io.gate_in[j] * io.cand[j];
    matvec_add(w.w_da, h, d, io.d, io.c);
    for (std::size_t j = 0; j < h; ++j) {
        io.tanh_c[j] = std::tanh(io.c[j]);
        io.h[j] = io.gate_out[j] * io.tanh_c[j];
    }
}

void softmax(std::span<const double> logits, std::span<double> probs) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        probs[i] = std::exp(logits[i] - mx);
        sum += probs[i];
    }
    for (std::size_t i = 0; i < logits.size(); ++i) probs[i] /= sum;
}

}  // namespace

void semantic_cell_step(const ModelParams& model, CellState& state, int input_token,
                        std::span<double> logits_out) {
    const ModelConfig& cfg = model.config;
    const auto h = static_cast<std::size_t>(cfg.hidden_size);
    const auto v = static_cast<std::size_t>(cfg.vocab_size);
    if (state.h.size() != h || state.c.size() != h ||
        static_cast<int>(state.da.size()) != cfg.da_dim)
        throw ShapeError("cell state dimensions do not match model config");
    if (logits_out.size() != v) throw ShapeError("logits span has wrong length");
    if (input_token < 0 || input_token >= cfg.vocab_size)
        throw ValidationError("input token id out of range");

    const auto w = resolve(model.layout, model.theta);
    const double* x = w.embed + static_cast<std::size_t>(input_token) *
                                    static_cast<std::size_t>(cfg.embed_size);

    std::vector<double> gi(h), gf(h), go(h), cand(h), gr(state.da.size());
    std::vector<double> d_new(state.da.size()), c_new(h), tc(h), h_new(h);
    CellIo io{x, state.h.data(), state.c.data(), state.da.data(),
              gi.data(), gf.data(), go.data(), cand.data(), gr.data(),
              d_new.data(), c_new.data(), tc.data(), h_new.data()};
    cell_forward(w, cfg, io);

    std::copy(w.b_proj, w.b_proj + v, logits_out.data());
    matvec_add(w.w_proj, v, h, h_new.data(), logits_out.data());

    state.h = std::move(h_new);
    state.c = std::move(c_new);
    state.da = std::move(d_new);
}

Trace forward_pass(const ModelParams& model, std::span<const int> targets,
                   std::span<const double> da_vec, const ForwardOptions& opts) {
    const ModelConfig& cfg = model.config;
    if (targets.empty()) throw ValidationError("empty target sequence");
    for (int t : targets)
        if (t < 0 || t >= cfg.vocab_size)
            throw ValidationError("target token id out of range");
    if (static_cast<int>(da_vec.size()) != cfg.da_dim)
        throw ShapeError("DA vector length does not match da_dim");

    const auto h = static_cast<std::size_t>(cfg.hidden_size);
    const auto e = static_cast<std::size_t>(cfg.embed_size);
    const auto v = static_cast<std::size_t>(cfg.vocab_size);
    const auto d = static_cast<std::size_t>(cfg.da_dim);
    const auto w = resolve(model.layout, model.theta);

    const bool use_dropout = opts.training && cfg.dropout_rate > 0.0;
    const double keep = 1.0 - cfg.dropout_rate;
    Rng drop_rng(Rng::mix(opts.dropout_seed, 0xd20));

    Trace trace;
    trace.da0.assign(da_vec.begin(), da_vec.end());
    trace.steps.resize(targets.size());

    const std::size_t K = targets.size();
    double loss = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        StepTrace& st = trace.steps[k];
        st.input = k == 0 ? kStartId : targets[k - 1];
        st.target = targets[k];

        const double* embed_row =
            w.embed + static_cast<std::size_t>(st.input) * e;
        st.x.assign(embed_row, embed_row + e);
        if (use_dropout) {
            st.mask_x.resize(e);
            for (std::size_t j = 0; j < e; ++j) {
                st.mask_x[j] = drop_rng.next_double() < keep ? 1.0 / keep : 0.0;
                st.x[j] *= st.mask_x[j];
            }
        }

        const double* h_prev = k == 0 ? nullptr : trace.steps[k - 1].h.data();
        const double* c_prev = k == 0 ? nullptr : trace.steps[k - 1].c.data();
        const double* d_prev = k == 0 ? trace.da0.data() : trace.steps[k - 1].da.data();
        static thread_local std::vector<double> zeros;
        if (k == 0) {
            zeros.assign(h, 0.0);
            h_prev = zeros.data();
            c_prev = zeros.data();
        }

        st.gate_in.resize(h);
        st.gate_forget.resize(h);
        st.gate_out.resize(h);
        st.cand.resize(h);
        st.gate_read.resize(d);
        st.da.resize(d);
        st.c.resize(h);
        st.tanh_c.resize(h);
        st.h.resize(h);
        CellIo io{st.x.data(), h_prev, c_prev, d_prev,
                  st.gate_in.data(), st.gate_forget.data(), st.gate_out.data(),
                  st.cand.data(), st.gate_read.data(), st.da.data(), st.c.data(),
                  st.tanh_c.data(), st.h.data()};
        cell_forward(w, cfg, io);

        st.h_dropped = st.h;
        if (use_dropout) {
            st.mask_h.resize(h);
            for (std::size_t j = 0; j < h; ++j) {
                st.mask_h[j] = drop_rng.next_double() < keep ? 1.0 / keep : 0.0;
                st.h_dropped[j] *= st.mask_h[j];
            }
        }

        st.logits.assign(w.b_proj, w.b_proj + v);
        matvec_add(w.w_proj, v, h, st.h_dropped.data(), st.logits.data());
        st.probs.resize(v);
        softmax(st.logits, st.probs);
        st.p_target = st.probs[static_cast<std::size_t>(st.target)];
        loss -= std::log(st.p_target);
    }
    trace.loss_ce = loss / static_cast<double>(K);
    return trace;
}

void backward_pass(const ModelParams& model, const Trace& trace,
                   const std::vector<std::vector<double>>& dlogits,
                   std::span<double> grad_accum, double scale) {
    const ModelConfig& cfg = model.config;
    if (grad_accum.size() != model.layout.total)
        throw ShapeError("gradient accumulator has wrong length");
    if (dlogits.size() != trace.steps.size())
        throw ShapeError("dlogits step count does not match trace");

    const auto h = static_cast<std::size_t>(cfg.hidden_size);
    const auto e = static_cast<std::size_t>(cfg.embed_size);
    const auto v = static_cast<std::size_t>(cfg.vocab_size);
    const auto d = static_cast<std::size_t>(cfg.da_dim);
    const auto w = resolve(model.layout, model.theta);

    // Per-example gradient in a scratch buffer; flushed once with `scale`.
    static thread_local std::vector<double> scratch;
    scratch.assign(model.layout.total, 0.0);
    const auto g = resolve(model.layout, scratch);

    std::vector<double> dh_next(h, 0.0), dc_next(h, 0.0), dd_next(d, 0.0);
    std::vector<double> dh(h), dhd(h), dc(h), dd(d);
    std::vector<double> dpre_in(h), dpre_forget(h), dpre_out(h), dpre_cand(h), dpre_read(d);
    std::vector<double> dx(e);
    const std::vector<double> zeros_h(h, 0.0);

    for (std::size_t k = trace.steps.size(); k-- > 0;) {
        const StepTrace& st = trace.steps[k];
        const std::vector<double>& dz = dlogits[k];
        if (dz.size() != v) throw ShapeError("dlogits entry has wrong length");

        const double* h_prev = k == 0 ? zeros_h.data() : trace.steps[k - 1].h.data();
        const double* c_prev = k == 0 ? zeros_h.data() : trace.steps[k - 1].c.data();
        const double* d_prev = k == 0 ? trace.da0.data() : trace.steps[k - 1].da.data();

        // Output projection.
        outer_add(g.w_proj, v, h, dz.data(), st.h_dropped.data());
        for (std::size_t j = 0; j < v; ++j) g.b_proj[j] += dz[j];
        std::fill(dhd.begin(), dhd.end(), 0.0);
        matvec_t_add(w.w_proj, v, h, dz.data(), dhd.data());

        for (std::size_t j = 0; j < h; ++j) {
            const double m = st.mask_h.empty() ? 1.0 : st.mask_h[j];
            dh[j] = dhd[j] * m + dh_next[j];
        }

        // h = o * tanh(c)
        for (std::size_t j = 0; j < h; ++j) {
            const double dtc = dh[j] * st.gate_out[j];
            dc[j] = dc_next[j] + dtc * (1.0 - st.tanh_c[j] * st.tanh_c[j]);
            const double do_ = dh[j] * st.tanh_c[j];
            dpre_out[j] = do_ * st.gate_out[j] * (1.0 - st.gate_out[j]);
        }

        // c = f*c_prev + i*cand + w_da * d
        outer_add(g.w_da, h, d, dc.data(), st.da.data());
        std::fill(dd.begin(), dd.end(), 0.0);
        matvec_t_add(w.w_da, h, d, dc.data(), dd.data());
        for (std::size_t j = 0; j < d; ++j) dd[j] += dd_next[j];

        for (std::size_t j = 0; j < h; ++j) {
            const double df = dc[j] * c_prev[j];
            const double di = dc[j] * st.cand[j];
            const double dcand = dc[j] * st.gate_in[j];
            dpre_forget[j] = df * st.gate_forget[j] * (1.0 - st.gate_forget[j]);
            dpre_in[j] = di * st.gate_in[j] * (1.0 - st.gate_in[j]);
            dpre_cand[j] = dcand * (1.0 - st.cand[j] * st.cand[j]);
            dc_next[j] = dc[j] * st.gate_forget[j];
        }

        // d = r * d_prev
        for (std::size_t j = 0; j < d; ++j) {
            const double dr = dd[j] * d_prev[j];
            dpre_read[j] = dr * st.gate_read[j] * (1.0 - st.gate_read[j]);
            dd_next[j] = dd[j] * st.gate_read[j];
        }

        outer_add(g.w_in, h, e, dpre_in.data(), st.x.data());
        outer_add(g.u_in, h, h, dpre_in.data(), h_prev);
        outer_add(g.w_forget, h, e, dpre_forget.data(), st.x.data());
        outer_add(g.u_forget, h, h, dpre_forget.data(), h_prev);
        outer_add(g.w_out, h, e, dpre_out.data(), st.x.data());
        outer_add(g.u_out, h, h, dpre_out.data(), h_prev);
        outer_add(g.w_cand, h, e, dpre_cand.data(), st.x.data());
        outer_add(g.u_cand, h, h, dpre_cand.data(), h_prev);
        outer_add(g.w_read, d, e, dpre_read.data(), st.x.data());
        outer_add(g.u_read, d, h, dpre_read.data(), h_prev);
        for (std::size_t j = 0; j < h; ++j) {
            g.b_in[j] += dpre_in[j];
            g.b_forget[j] += dpre_forget[j];
            g.b_out[j] += dpre_out[j];
            g.b_cand[j] += dpre_cand[j];
        }
        for (std::size_t j = 0; j < d; ++j) g.b_read[j] += dpre_read[j];

        std::fill(dx.begin(), dx.end(), 0.0);
        matvec_t_add(w.w_in, h, e, dpre_in.data(), dx.data());
        matvec_t_add(w.w_forget, h, e, dpre_forget.data(), dx.data());
        matvec_t_add(w.w_out, h, e, dpre_out.data(), dx.data());
        matvec_t_add(w.w_cand, h, e, dpre_cand.data(), dx.data());
        matvec_t_add(w.w_read, d, e, dpre_read.data(), dx.data());

        double* embed_grad = g.embed + static_cast<std::size_t>(st.input) * e;
        for (std::size_t j = 0; j < e; ++j) {
            const double m = st.mask_x.empty() ? 1.0 : st.mask_x[j];
            embed_grad[j] += dx[j] * m;
        }

        std::fill(dh_next.begin(), dh_next.end(), 0.0);
        matvec_t_add(w.u_in, h, h, dpre_in.data(), dh_next.data());
        matvec_t_add(w.u_forget, h, h, dpre_forget.data(), dh_next.data());
        matvec_t_add(w.u_out, h, h, dpre_out.data(), dh_next.data());
        matvec_t_add(w.u_cand, h, h, dpre_cand.data(), dh_next.data());
        matvec_t_add(w.u_read, d, h, dpre_read.data(), dh_next.data());
    }

    for (std::size_t i = 0; i < scratch.size(); ++i) grad_accum[i] += scale * scratch[i];
}

namespace {

std::vector<std::vector<double>> ce_dlogits(const Trace& trace) {
    const std::size_t K = trace.steps.size();
    std::vector<std::vector<double>> dlogits(K);
    for (std::size_t k = 0; k < K; ++k) {
        const StepTrace& st = trace.steps[k];
        dlogits[k] = st.probs;
        for (double& x : dlogits[k]) x /= static_cast<double>(K);
        dlogits[k][static_cast<std::size_t>(st.target)] -= 1.0 / static_cast<double>(K);
    }
    return dlogits;
}

}  // namespace

double loss_ce(const ModelParams& model, const EncodedExample& ex, const ForwardOptions& opts) {
    return forward_pass(model, ex.targets, ex.da_vec, opts).loss_ce;
}

std::vector<double> grad_ce(const ModelParams& model, const EncodedExample& ex,
                            const ForwardOptions& opts) {
    std::vector<double> grad(model.layout.total, 0.0);
    loss_grad_ce(model, ex, opts, grad);
    return grad;
}

double loss_grad_ce(const ModelParams& model, const EncodedExample& ex,
                    const ForwardOptions& opts, std::span<double> grad_accum, double scale) {
    const Trace trace = forward_pass(model, ex.targets, ex.da_vec, opts);
    backward_pass(model, trace, ce_dlogits(trace), grad_accum, scale);
    return trace.loss_ce;
}

std::vector<int> generate(const ModelParams& model, std::span<const double> da_vec,
                          int max_len) {
    if (max_len < 1) throw ValidationError("max_len must be >= 1");
    CellState state = initial_state(model, da_vec);
    std::vector<double> logits(static_cast<std::size_t>(model.config.vocab_size));
    std::vector<int> out;
    int input = kStartId;
    for (int step = 0; step < max_len; ++step) {
        semantic_cell_step(model, state, input, logits);
        int best = 0;
        for (int i = 1; i < model.config.vocab_size; ++i)
            if (logits[static_cast<std::size_t>(i)] > logits[static_cast<std::size_t>(best)])
                best = i;  // strict > keeps the lowest index on ties
        out.push_back(best);
        if (best == kEndId) break;
        input = best;
    }
    return out;
}

std::vector<std::string> decode_tokens(const std::vector<int>& ids, const Vocab& vocab) {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (int id : ids) out.push_back(vocab.token(id));
    return out;
}

}  // namespace arper
