#include <doctest.h>

#include <cmath>

#include "arper/continual.hpp"
#include "arper/errors.hpp"
#include "arper/model.hpp"
#include "arper/rng.hpp"
#include "arper/serialize.hpp"
#include "helpers.hpp"

using namespace arper;
using namespace arper::testing;

namespace {

ModelConfig small_config(int vocab, int da_dim, int hidden = 6, int embed = 5) {
    ModelConfig cfg;
    cfg.hidden_size = hidden;
    cfg.embed_size = embed;
    cfg.vocab_size = vocab;
    cfg.da_dim = da_dim;
    return cfg;
}

// Random encodable example over the model's vocabulary / DA space.
EncodedExample random_example(Rng& rng, const ModelConfig& cfg, std::size_t max_len = 8) {
    EncodedExample ex;
    const std::size_t len = 1 + rng.next_below(max_len);
    for (std::size_t i = 0; i + 1 < len; ++i)
        ex.targets.push_back(
            2 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(cfg.vocab_size - 2))));
    ex.targets.push_back(kEndId);
    ex.da_vec.assign(static_cast<std::size_t>(cfg.da_dim), 0.0);
    ex.da_vec[rng.next_below(static_cast<std::uint64_t>(cfg.da_dim))] = 1.0;
    for (int j = 1; j < cfg.da_dim; ++j)
        if (rng.next_double() < 0.4) ex.da_vec[static_cast<std::size_t>(j)] = 1.0;
    ex.slot_count = 1;
    return ex;
}

}  // namespace

TEST_CASE("parameter layout arithmetic") {
    // H=4, E=4, V=10, D=6:
    //   embed 10*4 = 40
    //   four gates: 4*(4*4 + 4*4 + 4) = 144
    //   reading gate: 6*4 + 6*4 + 6 = 54
    //   DA projection: 4*6 = 24
    //   output projection: 10*4 + 10 = 50
    const ModelConfig cfg = small_config(10, 6, 4, 4);
    const ParamLayout layout = ParamLayout::make(cfg);
    CHECK(layout.total == 312);
    std::size_t sum = 0;
    for (const ParamSegment& s : layout.segments) sum += s.size();
    CHECK(sum == layout.total);
    CHECK(layout.segment("u_forget").rows == 4);
    CHECK_THROWS_AS(layout.segment("nope"), ShapeError);
}

TEST_CASE("init_model determinism and bias conventions") {
    const ModelConfig cfg = small_config(10, 6);
    const ModelParams a = init_model(cfg, 3);
    const ModelParams b = init_model(cfg, 3);
    CHECK(a.theta == b.theta);
    const ModelParams c = init_model(cfg, 4);
    CHECK(a.theta != c.theta);

    for (const ParamSegment& seg : a.layout.segments) {
        for (std::size_t i = 0; i < seg.size(); ++i) {
            const double v = a.theta[seg.offset + i];
            if (seg.name == "b_forget")
                CHECK(v == 1.0);
            else if (seg.name[0] == 'b')
                CHECK(v == 0.0);
            else {
                CHECK(v >= -0.1);
                CHECK(v <= 0.1);
            }
        }
    }
}

TEST_CASE("uniform-output model has loss ln V") {
    const ModelConfig cfg = small_config(10, 3);
    ModelParams model = init_model(cfg, 1);
    std::fill(model.theta.begin(), model.theta.end(), 0.0);
    EncodedExample ex;
    ex.targets = {4, 7, kEndId};
    ex.da_vec = {1.0, 0.0, 1.0};
    CHECK(loss_ce(model, ex) == doctest::Approx(std::log(10.0)).epsilon(1e-12));
}

TEST_CASE("probability-one teacher forcing has zero loss and zero gradient") {
    const ModelConfig cfg = small_config(8, 3);
    ModelParams model = init_model(cfg, 1);
    std::fill(model.theta.begin(), model.theta.end(), 0.0);
    const ParamSegment& b_proj = model.layout.segment("b_proj");
    model.theta[b_proj.offset + kEndId] = 500.0;  // softmax saturates at 1 in doubles

    EncodedExample ex;
    ex.targets = {kEndId};
    ex.da_vec = {0.0, 1.0, 0.0};
    CHECK(loss_ce(model, ex) == 0.0);
    const std::vector<double> grad = grad_ce(model, ex);
    for (double g : grad) CHECK(std::abs(g) < 1e-200);
}

TEST_CASE("two-token loss matches hand-computed softmax cross entropy") {
    const ModelConfig cfg = small_config(3, 1, 1, 1);
    ModelParams model = init_model(cfg, 1);
    std::fill(model.theta.begin(), model.theta.end(), 0.0);
    const ParamSegment& b_proj = model.layout.segment("b_proj");
    const double logits[3] = {0.2, -0.1, 0.3};
    for (int i = 0; i < 3; ++i) model.theta[b_proj.offset + static_cast<std::size_t>(i)] = logits[i];

    EncodedExample ex;
    ex.targets = {0, 2};
    ex.da_vec = {1.0};

    // independent arithmetic
    const double z = std::exp(0.2) + std::exp(-0.1) + std::exp(0.3);
    const double expected = -0.5 * (std::log(std::exp(0.2) / z) + std::log(std::exp(0.3) / z));
    CHECK(loss_ce(model, ex) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("analytic gradient matches central finite differences") {
    const ModelConfig cfg = small_config(12, 7);
    ModelParams model = init_model(cfg, 17);
    REQUIRE(model.layout.total <= 2000);
    Rng rng(99);

    double worst = 0.0;
    for (int trial = 0; trial < 5; ++trial) {
        const EncodedExample ex = random_example(rng, cfg);
        const std::vector<double> analytic = grad_ce(model, ex);
        const std::vector<double> fd = finite_difference(
            model, [&](const ModelParams& m) { return loss_ce(m, ex); }, 1e-4);
        worst = std::max(worst, max_rel_error(analytic, fd));
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("gradient check holds per parameter segment") {
    const ModelConfig cfg = small_config(10, 5, 4, 4);
    ModelParams model = init_model(cfg, 23);
    Rng rng(7);
    const EncodedExample ex = random_example(rng, cfg);
    const std::vector<double> analytic = grad_ce(model, ex);
    const std::vector<double> fd = finite_difference(
        model, [&](const ModelParams& m) { return loss_ce(m, ex); }, 1e-4);
    for (const ParamSegment& seg : model.layout.segments) {
        double worst = 0.0;
        for (std::size_t i = seg.offset; i < seg.offset + seg.size(); ++i) {
            const double denom = std::max({std::abs(analytic[i]), std::abs(fd[i]), 1e-6});
            worst = std::max(worst, std::abs(analytic[i] - fd[i]) / denom);
        }
        INFO("segment ", seg.name);
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("batch-mean gradient equals the mean of per-example gradients") {
    const ModelConfig cfg = small_config(9, 4);
    const ModelParams model = init_model(cfg, 5);
    Rng rng(13);
    const EncodedExample a = random_example(rng, cfg);
    const EncodedExample b = random_example(rng, cfg);

    std::vector<double> batch(model.layout.total, 0.0);
    loss_grad_ce(model, a, {}, batch, 0.5);
    loss_grad_ce(model, b, {}, batch, 0.5);

    const std::vector<double> ga = grad_ce(model, a);
    const std::vector<double> gb = grad_ce(model, b);
    double worst = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i)
        worst = std::max(worst, std::abs(batch[i] - 0.5 * (ga[i] + gb[i])));
    CHECK(worst < 1e-12);
}

TEST_CASE("softmax probabilities sum to one at every step") {
    const ModelConfig cfg = small_config(11, 4);
    const ModelParams model = init_model(cfg, 2);
    Rng rng(3);
    const EncodedExample ex = random_example(rng, cfg);
    const Trace trace = forward_pass(model, ex.targets, ex.da_vec);
    for (const StepTrace& st : trace.steps) {
        double sum = 0.0;
        for (double p : st.probs) sum += p;
        CHECK(std::abs(sum - 1.0) < 1e-9);
        CHECK(st.p_target > 0.0);
        CHECK(st.p_target <= 1.0);
    }
}

TEST_CASE("greedy decoding") {
    SUBCASE("uniform logits emit the lowest token index until max_len") {
        const ModelConfig cfg = small_config(7, 3);
        ModelParams model = init_model(cfg, 1);
        std::fill(model.theta.begin(), model.theta.end(), 0.0);
        const std::vector<double> da = {1.0, 0.0, 0.0};
        const std::vector<int> out = generate(model, da, 6);
        CHECK(out == std::vector<int>(6, kStartId));
    }
    SUBCASE("max_len one gives a single token") {
        const ModelConfig cfg = small_config(7, 3);
        const ModelParams model = init_model(cfg, 1);
        const std::vector<double> da = {0.0, 1.0, 0.0};
        CHECK(generate(model, da, 1).size() == 1);
    }
    SUBCASE("a model trained to memorize one utterance reproduces it") {
        // 5-token vocabulary: <bos>, <eos>, and three words
        const Utterance utt =
            make_utterance("inform", {{"d-name", "v"}}, {"[slot-d-name]", "w1", "w2"});
        const TaskStream stream = tiny_stream({utt});
        REQUIRE(stream.vocab.size() == 5);

        ModelConfig cfg;
        cfg.hidden_size = 12;
        cfg.embed_size = 8;
        cfg.vocab_size = 5;
        cfg.da_dim = static_cast<int>(stream.inventory.dim());
        const ModelParams init = init_model(cfg, 11);

        Objective obj;
        obj.pool = {encode_example(utt, stream)};
        TrainConfig tc;
        tc.learning_rate = 1e-2;
        tc.batch_size = 1;
        tc.max_epochs = 300;
        tc.patience = 300;
        tc.seed = 1;
        const FitResult fitted = fit(init, obj, obj.pool, tc);

        ModelParams trained = init;
        trained.theta = fitted.theta;
        REQUIRE(loss_ce(trained, obj.pool[0]) < 0.05);
        const std::vector<int> out =
            generate(trained, obj.pool[0].da_vec, 10);
        CHECK(out == obj.pool[0].targets);
        CHECK(decode_tokens(out, stream.vocab) == utt.tokens);
    }
}

TEST_CASE("semantic cell DA-memory identities") {
    const ModelConfig cfg = small_config(9, 4);
    const ModelParams model = init_model(cfg, 21);
    std::vector<double> logits(9);

    SUBCASE("zero DA vector contributes nothing") {
        ModelParams gateless = model;
        const ParamSegment& w_da = gateless.layout.segment("w_da");
        std::fill(gateless.theta.begin() + static_cast<long>(w_da.offset),
                  gateless.theta.begin() + static_cast<long>(w_da.offset + w_da.size()), 0.0);

        const std::vector<double> zero_da(4, 0.0);
        CellState a = initial_state(model, zero_da);
        CellState b = initial_state(gateless, zero_da);
        std::vector<double> logits_b(9);
        for (int tok : {3, 5, 2}) {
            semantic_cell_step(model, a, tok, logits);
            semantic_cell_step(gateless, b, tok, logits_b);
            CHECK(a.h == b.h);
            CHECK(logits == logits_b);
        }
    }
    SUBCASE("a saturated reading gate keeps the DA memory constant") {
        ModelParams open = model;
        for (const char* name : {"w_read", "u_read"}) {
            const ParamSegment& seg = open.layout.segment(name);
            std::fill(open.theta.begin() + static_cast<long>(seg.offset),
                      open.theta.begin() + static_cast<long>(seg.offset + seg.size()), 0.0);
        }
        const ParamSegment& b_read = open.layout.segment("b_read");
        std::fill(open.theta.begin() + static_cast<long>(b_read.offset),
                  open.theta.begin() + static_cast<long>(b_read.offset + b_read.size()), 500.0);

        const std::vector<double> da = {1.0, 0.0, 1.0, 0.5};
        CellState s = initial_state(open, da);
        for (int tok : {1, 2, 3, 4}) {
            semantic_cell_step(open, s, tok, logits);
            CHECK(s.da == da);
        }
    }
    SUBCASE("non-negative DA memory decays componentwise") {
        const std::vector<double> da = {1.0, 0.5, 0.25, 1.0};
        CellState s = initial_state(model, da);
        std::vector<double> prev = s.da;
        for (int tok : {2, 7, 4, 1}) {
            semantic_cell_step(model, s, tok, logits);
            for (std::size_t j = 0; j < prev.size(); ++j) {
                CHECK(s.da[j] <= prev[j]);
                CHECK(s.da[j] >= 0.0);
            }
            prev = s.da;
        }
    }
    SUBCASE("dimension mismatch is a shape error") {
        CellState s = initial_state(model, std::vector<double>{1.0, 0.0, 0.0, 0.0});
        s.h.resize(3);
        CHECK_THROWS_AS(semantic_cell_step(model, s, 1, logits), ShapeError);
        CHECK_THROWS_AS(initial_state(model, std::vector<double>{1.0}), ShapeError);
    }
}

TEST_CASE("dropout semantics") {
    const ModelConfig cfg = small_config(10, 4);
    ModelParams model = init_model(cfg, 8);
    Rng rng(31);
    const EncodedExample ex = random_example(rng, cfg);

    SUBCASE("rate zero in training mode is bit-identical to eval mode") {
        model.config.dropout_rate = 0.0;
        ForwardOptions train_opts;
        train_opts.training = true;
        train_opts.dropout_seed = 123;
        CHECK(loss_ce(model, ex, train_opts) == loss_ce(model, ex));
        CHECK(grad_ce(model, ex, train_opts) == grad_ce(model, ex));
    }
    SUBCASE("evaluation mode ignores the configured rate") {
        ModelParams dropped = model;
        dropped.config.dropout_rate = 0.5;
        CHECK(loss_ce(dropped, ex) == loss_ce(model, ex));
    }
    SUBCASE("shared masks give reproducible dropout losses") {
        model.config.dropout_rate = 0.3;
        ForwardOptions opts;
        opts.training = true;
        opts.dropout_seed = 777;
        CHECK(loss_ce(model, ex, opts) == loss_ce(model, ex, opts));
        ForwardOptions other = opts;
        other.dropout_seed = 778;
        CHECK(loss_ce(model, ex, opts) != loss_ce(model, ex, other));
    }
    SUBCASE("dropout gradient matches finite differences under fixed masks") {
        model.config.dropout_rate = 0.25;
        ForwardOptions opts;
        opts.training = true;
        opts.dropout_seed = 4242;
        const std::vector<double> analytic = grad_ce(model, ex, opts);
        const std::vector<double> fd = finite_difference(
            model, [&](const ModelParams& m) { return loss_ce(m, ex, opts); }, 1e-4);
        CHECK(max_rel_error(analytic, fd) < 1e-4);
    }
}

TEST_CASE("loss/encoding error paths") {
    const ModelConfig cfg = small_config(6, 3);
    const ModelParams model = init_model(cfg, 1);
    EncodedExample ex;
    ex.targets = {99};
    ex.da_vec = {1.0, 0.0, 0.0};
    CHECK_THROWS_AS(loss_ce(model, ex), ValidationError);
    ex.targets = {2};
    ex.da_vec = {1.0};
    CHECK_THROWS_AS(loss_ce(model, ex), ShapeError);

    const Utterance utt = make_utterance("i", {}, {"unseen-token"});
    const TaskStream stream = tiny_stream({make_utterance("i", {}, {"known"})});
    CHECK_THROWS_AS(encode_example(utt, stream), ValidationError);
}

TEST_CASE("checkpoints round-trip bitwise") {
    const ModelConfig cfg = small_config(14, 5);
    const ModelParams model = init_model(cfg, 77);
    TempDir tmp("ckpt");
    save_checkpoint(model, tmp.file("m.json"));
    const ModelParams loaded = load_checkpoint(tmp.file("m.json"));
    CHECK(loaded.config == model.config);
    REQUIRE(loaded.theta.size() == model.theta.size());
    CHECK(loaded.theta == model.theta);
}
