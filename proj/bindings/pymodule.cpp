#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "arper/continual.hpp"
#include "arper/experiment.hpp"
#include "arper/metrics.hpp"
#include "arper/serialize.hpp"

namespace py = pybind11;
using namespace arper;

PYBIND11_MODULE(_core, m) {
    m.doc() = "Continual learning engine for semantically conditioned NLG";

    py::class_<SlotValue>(m, "SlotValue")
        .def(py::init<>())
        .def(py::init([](std::string slot, std::string value) {
                 return SlotValue{std::move(slot), std::move(value)};
             }),
             py::arg("slot"), py::arg("value"))
        .def_readwrite("slot", &SlotValue::slot)
        .def_readwrite("value", &SlotValue::value);

    py::class_<DialogAct>(m, "DialogAct")
        .def(py::init<>())
        .def(py::init([](std::string intent, std::vector<SlotValue> pairs) {
                 DialogAct da;
                 da.intent = std::move(intent);
                 da.pairs = std::move(pairs);
                 return da;
             }),
             py::arg("intent"), py::arg("pairs") = std::vector<SlotValue>{})
        .def_readwrite("intent", &DialogAct::intent)
        .def_readwrite("pairs", &DialogAct::pairs)
        .def("slot_set", &DialogAct::slot_set)
        .def("slot_count", &DialogAct::slot_count);

    py::class_<Utterance>(m, "Utterance")
        .def(py::init<>())
        .def(py::init([](std::vector<std::string> tokens, DialogAct da, std::string raw) {
                 return Utterance{std::move(tokens), std::move(da), std::move(raw)};
             }),
             py::arg("tokens"), py::arg("da"), py::arg("raw_text") = "")
        .def_readwrite("tokens", &Utterance::tokens)
        .def_readwrite("da", &Utterance::da)
        .def_readwrite("raw_text", &Utterance::raw_text);

    py::class_<Task>(m, "Task")
        .def_readonly("id", &Task::id)
        .def_readonly("name", &Task::name)
        .def_readonly("train", &Task::train)
        .def_readonly("valid", &Task::valid)
        .def_readonly("test", &Task::test);

    py::class_<TaskStream>(m, "TaskStream")
        .def_readonly("tasks", &TaskStream::tasks)
        .def_property_readonly("vocab_size",
                               [](const TaskStream& s) { return s.vocab.size(); })
        .def_property_readonly("da_dim",
                               [](const TaskStream& s) { return s.inventory.dim(); });

    py::class_<SyntheticSpec>(m, "SyntheticSpec")
        .def(py::init<>())
        .def_readwrite("n_tasks", &SyntheticSpec::n_tasks)
        .def_readwrite("utterances_per_task", &SyntheticSpec::utterances_per_task)
        .def_readwrite("slots_per_task", &SyntheticSpec::slots_per_task)
        .def_readwrite("shared_slot_fraction", &SyntheticSpec::shared_slot_fraction)
        .def_readwrite("template_count", &SyntheticSpec::template_count)
        .def_readwrite("seed", &SyntheticSpec::seed);

    m.def("generate_synthetic_stream", &generate_synthetic_stream, py::arg("spec"));
    m.def("load_corpus", &load_corpus, py::arg("path"));
    m.def("save_corpus", &save_corpus, py::arg("stream"), py::arg("path"));
    m.def("reorder_stream", &reorder_stream, py::arg("stream"), py::arg("order"));
    m.def("delexicalize", &delexicalize, py::arg("text"), py::arg("da"));
    m.def("slot_placeholder", &slot_placeholder, py::arg("slot"));
    m.def(
        "da_feature_vector",
        [](const DialogAct& da, const TaskStream& stream) {
            return da_feature_vector(da, stream.inventory);
        },
        py::arg("da"), py::arg("stream"));
    m.def(
        "vocab_counts",
        [](const TaskStream& stream, int upto_task) {
            const VocabCounts vc = vocab_counts(stream, upto_task);
            return py::make_tuple(vc.v_old, vc.v_new);
        },
        py::arg("stream"), py::arg("upto_task"));

    py::class_<ModelConfig>(m, "ModelConfig")
        .def(py::init<>())
        .def_readwrite("hidden_size", &ModelConfig::hidden_size)
        .def_readwrite("embed_size", &ModelConfig::embed_size)
        .def_readwrite("vocab_size", &ModelConfig::vocab_size)
        .def_readwrite("da_dim", &ModelConfig::da_dim)
        .def_readwrite("dropout_rate", &ModelConfig::dropout_rate);

    py::class_<ModelParams>(m, "ModelParams")
        .def_readonly("config", &ModelParams::config)
        .def_readwrite("theta", &ModelParams::theta)
        .def_property_readonly(
            "n_params", [](const ModelParams& p) { return p.layout.total; });

    m.def("init_model", &init_model, py::arg("config"), py::arg("seed"));
    m.def(
        "loss_ce",
        [](const ModelParams& model, const Utterance& utt, const TaskStream& stream) {
            return loss_ce(model, encode_example(utt, stream));
        },
        py::arg("model"), py::arg("utterance"), py::arg("stream"));
    m.def(
        "grad_ce",
        [](const ModelParams& model, const Utterance& utt, const TaskStream& stream) {
            return grad_ce(model, encode_example(utt, stream));
        },
        py::arg("model"), py::arg("utterance"), py::arg("stream"));
    m.def(
        "generate",
        [](const ModelParams& model, const DialogAct& da, const TaskStream& stream,
           int max_len) {
            return decode_tokens(
                generate(model, da_feature_vector(da, stream.inventory), max_len),
                stream.vocab);
        },
        py::arg("model"), py::arg("da"), py::arg("stream"), py::arg("max_len") = 40);
    m.def("save_checkpoint", &save_checkpoint, py::arg("model"), py::arg("path"));
    m.def("load_checkpoint", &load_checkpoint, py::arg("path"));

    py::class_<ScoredUtterance>(m, "ScoredUtterance")
        .def(py::init<>())
        .def(py::init([](Utterance utt, double u) {
                 return ScoredUtterance{std::move(utt), u};
             }),
             py::arg("utterance"), py::arg("u_score"))
        .def_readwrite("utterance", &ScoredUtterance::utt)
        .def_readwrite("u_score", &ScoredUtterance::u_score);

    m.def("priority_score", &priority_score, py::arg("loss"), py::arg("slot_count"),
          py::arg("beta"));
    m.def(
        "select_exemplars_prioritized",
        [](std::vector<ScoredUtterance> pool, std::size_t m_count) {
            return select_exemplars_prioritized(std::move(pool), m_count).items;
        },
        py::arg("pool"), py::arg("m"));
    m.def(
        "select_exemplars_random",
        [](std::vector<ScoredUtterance> pool, std::size_t m_count, std::uint64_t seed) {
            return select_exemplars_random(std::move(pool), m_count, seed).items;
        },
        py::arg("pool"), py::arg("m"), py::arg("seed"));
    m.def(
        "select_exemplars_herding",
        [](std::vector<ScoredUtterance> pool, std::vector<std::vector<double>> features,
           std::size_t m_count) {
            return select_exemplars_herding(std::move(pool), features, m_count).items;
        },
        py::arg("pool"), py::arg("features"), py::arg("m"));
    m.def(
        "allocate_budget",
        [](std::size_t budget, const std::vector<std::size_t>& sizes) {
            return allocate_budget(budget, sizes);
        },
        py::arg("budget"), py::arg("sizes"));

    m.def("adaptive_lambda", &adaptive_lambda, py::arg("lambda_base"), py::arg("v_old"),
          py::arg("v_new"));
    m.def(
        "ewc_penalty",
        [](const std::vector<double>& theta, const std::vector<double>& theta_prev,
           const std::vector<double>& fisher, double lambda) {
            EwcAnchor anchor;
            anchor.theta_prev = theta_prev;
            anchor.fisher.f = fisher;
            const PenaltyResult r = ewc_penalty(theta, anchor, lambda);
            return py::make_tuple(r.value, r.grad);
        },
        py::arg("theta"), py::arg("theta_prev"), py::arg("fisher"), py::arg("lambda"));
    m.def(
        "l2_penalty",
        [](const std::vector<double>& theta, const std::vector<double>& theta_prev,
           double weight) {
            const PenaltyResult r = l2_penalty(theta, theta_prev, weight);
            return py::make_tuple(r.value, r.grad);
        },
        py::arg("theta"), py::arg("theta_prev"), py::arg("weight"));

    m.def(
        "ser",
        [](const std::vector<std::string>& generated, const DialogAct& da) {
            return ser(generated, da);
        },
        py::arg("generated"), py::arg("da"));
    m.def("bleu4", &bleu4, py::arg("candidates"), py::arg("reference_groups"));
    m.def(
        "omega", [](const std::vector<double>& values) { return omega(values); },
        py::arg("values"));

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("learning_rate", &TrainConfig::learning_rate)
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("max_epochs", &TrainConfig::max_epochs)
        .def_readwrite("patience", &TrainConfig::patience)
        .def_readwrite("beta", &TrainConfig::beta)
        .def_readwrite("lambda_base", &TrainConfig::lambda_base)
        .def_readwrite("eta", &TrainConfig::eta)
        .def_readwrite("l2_weight", &TrainConfig::l2_weight)
        .def_readwrite("dropout_rate", &TrainConfig::dropout_rate)
        .def_readwrite("exemplar_budget", &TrainConfig::exemplar_budget)
        .def_readwrite("seed", &TrainConfig::seed);

    py::class_<RunSettings>(m, "RunSettings")
        .def(py::init<>())
        .def_readwrite("train", &RunSettings::train)
        .def_readwrite("hidden_size", &RunSettings::hidden_size)
        .def_readwrite("embed_size", &RunSettings::embed_size)
        .def_readwrite("max_gen_len", &RunSettings::max_gen_len)
        .def_readwrite("macro_eval", &RunSettings::macro_eval);

    py::class_<EvalRecord>(m, "EvalRecord")
        .def_readonly("step", &EvalRecord::step)
        .def_readonly("ser_all", &EvalRecord::ser_all)
        .def_readonly("bleu_all", &EvalRecord::bleu_all)
        .def_readonly("ser_first", &EvalRecord::ser_first)
        .def_readonly("bleu_first", &EvalRecord::bleu_first);

    py::class_<ExperimentResult>(m, "ExperimentResult")
        .def_readonly("records", &ExperimentResult::records)
        .def_readonly("omega_ser_all", &ExperimentResult::omega_ser_all)
        .def_readonly("omega_bleu_all", &ExperimentResult::omega_bleu_all)
        .def_readonly("omega_ser_first", &ExperimentResult::omega_ser_first)
        .def_readonly("omega_bleu_first", &ExperimentResult::omega_bleu_first)
        .def_readonly("task_seconds", &ExperimentResult::task_seconds)
        .def_readonly("lambdas", &ExperimentResult::lambdas)
        .def_readonly("epochs", &ExperimentResult::epochs)
        .def_readonly("checkpoints", &ExperimentResult::checkpoints);

    m.def(
        "run_stream",
        [](const TaskStream& stream, const std::string& method, const RunSettings& settings) {
            return run_stream(stream, MethodSpec::parse(method), settings);
        },
        py::arg("stream"), py::arg("method"), py::arg("settings"));
    m.def(
        "evaluate_model",
        [](const ModelParams& model, const TaskStream& stream, const std::vector<int>& tasks,
           int max_len) {
            const EvalResult r = evaluate_model(model, stream, tasks, max_len);
            return py::make_tuple(r.ser, r.bleu);
        },
        py::arg("model"), py::arg("stream"), py::arg("task_ids"), py::arg("max_len") = 40);
}
