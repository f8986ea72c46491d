#include <doctest.h>

#include <map>
#include <sstream>

#include "arper/corpus.hpp"
#include "arper/errors.hpp"
#include "helpers.hpp"

using namespace arper;
using namespace arper::testing;

namespace {

const char* kTwoLineCorpus = R"({"task":"attraction","split":"train","intent":"inform","slots":[{"slot":"attraction-name","value":"ADC Theatre"}],"text":"The ADC Theatre is nice","delex_text":"the [slot-attraction-name] is nice"}
{"task":"attraction","split":"test","intent":"inform","slots":[],"text":"hello there","delex_text":"hello there"}
)";

}  // namespace

TEST_CASE("load_corpus reads a two-line corpus into one task") {
    TempDir tmp("corpus");
    write_file(tmp.file("c.jsonl"), kTwoLineCorpus);
    const TaskStream stream = load_corpus(tmp.file("c.jsonl"));
    REQUIRE(stream.tasks.size() == 1);
    CHECK(stream.tasks[0].name == "attraction");
    CHECK(stream.tasks[0].train.size() == 1);
    CHECK(stream.tasks[0].test.size() == 1);
    CHECK(stream.tasks[0].valid.empty());
    const Utterance& utt = stream.tasks[0].train[0];
    CHECK(utt.tokens == std::vector<std::string>{"the", "[slot-attraction-name]", "is", "nice",
                                                 kEndToken});
    CHECK(utt.raw_text == "The ADC Theatre is nice");
}

TEST_CASE("load_corpus rejects bad input") {
    TempDir tmp("corpus-bad");

    SUBCASE("empty file") {
        write_file(tmp.file("empty.jsonl"), "");
        CHECK_THROWS_WITH_AS(load_corpus(tmp.file("empty.jsonl")),
                             doctest::Contains("no tasks"), ValidationError);
    }
    SUBCASE("missing slots field names line 1") {
        write_file(tmp.file("bad.jsonl"),
                   R"({"task":"a","split":"train","intent":"i","text":"x","delex_text":"x"})"
                   "\n");
        CHECK_THROWS_WITH_AS(load_corpus(tmp.file("bad.jsonl")), doctest::Contains("line 1"),
                             ParseError);
    }
    SUBCASE("unknown split label") {
        write_file(
            tmp.file("split.jsonl"),
            R"({"task":"a","split":"dev","intent":"i","slots":[],"text":"x","delex_text":"x"})"
            "\n");
        CHECK_THROWS_AS(load_corpus(tmp.file("split.jsonl")), ParseError);
    }
    SUBCASE("empty train split") {
        write_file(
            tmp.file("notrain.jsonl"),
            R"({"task":"a","split":"test","intent":"i","slots":[],"text":"x","delex_text":"x"})"
            "\n");
        CHECK_THROWS_AS(load_corpus(tmp.file("notrain.jsonl")), ValidationError);
    }
}

TEST_CASE("corpus round-trips through save and load") {
    SyntheticSpec spec;
    spec.n_tasks = 3;
    spec.utterances_per_task = 40;
    spec.slots_per_task = 5;
    spec.seed = 9;
    const TaskStream stream = generate_synthetic_stream(spec);
    TempDir tmp("roundtrip");
    save_corpus(stream, tmp.file("s.jsonl"));
    const TaskStream reloaded = load_corpus(tmp.file("s.jsonl"));
    CHECK(stream == reloaded);
}

TEST_CASE("delexicalize replaces values with placeholders") {
    SUBCASE("sample utterance with two slots") {
        DialogAct da;
        da.pairs = {{"attraction-name", "ADC Theatre"}, {"attraction-addr", "Park Street"}};
        const auto tokens = delexicalize("The ADC Theatre is located on Park Street", da);
        CHECK(tokens == std::vector<std::string>{"the", "[slot-attraction-name]", "is",
                                                 "located", "on", "[slot-attraction-addr]",
                                                 kEndToken});
    }
    SUBCASE("value absent from text produces no placeholder") {
        DialogAct da;
        da.pairs = {{"hotel-area", "centre"}};
        const auto tokens = delexicalize("no placeholders here", da);
        CHECK(tokens ==
              std::vector<std::string>{"no", "placeholders", "here", kEndToken});
    }
    SUBCASE("single substitution") {
        DialogAct da;
        da.pairs = {{"*-fee", "free"}};
        const auto tokens = delexicalize("free entry", da);
        CHECK(tokens == std::vector<std::string>{"[slot-*-fee]", "entry", kEndToken});
    }
    SUBCASE("longer values win over nested shorter ones") {
        DialogAct da;
        da.pairs = {{"d-short", "park"}, {"d-long", "park street"}};
        const auto tokens = delexicalize("park street and park", da);
        CHECK(tokens == std::vector<std::string>{"[slot-d-long]", "and", "[slot-d-short]",
                                                 kEndToken});
    }
    SUBCASE("match is case-insensitive") {
        DialogAct da;
        da.pairs = {{"d-name", "CuRry GARDEN"}};
        const auto tokens = delexicalize("try curry garden today", da);
        CHECK(tokens == std::vector<std::string>{"try", "[slot-d-name]", "today", kEndToken});
    }
}

TEST_CASE("synthetic stream generation") {
    SyntheticSpec spec;
    spec.n_tasks = 3;
    spec.utterances_per_task = 100;
    spec.slots_per_task = 6;
    spec.shared_slot_fraction = 0.3;
    spec.template_count = 5;
    spec.seed = 7;

    SUBCASE("deterministic for a fixed seed") {
        const TaskStream a = generate_synthetic_stream(spec);
        const TaskStream b = generate_synthetic_stream(spec);
        REQUIRE(a == b);
        // byte-identical serialization too
        TempDir tmp("synth");
        save_corpus(a, tmp.file("a.jsonl"));
        save_corpus(b, tmp.file("b.jsonl"));
        CHECK(read_file(tmp.file("a.jsonl")) == read_file(tmp.file("b.jsonl")));
    }
    SUBCASE("different seeds differ") {
        const TaskStream a = generate_synthetic_stream(spec);
        SyntheticSpec other = spec;
        other.seed = 8;
        CHECK(!(a == generate_synthetic_stream(other)));
    }
    SUBCASE("shared fraction zero gives pairwise-disjoint slot inventories") {
        SyntheticSpec disjoint = spec;
        disjoint.shared_slot_fraction = 0.0;
        const TaskStream s = generate_synthetic_stream(disjoint);
        std::vector<std::set<std::string>> unions(s.tasks.size());
        for (std::size_t t = 0; t < s.tasks.size(); ++t)
            for (const auto* split :
                 {&s.tasks[t].train, &s.tasks[t].valid, &s.tasks[t].test})
                for (const Utterance& u : *split)
                    for (const auto& slot : u.da.slot_set()) unions[t].insert(slot);
        for (std::size_t a = 0; a < unions.size(); ++a)
            for (std::size_t b = a + 1; b < unions.size(); ++b)
                for (const auto& slot : unions[a]) CHECK(unions[b].count(slot) == 0);
    }
    SUBCASE("split arithmetic 80/10/10") {
        SyntheticSpec small = spec;
        small.utterances_per_task = 10;
        const TaskStream s = generate_synthetic_stream(small);
        for (const Task& task : s.tasks) {
            CHECK(task.train.size() == 8);
            CHECK(task.valid.size() == 1);
            CHECK(task.test.size() == 1);
        }
    }
    SUBCASE("placeholder multiset equals the DA slot multiset") {
        const TaskStream s = generate_synthetic_stream(spec);
        for (const Task& task : s.tasks)
            for (const auto* split : {&task.train, &task.valid, &task.test})
                for (const Utterance& u : *split) {
                    std::multiset<std::string> produced;
                    for (const std::string& tok : u.tokens)
                        if (is_slot_placeholder(tok)) produced.insert(tok);
                    std::multiset<std::string> required;
                    for (const SlotValue& p : u.da.pairs)
                        required.insert(slot_placeholder(p.slot));
                    CHECK(produced == required);
                }
    }
    SUBCASE("out-of-range spec values are rejected") {
        SyntheticSpec bad = spec;
        bad.shared_slot_fraction = 1.5;
        CHECK_THROWS_AS(generate_synthetic_stream(bad), ValidationError);
        bad = spec;
        bad.utterances_per_task = 2;
        CHECK_THROWS_AS(generate_synthetic_stream(bad), ValidationError);
    }
}

TEST_CASE("da_feature_vector") {
    // inventory: 3 intents, 4 slots
    std::vector<Utterance> utts;
    for (const char* intent : {"inform", "request", "recommend"})
        utts.push_back(make_utterance(intent, {}, {"x"}));
    utts.push_back(make_utterance("inform",
                                  {{"d-name", "n"}, {"d-area", "a"}, {"d-fee", "f"},
                                   {"d-addr", "ad"}},
                                  {"y"}));
    const TaskStream stream = tiny_stream(utts);
    REQUIRE(stream.inventory.dim() == 7);

    SUBCASE("intent plus two slots has exactly three ones") {
        DialogAct da;
        da.intent = "inform";
        da.pairs = {{"d-name", "x"}, {"d-area", "y"}};
        const auto v = da_feature_vector(da, stream.inventory);
        REQUIRE(v.size() == 7);
        double sum = 0;
        for (double x : v) {
            CHECK((x == 0.0 || x == 1.0));
            sum += x;
        }
        CHECK(sum == 3.0);
    }
    SUBCASE("no slots gives a one-hot intent vector") {
        DialogAct da;
        da.intent = "request";
        const auto v = da_feature_vector(da, stream.inventory);
        double sum = 0;
        for (double x : v) sum += x;
        CHECK(sum == 1.0);
    }
    SUBCASE("value-blind: same intent and slot set give identical vectors") {
        DialogAct a{"inform", {{"d-name", "v1"}, {"d-area", "v2"}}};
        DialogAct b{"inform", {{"d-area", "other"}, {"d-name", "x"}, {"d-name", "again"}}};
        CHECK(da_feature_vector(a, stream.inventory) == da_feature_vector(b, stream.inventory));
    }
    SUBCASE("popcount is 1 + |slot_set|") {
        DialogAct da{"recommend", {{"d-fee", "v"}, {"d-fee", "w"}, {"d-addr", "u"}}};
        const auto v = da_feature_vector(da, stream.inventory);
        double sum = 0;
        for (double x : v) sum += x;
        CHECK(sum == static_cast<double>(1 + da.slot_count()));
    }
    SUBCASE("unknown intent or slot is an inventory error") {
        DialogAct da{"nope", {}};
        CHECK_THROWS_AS(da_feature_vector(da, stream.inventory), ValidationError);
        DialogAct da2{"inform", {{"unknown-slot", "v"}}};
        CHECK_THROWS_AS(da_feature_vector(da2, stream.inventory), ValidationError);
    }
}

TEST_CASE("vocab_counts") {
    // task 1 train vocabulary {a,b,c}; task 2 train vocabulary {b,d}
    Task t1, t2;
    t1.name = "t1";
    t1.train = {make_utterance("i", {}, {"a", "b", "c"})};
    t2.name = "t2";
    t2.train = {make_utterance("i", {}, {"b", "d"})};
    const TaskStream stream = finalize_stream({t1, t2});

    SUBCASE("set arithmetic") {
        const VocabCounts vc = vocab_counts(stream, 2);
        CHECK(vc.v_old == 3);
        CHECK(vc.v_new == 1);
    }
    SUBCASE("first task has no old vocabulary") {
        const VocabCounts vc = vocab_counts(stream, 1);
        CHECK(vc.v_old == 0);
        CHECK(vc.v_new == 3);
    }
    SUBCASE("subset vocabulary gives zero new") {
        Task t3;
        t3.name = "t3";
        t3.train = {make_utterance("i", {}, {"a", "b"})};
        const TaskStream s3 = finalize_stream({t1, t2, t3});
        CHECK(vocab_counts(s3, 3).v_new == 0);
        CHECK(vocab_counts(s3, 3).v_old == 4);
    }
    SUBCASE("v_old is monotone in t") {
        SyntheticSpec spec;
        spec.n_tasks = 4;
        spec.utterances_per_task = 30;
        spec.seed = 5;
        const TaskStream s = generate_synthetic_stream(spec);
        std::size_t prev = 0;
        for (int t = 1; t <= 4; ++t) {
            const VocabCounts vc = vocab_counts(s, t);
            CHECK(vc.v_old >= prev);
            prev = vc.v_old;
        }
    }
    SUBCASE("out of range") {
        CHECK_THROWS_AS(vocab_counts(stream, 0), ValidationError);
        CHECK_THROWS_AS(vocab_counts(stream, 3), ValidationError);
    }
}

TEST_CASE("reorder_stream recomputes vocabulary bookkeeping") {
    Task t1, t2;
    t1.name = "t1";
    t1.train = {make_utterance("i", {}, {"a", "b", "c"})};
    t2.name = "t2";
    t2.train = {make_utterance("i", {}, {"b", "d"})};
    const TaskStream stream = finalize_stream({t1, t2});
    const TaskStream swapped = reorder_stream(stream, {1, 0});
    CHECK(swapped.tasks[0].name == "t2");
    CHECK(swapped.tasks[0].id == 0);
    const VocabCounts vc = vocab_counts(swapped, 2);
    CHECK(vc.v_old == 2);   // {b,d}
    CHECK(vc.v_new == 2);   // {a,c}
    CHECK_THROWS_AS(reorder_stream(stream, {0, 0}), ValidationError);
    CHECK_THROWS_AS(reorder_stream(stream, {0}), ValidationError);
}
