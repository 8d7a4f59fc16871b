#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "loralab/datagen.hpp"
#include "loralab/init.hpp"
#include "loralab/metrics.hpp"
#include "loralab/model.hpp"
#include "loralab/rng.hpp"
#include "loralab/trainer.hpp"

using namespace loralab;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.vocab_size = 258;
    cfg.d_model = 16;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.d_ff = 24;
    cfg.max_seq = 192;
    cfg.adapter_rank = 2;
    cfg.adapter_alpha = 2.0;
    return cfg;
}

Model uniform_model() {
    Model model = build_model(tiny_config(), 3);
    model.base.for_each([](Tensor& t) {
        std::fill(t.mutable_data().begin(), t.mutable_data().end(), 0.0);
    });
    return model;
}

std::vector<std::string> random_words(Rng& rng, std::size_t count) {
    static const std::vector<std::string> bank = {
        "alpha", "beta", "gamma", "delta", "omega", "kappa", "sigma", "theta"};
    std::vector<std::string> out;
    for (std::size_t i = 0; i < count; ++i) out.push_back(rng.pick(bank));
    return out;
}

std::string join(const std::vector<std::string>& words) {
    std::string out;
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (i) out += ' ';
        out += words[i];
    }
    return out;
}

}  // namespace

TEST_CASE("extract_boxed basics") {
    CHECK(extract_boxed("so boxed{42}.").value() == "42");
    CHECK_FALSE(extract_boxed("no span here").has_value());
    CHECK(extract_boxed("boxed{1} then boxed{2}").value() == "2");
    CHECK(extract_boxed("boxed{  7 }").value() == "7");
    CHECK_FALSE(extract_boxed("boxed{unterminated").has_value());
}

TEST_CASE("extract_boxed is idempotent on its own re-wrapped output") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const std::string inner = std::to_string(rng.below(100000));
        const std::string text = "Step blah " + std::to_string(trial) +
                                 " boxed{" + inner + "} trailing";
        const auto first = extract_boxed(text);
        REQUIRE(first.has_value());
        const auto again = extract_boxed("boxed{" + *first + "}");
        REQUIRE(again.has_value());
        CHECK(*again == *first);
    }
}

TEST_CASE("answer normalization strips whitespace and leading zeros only") {
    CHECK(normalize_answer("007") == "7");
    CHECK(normalize_answer("  42  ") == "42");
    CHECK(normalize_answer("0") == "0");
    CHECK(normalize_answer("000") == "0");
    CHECK(normalize_answer("10") == "10");
}

TEST_CASE("rouge reference vectors") {
    for (RougeVariant v : {RougeVariant::r1, RougeVariant::r2, RougeVariant::rl}) {
        const RougeScore s = rouge("the cat sat", "the cat sat", v);
        CHECK(s.f1 == doctest::Approx(1.0));
    }
    const RougeScore r1 = rouge("the cat sat", "the cat", RougeVariant::r1);
    CHECK(r1.precision == doctest::Approx(2.0 / 3.0));
    CHECK(r1.recall == doctest::Approx(1.0));
    CHECK(r1.f1 == doctest::Approx(0.8));

    for (RougeVariant v : {RougeVariant::r1, RougeVariant::r2, RougeVariant::rl}) {
        const RougeScore s = rouge("aa bb cc", "dd ee ff", v);
        CHECK(s.precision == 0.0);
        CHECK(s.recall == 0.0);
        CHECK(s.f1 == 0.0);
    }
}

TEST_CASE("rouge handles case, empty strings, and short bigram inputs") {
    CHECK(rouge("The CAT", "the cat", RougeVariant::r1).f1 ==
          doctest::Approx(1.0));
    CHECK(rouge("", "the cat", RougeVariant::r1).f1 == 0.0);
    CHECK(rouge("the", "the", RougeVariant::r2).f1 == 0.0);  // no bigrams
}

TEST_CASE("rouge symmetry and range properties") {
    Rng rng(9);
    for (int trial = 0; trial < 30; ++trial) {
        const std::string a = join(random_words(rng, 1 + rng.below(8)));
        const std::string b = join(random_words(rng, 1 + rng.below(8)));
        for (RougeVariant v :
             {RougeVariant::r1, RougeVariant::r2, RougeVariant::rl}) {
            const RougeScore ab = rouge(a, b, v);
            const RougeScore ba = rouge(b, a, v);
            CHECK(ab.precision == doctest::Approx(ba.recall));
            CHECK(ab.recall == doctest::Approx(ba.precision));
            CHECK(ab.f1 >= 0.0);
            CHECK(ab.f1 <= 1.0);
            CHECK(ab.f1 <= std::max(ab.precision, ab.recall) + 1e-12);
        }
    }
}

TEST_CASE("a model memorizing a 1-example corpus scores 1.0 exact match") {
    Corpus corpus = gen_corpus(CorpusKind::math, 1, 77);
    Model model = build_model(tiny_config(), 5);
    lm_pretrain(model, corpus, 1e-2, 300, 1, 3);
    const EvalReport rep = exact_match_accuracy(model, corpus);
    CHECK(rep.value == 1.0);
    CHECK(rep.sample_count == 1);
}

TEST_CASE("an untrained uniform model stays at chance level") {
    const Model model = uniform_model();
    const Corpus corpus = gen_corpus(CorpusKind::math, 200, 13);
    // uniform logits decode to a constant byte, so no boxed span appears
    const EvalReport rep = exact_match_accuracy(model, corpus, 16);
    CHECK(rep.value < 0.05);
}

TEST_CASE("exact match requires a math corpus with content") {
    const Model model = uniform_model();
    Corpus empty;
    empty.task_tag = TaskTag::math;
    CHECK_THROWS_AS(exact_match_accuracy(model, empty), Error);
    const Corpus titles = gen_corpus(CorpusKind::title, 3, 1);
    CHECK_THROWS_AS(exact_match_accuracy(model, titles), Error);
}

TEST_CASE("mcq on a uniform model ties to option 0, near chance accuracy") {
    const Model model = uniform_model();
    const Corpus probe = gen_corpus(CorpusKind::mcq, 400, 19);
    const EvalReport rep = mcq_accuracy(model, probe);
    CHECK(rep.value > 0.25 - 0.08);
    CHECK(rep.value < 0.25 + 0.08);

    // identical options tie-break to index 0
    std::size_t correct_at_zero = 0;
    for (const auto& ex : probe.examples) {
        if (ex.correct_option == 0) ++correct_at_zero;
    }
    Corpus same;
    same.task_tag = TaskTag::mcq;
    PreferenceExample ex;
    ex.task_tag = TaskTag::mcq;
    ex.prompt = "Which one is a color?";
    ex.options = {"blue", "blue", "blue", "blue"};
    ex.correct_option = 0;
    ex.chosen = "blue";
    same.examples.push_back(ex);
    CHECK(mcq_accuracy(model, same).value == 1.0);
    same.examples[0].correct_option = 2;
    CHECK(mcq_accuracy(model, same).value == 0.0);
}

TEST_CASE("a model trained on the probe corpus itself clears 0.9") {
    Corpus probe = gen_corpus(CorpusKind::mcq, 64, 23);
    Model model = build_model(tiny_config(), 7);
    lm_pretrain(model, probe, 5e-3, 60, 16, 5);
    const EvalReport rep = mcq_accuracy(model, probe);
    CHECK(rep.value > 0.9);
}

TEST_CASE("mcq rejects malformed option lists") {
    const Model model = uniform_model();
    Corpus bad;
    bad.task_tag = TaskTag::mcq;
    PreferenceExample ex;
    ex.task_tag = TaskTag::mcq;
    ex.prompt = "q";
    ex.options = {"a", "b", "c"};
    ex.correct_option = 0;
    ex.chosen = "a";
    bad.examples.push_back(ex);
    CHECK_THROWS_AS(mcq_accuracy(model, bad), Error);
}

TEST_CASE("rouge_eval reports all three variants in range") {
    const Model model = uniform_model();
    const Corpus titles = gen_corpus(CorpusKind::title, 5, 3);
    const auto reports = rouge_eval(model, titles, 8);
    REQUIRE(reports.size() == 3);
    CHECK(reports[0].metric == "rouge_1_f1");
    CHECK(reports[1].metric == "rouge_2_f1");
    CHECK(reports[2].metric == "rouge_l_f1");
    for (const auto& rep : reports) {
        CHECK(rep.value >= 0.0);
        CHECK(rep.value <= 1.0);
        CHECK(rep.sample_count == 5);
    }
}
