#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "loralab/datagen.hpp"
#include "loralab/metrics.hpp"
#include "loralab/rng.hpp"
#include "loralab/tokenizer.hpp"

using namespace loralab;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name)
        : path("/tmp/loralab_test_" + name) {}
    ~TempFile() { std::remove(path.c_str()); }
};

// Re-evaluates the step arithmetic in a chosen completion and returns the
// final value, or nullopt if the text does not parse.
std::optional<long> replay_steps(const std::string& chosen) {
    std::optional<long> current;
    std::size_t pos = 0;
    while (true) {
        const std::size_t step = chosen.find("Step ", pos);
        if (step == std::string::npos) break;
        const std::size_t colon = chosen.find(": ", step);
        if (colon == std::string::npos) return std::nullopt;
        long lhs = 0, rhs = 0, out = 0;
        char op = 0;
        if (std::sscanf(chosen.c_str() + colon + 2, "%ld %c %ld = %ld", &lhs,
                        &op, &rhs, &out) != 4) {
            return std::nullopt;
        }
        if (current && *current != lhs) return std::nullopt;
        long expect = 0;
        switch (op) {
            case '+': expect = lhs + rhs; break;
            case '-': expect = lhs - rhs; break;
            case '*': expect = lhs * rhs; break;
            default: return std::nullopt;
        }
        if (expect != out) return std::nullopt;
        current = out;
        pos = colon + 2;
    }
    return current;
}

}  // namespace

TEST_CASE("corpus generation is deterministic in (kind, size, seed)") {
    const Corpus a = gen_corpus(CorpusKind::math, 10, 7);
    const Corpus b = gen_corpus(CorpusKind::math, 10, 7);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a.at(i).prompt == b.at(i).prompt);
        CHECK(a.at(i).chosen == b.at(i).chosen);
        CHECK(a.at(i).rejected == b.at(i).rejected);
    }
    const Corpus c = gen_corpus(CorpusKind::math, 10, 8);
    bool any_diff = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        any_diff = any_diff || a.at(i).prompt != c.at(i).prompt;
    }
    CHECK(any_diff);
}

TEST_CASE("math: one boxed span, machine-checkable steps, corrupted rejected") {
    const Corpus corpus = gen_corpus(CorpusKind::math, 200, 3);
    for (const auto& ex : corpus.examples) {
        const std::string needle = "boxed{";
        CHECK(ex.chosen.find(needle) == ex.chosen.rfind(needle));

        const auto truth = extract_boxed(ex.chosen);
        REQUIRE(truth.has_value());
        const auto replayed = replay_steps(ex.chosen);
        REQUIRE(replayed.has_value());
        CHECK(std::to_string(*replayed) == *truth);
        CHECK(*replayed >= 0);
        CHECK(*replayed <= 10000);

        REQUIRE(ex.rejected.has_value());
        const auto wrong = extract_boxed(*ex.rejected);
        REQUIRE(wrong.has_value());
        CHECK(*wrong != *truth);

        // prompt + completion must fit the desk-scale context with room for
        // the separator and end marker
        CHECK(ex.prompt.size() + ex.chosen.size() + 2 <= 256);
        CHECK(ex.prompt.size() + ex.rejected->size() + 2 <= 256);
    }
}

TEST_CASE("title corpus extracts titles from abstract keywords") {
    const Corpus corpus = gen_corpus(CorpusKind::title, 50, 5);
    for (const auto& ex : corpus.examples) {
        CHECK_FALSE(ex.rejected.has_value());
        CHECK(ex.prompt.size() + ex.chosen.size() + 2 <= 256);
        // every content word of the title appears in the abstract
        std::istringstream words(ex.chosen);
        std::string w;
        while (words >> w) {
            if (w == "and" || w == "a" || w.back() == ':') {
                if (!w.empty() && w.back() == ':') w.pop_back();
            }
            if (w == "and" || w == "a") continue;
            CHECK(ex.prompt.find(w) != std::string::npos);
        }
    }
}

TEST_CASE("mcq: exactly four options, chosen mirrors the correct one") {
    const Corpus corpus = gen_corpus(CorpusKind::mcq, 100, 9);
    std::size_t position_hist[4] = {0, 0, 0, 0};
    for (const auto& ex : corpus.examples) {
        REQUIRE(ex.options.size() == 4);
        REQUIRE(ex.correct_option >= 0);
        REQUIRE(ex.correct_option < 4);
        CHECK(ex.chosen == ex.options[static_cast<std::size_t>(ex.correct_option)]);
        CHECK(ex.prompt.find(ex.chosen) != std::string::npos);
        ++position_hist[ex.correct_option];
    }
    for (std::size_t c : position_hist) CHECK(c > 5);
}

TEST_CASE("general corpus mixes styles and carries the general tag") {
    const Corpus corpus = gen_corpus(CorpusKind::general, 300, 2);
    std::size_t with_boxed = 0, with_repeat = 0, with_option = 0;
    for (const auto& ex : corpus.examples) {
        CHECK(ex.task_tag == TaskTag::general);
        if (ex.chosen.find("boxed{") != std::string::npos) ++with_boxed;
        if (ex.prompt.rfind("Repeat exactly:", 0) == 0) ++with_repeat;
        if (ex.prompt.find("Options:") != std::string::npos) ++with_option;
    }
    CHECK(with_boxed > 20);
    CHECK(with_repeat > 20);
    CHECK(with_option > 20);
}

TEST_CASE("train/eval seed ranges share no identical prompts") {
    const Corpus train = gen_corpus(CorpusKind::math, 2000, Rng::mix(1, 0x7A51));
    const Corpus eval = gen_corpus(CorpusKind::math, 100, 0xE7A1001);
    std::set<std::string> train_prompts;
    for (const auto& ex : train.examples) train_prompts.insert(ex.prompt);
    for (const auto& ex : eval.examples) {
        CHECK(train_prompts.count(ex.prompt) == 0);
    }
}

TEST_CASE("gen_corpus validates size") {
    CHECK_THROWS_AS(gen_corpus(CorpusKind::math, 0, 1), Error);
}

TEST_CASE("tokenizer round-trips byte strings and guards reserved ids") {
    Rng rng(17);
    for (int trial = 0; trial < 50; ++trial) {
        std::string s;
        const std::size_t len = rng.below(64);
        for (std::size_t i = 0; i < len; ++i) {
            s.push_back(static_cast<char>(rng.below(256)));
        }
        CHECK(Tokenizer::detokenize(Tokenizer::tokenize(s)) == s);
    }
    CHECK(Tokenizer::tokenize("ab") == std::vector<int>{97, 98});
    CHECK(Tokenizer::tokenize("").empty());
    CHECK_THROWS_AS(Tokenizer::detokenize({97, Tokenizer::kSep, 98}), Error);
}

TEST_CASE("jsonl ingestion: step_dpo and econ_title schemas") {
    TempFile file("step_dpo.jsonl");
    {
        std::ofstream out(file.path);
        out << R"({"prompt": "p1", "chosen": "c1", "rejected": "r1"})" << "\n";
    }
    const Corpus corpus = load_jsonl(file.path, JsonlSchema::step_dpo);
    REQUIRE(corpus.size() == 1);
    CHECK(corpus.task_tag == TaskTag::math);
    CHECK(corpus.at(0).prompt == "p1");
    CHECK(corpus.at(0).chosen == "c1");
    CHECK(corpus.at(0).rejected == "r1");

    TempFile econ("econ.jsonl");
    const std::string text = "An abstract with unicode: \xC3\xA9conomie.";
    {
        std::ofstream out(econ.path);
        nlohmann::json j{{"text", text}, {"title", "t1"}};
        out << j.dump() << "\n";
    }
    const Corpus titles = load_jsonl(econ.path, JsonlSchema::econ_title);
    REQUIRE(titles.size() == 1);
    CHECK(titles.task_tag == TaskTag::title);
    CHECK(titles.at(0).prompt == text);  // byte-exact round trip
    CHECK(titles.at(0).chosen == "t1");
}

TEST_CASE("jsonl errors carry line numbers and categories") {
    TempFile file("bad.jsonl");
    {
        std::ofstream out(file.path);
        out << R"({"prompt": "p1", "rejected": "r1"})" << "\n";
    }
    try {
        load_jsonl(file.path, JsonlSchema::step_dpo);
        FAIL("expected parse error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::parse);
        CHECK(std::string(e.what()).find("line 1") != std::string::npos);
        CHECK(std::string(e.what()).find("chosen") != std::string::npos);
    }

    TempFile badenc("badenc.jsonl");
    {
        std::ofstream out(badenc.path);
        out << "{\"prompt\": \"\xFF\xFE\", \"chosen\": \"c\", \"rejected\": \"r\"}\n";
    }
    try {
        load_jsonl(badenc.path, JsonlSchema::step_dpo);
        FAIL("expected encoding error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::encoding);
    }

    TempFile badjson("badjson.jsonl");
    {
        std::ofstream out(badjson.path);
        out << "{\"prompt\": \"ok\", \"chosen\": \"c\", \"rejected\": \"r\"}\n";
        out << "{not json\n";
    }
    try {
        load_jsonl(badjson.path, JsonlSchema::step_dpo);
        FAIL("expected parse error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::parse);
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
}

TEST_CASE("save_jsonl round-trips through the ingestion schema") {
    const Corpus corpus = gen_corpus(CorpusKind::math, 25, 4);
    TempFile file("roundtrip.jsonl");
    save_jsonl(corpus, file.path);
    const Corpus loaded = load_jsonl(file.path, JsonlSchema::step_dpo);
    REQUIRE(loaded.size() == corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        CHECK(loaded.at(i).prompt == corpus.at(i).prompt);
        CHECK(loaded.at(i).chosen == corpus.at(i).chosen);
        CHECK(loaded.at(i).rejected == corpus.at(i).rejected);
    }
}
