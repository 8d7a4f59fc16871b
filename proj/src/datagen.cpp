#include "loralab/datagen.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "loralab/rng.hpp"

namespace loralab {

namespace {

using nlohmann::json;

const std::vector<std::string> kNames = {"Ali", "Bo",  "Kim", "Lee", "Max",
                                         "Sam", "Ada", "Eli", "Ida", "Joy"};
const std::vector<std::string> kItems = {"cups", "pens", "figs", "keys",
                                         "maps", "nuts", "jars", "bags"};

const std::vector<std::string> kTopics = {
    "pricing", "auctions", "tariffs", "wages",  "markets",   "credit",
    "savings", "taxes",    "trade",   "growth", "inflation", "labor",
    "demand",  "supply",   "welfare", "risk"};
const std::vector<std::string> kQualifiers = {"dynamic", "optimal", "robust",
                                              "sparse",  "local",   "global",
                                              "stable",  "noisy"};
const std::vector<std::string> kMethods = {"model", "survey", "index",
                                           "theory", "bounds", "test"};

struct CategoryBank {
    std::string category;
    std::vector<std::string> members;
};

const std::vector<CategoryBank> kCategories = {
    {"color", {"red", "blue", "green", "gold", "pink", "gray"}},
    {"animal", {"fox", "owl", "bear", "wolf", "crab", "toad"}},
    {"fruit", {"fig", "plum", "pear", "peach", "mango", "lime"}},
    {"number", {"two", "five", "nine", "four", "six", "ten"}},
    {"tool", {"saw", "drill", "wrench", "file", "clamp", "rake"}},
    {"plant", {"fern", "moss", "oak", "pine", "reed", "ivy"}},
};

enum class MathOp { add, sub, dbl };

PreferenceExample build_math(Rng& rng) {
    const std::string& name = rng.pick(kNames);
    const std::string& item = rng.pick(kItems);
    const int start = 2 + static_cast<int>(rng.below(8));  // 2..9
    const std::uint64_t step_roll = rng.below(10);          // 2..4 steps, short-biased
    const std::size_t n_ops = step_roll < 4 ? 2 : step_roll < 8 ? 3 : 4;

    std::vector<MathOp> ops;
    std::vector<int> operands;
    std::vector<int> values;  // value after each step
    int v = start;
    for (std::size_t i = 0; i < n_ops; ++i) {
        const std::uint64_t roll = rng.below(100);
        MathOp op;
        if (roll < 45) {
            op = MathOp::add;
        } else if (roll < 80) {
            op = MathOp::sub;
        } else {
            op = (v <= 40) ? MathOp::dbl : MathOp::add;
        }
        int b = 0;
        switch (op) {
            case MathOp::add:
                b = 1 + static_cast<int>(rng.below(9));
                v += b;
                break;
            case MathOp::sub:
                b = (v > 0) ? 1 + static_cast<int>(rng.below(
                                      static_cast<std::uint64_t>(std::min(9, v))))
                            : 0;
                if (b == 0) {
                    op = MathOp::add;
                    b = 1 + static_cast<int>(rng.below(9));
                    v += b;
                } else {
                    v -= b;
                }
                break;
            case MathOp::dbl:
                b = 2;
                v *= 2;
                break;
        }
        ops.push_back(op);
        operands.push_back(b);
        values.push_back(v);
    }

    std::ostringstream prompt;
    prompt << name << " has " << start << " " << item << ".";
    for (std::size_t i = 0; i < n_ops; ++i) {
        switch (ops[i]) {
            case MathOp::add:
                prompt << " " << name << " gets " << operands[i] << " more.";
                break;
            case MathOp::sub:
                prompt << " " << name << " loses " << operands[i] << ".";
                break;
            case MathOp::dbl:
                prompt << " It doubles.";
                break;
        }
    }
    prompt << " How many now?";

    const auto render_steps = [&](const std::vector<int>& vals) {
        std::ostringstream out;
        int cur = start;
        for (std::size_t i = 0; i < n_ops; ++i) {
            out << "Step " << (i + 1) << ": " << cur;
            switch (ops[i]) {
                case MathOp::add: out << " + " << operands[i]; break;
                case MathOp::sub: out << " - " << operands[i]; break;
                case MathOp::dbl: out << " * 2"; break;
            }
            out << " = " << vals[i] << ". ";
            cur = vals[i];
        }
        out << "So boxed{" << vals[n_ops - 1] << "}.";
        return out.str();
    };

    // Corrupt one step and propagate; every op is injective in its first
    // argument, so the final answer is guaranteed to differ.
    const std::size_t bad = rng.below(n_ops);
    const int delta = 1 + static_cast<int>(rng.below(3));
    std::vector<int> corrupted = values;
    corrupted[bad] = values[bad] >= delta ? values[bad] - delta
                                          : values[bad] + delta;
    int cur = corrupted[bad];
    for (std::size_t i = bad + 1; i < n_ops; ++i) {
        switch (ops[i]) {
            case MathOp::add: cur += operands[i]; break;
            case MathOp::sub: cur -= operands[i]; break;
            case MathOp::dbl: cur *= 2; break;
        }
        corrupted[i] = cur;
    }

    PreferenceExample ex;
    ex.task_tag = TaskTag::math;
    ex.prompt = prompt.str();
    ex.chosen = render_steps(values);
    ex.rejected = render_steps(corrupted);
    return ex;
}

PreferenceExample build_title(Rng& rng) {
    const std::string& q1 = rng.pick(kQualifiers);
    std::vector<std::string> topics = kTopics;
    rng.shuffle(topics);
    const std::string t1 = topics[0], t2 = topics[1], t3 = topics[2];
    const std::string& m1 = rng.pick(kMethods);

    std::ostringstream abstract;
    switch (rng.below(3)) {
        case 0:
            abstract << "We study " << q1 << " " << t1 << " in " << t2
                     << " data.";
            break;
        case 1:
            abstract << "This paper examines " << q1 << " " << t1 << " under "
                     << t2 << ".";
            break;
        default:
            abstract << "We analyze " << q1 << " " << t1 << " across " << t2
                     << " settings.";
            break;
    }
    switch (rng.below(2)) {
        case 0:
            abstract << " Our " << m1 << " links " << t1 << " to " << t3 << ".";
            break;
        default:
            abstract << " A new " << m1 << " ties " << t1 << " to " << t3 << ".";
            break;
    }

    PreferenceExample ex;
    ex.task_tag = TaskTag::title;
    ex.prompt = abstract.str();
    // Deterministic keyword extraction: qualifier, the two lead topics, and
    // the method name.
    ex.chosen = q1 + " " + t1 + " and " + t2 + ": a " + m1;
    return ex;
}

PreferenceExample build_mcq(Rng& rng) {
    const std::size_t cat = rng.below(kCategories.size());
    const auto& bank = kCategories[cat];
    const std::string correct = rng.pick(bank.members);

    std::vector<std::size_t> others;
    for (std::size_t i = 0; i < kCategories.size(); ++i) {
        if (i != cat) others.push_back(i);
    }
    rng.shuffle(others);
    std::vector<std::string> options = {correct};
    for (std::size_t i = 0; i < 3; ++i) {
        options.push_back(rng.pick(kCategories[others[i]].members));
    }
    rng.shuffle(options);
    int correct_idx = 0;
    for (std::size_t i = 0; i < options.size(); ++i) {
        if (options[i] == correct) {
            correct_idx = static_cast<int>(i);
            break;
        }
    }

    std::ostringstream prompt;
    prompt << "Which one is a " << bank.category << "? Options: ";
    for (std::size_t i = 0; i < options.size(); ++i) {
        if (i) prompt << ", ";
        prompt << options[i];
    }
    prompt << ".";

    PreferenceExample ex;
    ex.task_tag = TaskTag::mcq;
    ex.prompt = prompt.str();
    ex.options = options;
    ex.correct_option = correct_idx;
    ex.chosen = options[static_cast<std::size_t>(correct_idx)];
    return ex;
}

std::vector<std::string> word_pool() {
    std::vector<std::string> pool = kTopics;
    pool.insert(pool.end(), kItems.begin(), kItems.end());
    for (const auto& bank : kCategories) {
        pool.insert(pool.end(), bank.members.begin(), bank.members.end());
    }
    return pool;
}

PreferenceExample build_general(Rng& rng) {
    static const std::vector<std::string> kPool = word_pool();
    PreferenceExample ex;
    switch (rng.below(5)) {
        case 0:
            ex = build_math(rng);
            break;
        case 1:
            ex = build_title(rng);
            break;
        case 2:
            ex = build_mcq(rng);
            ex.options.clear();
            ex.correct_option = -1;
            break;
        case 3: {
            const std::string w1 = rng.pick(kPool), w2 = rng.pick(kPool),
                              w3 = rng.pick(kPool);
            ex.prompt = "Repeat exactly: " + w1 + " " + w2 + " " + w3;
            ex.chosen = w1 + " " + w2 + " " + w3;
            break;
        }
        default: {
            const std::string w1 = rng.pick(kPool), w2 = rng.pick(kPool),
                              w3 = rng.pick(kPool);
            ex.prompt = "Give the first word: " + w1 + " " + w2 + " " + w3 + ".";
            ex.chosen = w1;
            break;
        }
    }
    ex.task_tag = TaskTag::general;
    return ex;
}

bool utf8_valid(const std::string& s) {
    std::size_t i = 0;
    while (i < s.size()) {
        const unsigned char c = static_cast<unsigned char>(s[i]);
        std::size_t extra;
        if (c < 0x80) {
            extra = 0;
        } else if ((c & 0xE0) == 0xC0) {
            extra = 1;
            if (c < 0xC2) return false;  // overlong
        } else if ((c & 0xF0) == 0xE0) {
            extra = 2;
        } else if ((c & 0xF8) == 0xF0) {
            extra = 3;
            if (c > 0xF4) return false;
        } else {
            return false;
        }
        if (extra > 0 && i + extra >= s.size()) return false;
        for (std::size_t k = 1; k <= extra; ++k) {
            if ((static_cast<unsigned char>(s[i + k]) & 0xC0) != 0x80) {
                return false;
            }
        }
        i += extra + 1;
    }
    return true;
}

std::string require_string_field(const json& obj, const char* field,
                                 std::size_t line) {
    if (!obj.contains(field)) {
        fail(ErrorKind::parse, "line " + std::to_string(line) +
                                   ": missing field '" + field + "'");
    }
    if (!obj[field].is_string()) {
        fail(ErrorKind::parse, "line " + std::to_string(line) + ": field '" +
                                   field + "' is not a string");
    }
    return obj[field].get<std::string>();
}

}  // namespace

const char* task_tag_name(TaskTag tag) {
    switch (tag) {
        case TaskTag::math: return "math";
        case TaskTag::title: return "title";
        case TaskTag::general: return "general";
        case TaskTag::mcq: return "mcq";
    }
    return "unknown";
}

TaskTag task_tag_from_name(const std::string& name) {
    if (name == "math") return TaskTag::math;
    if (name == "title") return TaskTag::title;
    if (name == "general") return TaskTag::general;
    if (name == "mcq") return TaskTag::mcq;
    fail(ErrorKind::config, "unknown task tag '" + name + "'");
}

CorpusKind corpus_kind_from_name(const std::string& name) {
    if (name == "math") return CorpusKind::math;
    if (name == "title") return CorpusKind::title;
    if (name == "general") return CorpusKind::general;
    if (name == "mcq") return CorpusKind::mcq;
    fail(ErrorKind::config, "unknown corpus kind '" + name + "'");
}

const char* corpus_kind_name(CorpusKind kind) {
    switch (kind) {
        case CorpusKind::math: return "math";
        case CorpusKind::title: return "title";
        case CorpusKind::general: return "general";
        case CorpusKind::mcq: return "mcq";
    }
    return "unknown";
}

Corpus gen_corpus(CorpusKind kind, std::size_t size, std::uint64_t seed) {
    if (size < 1) {
        fail(ErrorKind::config, "gen_corpus: size must be >= 1");
    }
    Corpus corpus;
    corpus.seed = seed;
    corpus.examples.reserve(size);
    Rng rng(Rng::mix(seed, static_cast<std::uint64_t>(kind) + 101));
    for (std::size_t i = 0; i < size; ++i) {
        switch (kind) {
            case CorpusKind::math:
                corpus.task_tag = TaskTag::math;
                corpus.examples.push_back(build_math(rng));
                break;
            case CorpusKind::title:
                corpus.task_tag = TaskTag::title;
                corpus.examples.push_back(build_title(rng));
                break;
            case CorpusKind::general:
                corpus.task_tag = TaskTag::general;
                corpus.examples.push_back(build_general(rng));
                break;
            case CorpusKind::mcq:
                corpus.task_tag = TaskTag::mcq;
                corpus.examples.push_back(build_mcq(rng));
                break;
        }
    }
    return corpus;
}

Corpus load_jsonl(const std::string& path, JsonlSchema schema) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail(ErrorKind::io, "load_jsonl: cannot open '" + path + "'");
    }
    Corpus corpus;
    corpus.task_tag =
        schema == JsonlSchema::step_dpo ? TaskTag::math : TaskTag::title;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (!utf8_valid(line)) {
            fail(ErrorKind::encoding,
                 "line " + std::to_string(line_no) + ": invalid UTF-8");
        }
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            fail(ErrorKind::parse,
                 "line " + std::to_string(line_no) + ": " + e.what());
        }
        PreferenceExample ex;
        if (schema == JsonlSchema::step_dpo) {
            ex.task_tag = TaskTag::math;
            ex.prompt = require_string_field(obj, "prompt", line_no);
            ex.chosen = require_string_field(obj, "chosen", line_no);
            ex.rejected = require_string_field(obj, "rejected", line_no);
        } else {
            ex.task_tag = TaskTag::title;
            ex.prompt = require_string_field(obj, "text", line_no);
            ex.chosen = require_string_field(obj, "title", line_no);
        }
        if (ex.prompt.empty() || ex.chosen.empty()) {
            fail(ErrorKind::parse, "line " + std::to_string(line_no) +
                                       ": prompt/chosen must be non-empty");
        }
        corpus.examples.push_back(std::move(ex));
    }
    return corpus;
}

void save_jsonl(const Corpus& corpus, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        fail(ErrorKind::io, "save_jsonl: cannot open '" + path + "' for write");
    }
    for (const auto& ex : corpus.examples) {
        json obj;
        switch (ex.task_tag) {
            case TaskTag::math:
                obj["prompt"] = ex.prompt;
                obj["chosen"] = ex.chosen;
                obj["rejected"] = ex.rejected.value_or("");
                break;
            case TaskTag::title:
                obj["text"] = ex.prompt;
                obj["title"] = ex.chosen;
                break;
            case TaskTag::mcq:
                obj["prompt"] = ex.prompt;
                obj["options"] = ex.options;
                obj["answer"] = ex.correct_option;
                break;
            case TaskTag::general:
                obj["prompt"] = ex.prompt;
                obj["chosen"] = ex.chosen;
                if (ex.rejected) obj["rejected"] = *ex.rejected;
                break;
        }
        out << obj.dump() << "\n";
    }
}

}  // namespace loralab
