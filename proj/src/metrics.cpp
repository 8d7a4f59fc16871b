#include "loralab/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>

#include "loralab/tokenizer.hpp"

namespace loralab {

namespace {

std::vector<std::string> words_lower(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!cur.empty()) {
                out.push_back(cur);
                cur.clear();
            }
        } else {
            cur.push_back(static_cast<char>(
                std::tolower(static_cast<unsigned char>(c))));
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

std::map<std::string, int> ngram_counts(const std::vector<std::string>& tokens,
                                        std::size_t n) {
    std::map<std::string, int> counts;
    if (tokens.size() < n) return counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        std::string key = tokens[i];
        for (std::size_t k = 1; k < n; ++k) key += '\x1f' + tokens[i + k];
        ++counts[key];
    }
    return counts;
}

RougeScore from_counts(double overlap, double cand_total, double ref_total) {
    RougeScore s;
    s.precision = cand_total > 0.0 ? overlap / cand_total : 0.0;
    s.recall = ref_total > 0.0 ? overlap / ref_total : 0.0;
    s.f1 = (s.precision + s.recall) > 0.0
               ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
               : 0.0;
    return s;
}

std::size_t lcs_length(const std::vector<std::string>& a,
                       const std::vector<std::string>& b) {
    if (a.empty() || b.empty()) return 0;
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1]
                         ? prev[j - 1] + 1
                         : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

std::string decode_completion(const Model& model, const std::string& prompt,
                              std::size_t max_new_tokens,
                              const std::string& stop_text = "") {
    std::vector<int> ids = Tokenizer::tokenize(prompt);
    ids.push_back(Tokenizer::kSep);
    const std::vector<int> generated =
        greedy_decode(model, ids, max_new_tokens, stop_text);
    return Tokenizer::detokenize(generated);
}

void require_task(const Corpus& corpus, TaskTag tag, const char* who) {
    if (corpus.size() == 0) {
        fail(ErrorKind::data, std::string(who) + ": empty corpus");
    }
    if (corpus.task_tag != tag) {
        fail(ErrorKind::data, std::string(who) + ": corpus is tagged " +
                                  task_tag_name(corpus.task_tag) +
                                  ", expected " + task_tag_name(tag));
    }
}

}  // namespace

std::optional<std::string> extract_boxed(const std::string& text) {
    const std::string needle = "boxed{";
    const std::size_t start = text.rfind(needle);
    if (start == std::string::npos) return std::nullopt;
    const std::size_t open = start + needle.size();
    const std::size_t close = text.find('}', open);
    if (close == std::string::npos) return std::nullopt;
    std::string content = text.substr(open, close - open);
    const auto is_ws = [](unsigned char c) { return std::isspace(c) != 0; };
    while (!content.empty() && is_ws(static_cast<unsigned char>(content.front()))) {
        content.erase(content.begin());
    }
    while (!content.empty() && is_ws(static_cast<unsigned char>(content.back()))) {
        content.pop_back();
    }
    return content;
}

std::string normalize_answer(const std::string& answer) {
    std::size_t lo = 0, hi = answer.size();
    const auto is_ws = [&](std::size_t i) {
        return std::isspace(static_cast<unsigned char>(answer[i])) != 0;
    };
    while (lo < hi && is_ws(lo)) ++lo;
    while (hi > lo && is_ws(hi - 1)) --hi;
    std::string s = answer.substr(lo, hi - lo);
    std::size_t z = 0;
    while (z + 1 < s.size() && s[z] == '0') ++z;
    return s.substr(z);
}

RougeScore rouge(const std::string& candidate, const std::string& reference,
                 RougeVariant variant) {
    const auto cand = words_lower(candidate);
    const auto ref = words_lower(reference);
    if (variant == RougeVariant::rl) {
        const double lcs = static_cast<double>(lcs_length(cand, ref));
        return from_counts(lcs, static_cast<double>(cand.size()),
                           static_cast<double>(ref.size()));
    }
    const std::size_t n = variant == RougeVariant::r1 ? 1 : 2;
    const auto cand_counts = ngram_counts(cand, n);
    const auto ref_counts = ngram_counts(ref, n);
    double overlap = 0.0, cand_total = 0.0, ref_total = 0.0;
    for (const auto& [k, v] : cand_counts) cand_total += v;
    for (const auto& [k, v] : ref_counts) ref_total += v;
    for (const auto& [k, v] : cand_counts) {
        const auto it = ref_counts.find(k);
        if (it != ref_counts.end()) overlap += std::min(v, it->second);
    }
    return from_counts(overlap, cand_total, ref_total);
}

EvalReport exact_match_accuracy(const Model& model, const Corpus& corpus,
                                std::size_t max_new_tokens) {
    require_task(corpus, TaskTag::math, "exact_match_accuracy");
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(corpus.size());
    std::vector<char> correct(corpus.size(), 0);
    // Items score independently; the reduction below runs in index order.
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const PreferenceExample& ex = corpus.at(static_cast<std::size_t>(i));
        const auto truth = extract_boxed(ex.chosen);
        if (!truth) {
            continue;  // malformed reference scores as incorrect
        }
        // The boxed span is the only thing scored, so generation can stop at
        // the first closing brace.
        const std::string output =
            decode_completion(model, ex.prompt, max_new_tokens, "}");
        const auto predicted = extract_boxed(output);
        if (predicted &&
            normalize_answer(*predicted) == normalize_answer(*truth)) {
            correct[static_cast<std::size_t>(i)] = 1;
        }
    }
    std::size_t hits = 0;
    for (char c : correct) hits += static_cast<std::size_t>(c);
    return {TaskTag::math, "exact_match",
            static_cast<double>(hits) / static_cast<double>(corpus.size()),
            corpus.size(), corpus.seed};
}

std::vector<EvalReport> rouge_eval(const Model& model, const Corpus& corpus,
                                   std::size_t max_new_tokens) {
    require_task(corpus, TaskTag::title, "rouge_eval");
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(corpus.size());
    std::vector<double> f1_r1(corpus.size()), f1_r2(corpus.size()),
        f1_rl(corpus.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const PreferenceExample& ex = corpus.at(static_cast<std::size_t>(i));
        const std::string title =
            decode_completion(model, ex.prompt, max_new_tokens);
        f1_r1[i] = rouge(title, ex.chosen, RougeVariant::r1).f1;
        f1_r2[i] = rouge(title, ex.chosen, RougeVariant::r2).f1;
        f1_rl[i] = rouge(title, ex.chosen, RougeVariant::rl).f1;
    }
    const auto mean = [&](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
    };
    return {{TaskTag::title, "rouge_1_f1", mean(f1_r1), corpus.size(), corpus.seed},
            {TaskTag::title, "rouge_2_f1", mean(f1_r2), corpus.size(), corpus.seed},
            {TaskTag::title, "rouge_l_f1", mean(f1_rl), corpus.size(), corpus.seed}};
}

EvalReport mcq_accuracy(const Model& model, const Corpus& corpus) {
    require_task(corpus, TaskTag::mcq, "mcq_accuracy");
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(corpus.size());
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const PreferenceExample& ex = corpus.at(static_cast<std::size_t>(i));
        if (ex.options.size() != 4 || ex.correct_option < 0 ||
            ex.correct_option >= 4) {
            fail(ErrorKind::data, "mcq_accuracy: example " + std::to_string(i) +
                                      " does not carry exactly 4 options");
        }
        for (const auto& opt : ex.options) {
            if (opt.empty()) {
                fail(ErrorKind::data, "mcq_accuracy: empty option text");
            }
        }
    }
    std::vector<char> correct(corpus.size(), 0);
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const PreferenceExample& ex = corpus.at(static_cast<std::size_t>(i));
        std::vector<int> prompt = Tokenizer::tokenize(ex.prompt);
        prompt.push_back(Tokenizer::kSep);
        std::size_t best = 0;
        double best_lp = 0.0;
        for (std::size_t o = 0; o < ex.options.size(); ++o) {
            const double lp = sequence_log_prob_value(
                model, prompt, Tokenizer::tokenize(ex.options[o]),
                LogProbNorm::mean);
            if (o == 0 || lp > best_lp) {
                best = o;
                best_lp = lp;
            }
        }
        if (best == static_cast<std::size_t>(ex.correct_option)) {
            correct[static_cast<std::size_t>(i)] = 1;
        }
    }
    std::size_t hits = 0;
    for (char c : correct) hits += static_cast<std::size_t>(c);
    return {TaskTag::mcq, "mcq_accuracy",
            static_cast<double>(hits) / static_cast<double>(corpus.size()),
            corpus.size(), corpus.seed};
}

}  // namespace loralab
