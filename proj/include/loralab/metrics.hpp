#pragma once

#include <optional>
#include <string>
#include <vector>

#include "loralab/datagen.hpp"
#include "loralab/model.hpp"

namespace loralab {

struct EvalReport {
    TaskTag task_tag = TaskTag::general;
    std::string metric;
    double value = 0.0;
    std::size_t sample_count = 0;
    std::uint64_t seed = 0;
};

// Content of the last boxed{...} span, whitespace-trimmed.
std::optional<std::string> extract_boxed(const std::string& text);

// Strips surrounding whitespace and leading zeros (a bare run of zeros
// normalizes to "0").
std::string normalize_answer(const std::string& answer);

struct RougeScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

enum class RougeVariant { r1, r2, rl };

// Whitespace tokenization, lowercase. r1/r2 use clipped n-gram overlap, rl is
// LCS based. F1 is 0 when both components are 0; empty-vs-nonempty scores all
// zeros.
RougeScore rouge(const std::string& candidate, const std::string& reference,
                 RougeVariant variant);

// Greedy-decodes each math prompt (default cap 128 tokens) and compares the
// boxed answer to the ground truth as normalized integer strings. A missing
// boxed span counts as incorrect.
EvalReport exact_match_accuracy(const Model& model, const Corpus& corpus,
                                std::size_t max_new_tokens = 128);

// Greedy-decodes a title per abstract and reports mean F1 per ROUGE variant
// (metric names rouge_1_f1, rouge_2_f1, rouge_l_f1).
std::vector<EvalReport> rouge_eval(const Model& model, const Corpus& corpus,
                                   std::size_t max_new_tokens = 128);

// Predicted option = argmax over the four candidates of the mean-normalized
// sequence log-probability; ties break toward the lowest option index.
EvalReport mcq_accuracy(const Model& model, const Corpus& corpus);

}  // namespace loralab
