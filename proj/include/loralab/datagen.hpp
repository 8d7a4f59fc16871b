#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "loralab/error.hpp"

namespace loralab {

enum class TaskTag { math, title, general, mcq };

const char* task_tag_name(TaskTag tag);
TaskTag task_tag_from_name(const std::string& name);

struct PreferenceExample {
    std::string prompt;
    std::string chosen;
    std::optional<std::string> rejected;
    TaskTag task_tag = TaskTag::general;
    // Multiple-choice items carry exactly four candidate completions; chosen
    // mirrors options[correct_option].
    std::vector<std::string> options;
    int correct_option = -1;
};

struct Corpus {
    std::vector<PreferenceExample> examples;
    std::uint64_t seed = 0;
    TaskTag task_tag = TaskTag::general;

    std::size_t size() const { return examples.size(); }
    const PreferenceExample& at(std::size_t i) const { return examples[i]; }
};

enum class CorpusKind { math, title, general, mcq };

CorpusKind corpus_kind_from_name(const std::string& name);
const char* corpus_kind_name(CorpusKind kind);

// Deterministic synthetic corpora; content is a pure function of
// (kind, size, seed).
//   math    2-4 step integer word problems; chosen ends in boxed{answer},
//           rejected corrupts one step and the boxed answer
//   title   short pseudo-abstract, chosen title extracted from its keywords
//   general mixed instruction/response items spanning every task style
//   mcq     category question with 4 candidate completions, one correct
Corpus gen_corpus(CorpusKind kind, std::size_t size, std::uint64_t seed);

enum class JsonlSchema { step_dpo, econ_title };

// Newline-delimited JSON ingestion in the external schemas:
//   step_dpo   {"prompt": ..., "chosen": ..., "rejected": ...}  -> math
//   econ_title {"text": ..., "title": ...}                      -> title
Corpus load_jsonl(const std::string& path, JsonlSchema schema);

// JSONL emission for gen-data; math/title use the ingestion schemas.
void save_jsonl(const Corpus& corpus, const std::string& path);

}  // namespace loralab
