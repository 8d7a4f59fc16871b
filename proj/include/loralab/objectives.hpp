#pragma once

#include <optional>
#include <string>
#include <vector>

#include "loralab/datagen.hpp"
#include "loralab/model.hpp"
#include "loralab/tape.hpp"

namespace loralab {

enum class ObjectiveKind { sft, dpo, orpo };

const char* objective_kind_name(ObjectiveKind kind);
ObjectiveKind objective_kind_from_name(const std::string& name);

struct ObjectiveConfig {
    ObjectiveKind kind = ObjectiveKind::sft;
    double beta = 0.1;         // DPO/ORPO preference temperature
    double orpo_weight = 0.1;  // lambda on the odds-ratio term
    bool dpo_length_norm = false;
    bool orpo_length_norm = true;

    void validate() const;
};

// Token encoding shared by every objective: prompt bytes + separator, then
// completion bytes + end marker.
struct EncodedExample {
    std::vector<int> prompt_ids;
    std::vector<int> chosen_ids;
    std::optional<std::vector<int>> rejected_ids;
};

EncodedExample encode_example(const PreferenceExample& example,
                              std::size_t max_seq);

// Mean token cross-entropy over the chosen completion, prompt masked out.
Tensor sft_loss(Tape& tape, const Model& model, const PreferenceExample& example);

// -log sigmoid(beta [(log pi(yw) - log ref(yw)) - (log pi(yl) - log ref(yl))]).
// Sum log-probs unless dpo_length_norm. The reference model stays gradient-free.
Tensor dpo_loss(Tape& tape, const Model& model, const Model& ref_model,
                const PreferenceExample& example, const ObjectiveConfig& config);

// sft + lambda * (-log sigmoid(log odds(yw) - log odds(yl))) with
// p = exp(mean log-prob), clamped before the odds.
Tensor orpo_loss(Tape& tape, const Model& model, const PreferenceExample& example,
                 const ObjectiveConfig& config);

// Dispatch on config.kind; ref_model is required for dpo only.
Tensor objective_loss(Tape& tape, const Model& model, const Model* ref_model,
                      const PreferenceExample& example,
                      const ObjectiveConfig& config);

}  // namespace loralab
