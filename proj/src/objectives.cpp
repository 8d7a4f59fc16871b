#include "loralab/objectives.hpp"

#include "loralab/tokenizer.hpp"

namespace loralab {

const char* objective_kind_name(ObjectiveKind kind) {
    switch (kind) {
        case ObjectiveKind::sft: return "sft";
        case ObjectiveKind::dpo: return "dpo";
        case ObjectiveKind::orpo: return "orpo";
    }
    return "unknown";
}

ObjectiveKind objective_kind_from_name(const std::string& name) {
    if (name == "sft") return ObjectiveKind::sft;
    if (name == "dpo") return ObjectiveKind::dpo;
    if (name == "orpo") return ObjectiveKind::orpo;
    fail(ErrorKind::config, "unknown objective '" + name + "'");
}

void ObjectiveConfig::validate() const {
    if (!(beta > 0.0)) {
        fail(ErrorKind::config, "objective beta must be > 0");
    }
    if (orpo_weight < 0.0) {
        fail(ErrorKind::config, "orpo weight must be >= 0");
    }
}

EncodedExample encode_example(const PreferenceExample& example,
                              std::size_t max_seq) {
    if (example.chosen.empty()) {
        fail(ErrorKind::input, "encode_example: empty chosen completion");
    }
    EncodedExample enc;
    enc.prompt_ids = Tokenizer::tokenize(example.prompt);
    enc.prompt_ids.push_back(Tokenizer::kSep);
    enc.chosen_ids = Tokenizer::tokenize(example.chosen);
    enc.chosen_ids.push_back(Tokenizer::kEos);
    if (enc.prompt_ids.size() + enc.chosen_ids.size() > max_seq) {
        fail(ErrorKind::input,
             "encode_example: prompt+chosen needs " +
                 std::to_string(enc.prompt_ids.size() + enc.chosen_ids.size()) +
                 " tokens, max_seq is " + std::to_string(max_seq));
    }
    if (example.rejected) {
        auto rej = Tokenizer::tokenize(*example.rejected);
        rej.push_back(Tokenizer::kEos);
        if (enc.prompt_ids.size() + rej.size() > max_seq) {
            fail(ErrorKind::input, "encode_example: prompt+rejected exceeds max_seq");
        }
        enc.rejected_ids = std::move(rej);
    }
    return enc;
}

Tensor sft_loss(Tape& tape, const Model& model, const PreferenceExample& example) {
    const EncodedExample enc = encode_example(example, model.config.max_seq);
    std::vector<int> tokens = enc.prompt_ids;
    tokens.insert(tokens.end(), enc.chosen_ids.begin(), enc.chosen_ids.end());

    const std::size_t p = enc.prompt_ids.size();
    std::vector<int> inputs(tokens.begin(), tokens.end() - 1);
    std::vector<int> targets(tokens.begin() + 1, tokens.end());
    std::vector<int> mask(targets.size(), 0);
    for (std::size_t i = p - 1; i < targets.size(); ++i) mask[i] = 1;

    Tensor logits = model_forward(tape, model, inputs);
    return tape.softmax_cross_entropy(logits, targets, mask);
}

namespace {

LogProbNorm dpo_norm(const ObjectiveConfig& config) {
    return config.dpo_length_norm ? LogProbNorm::mean : LogProbNorm::sum;
}

void require_rejected(const PreferenceExample& example, const char* who) {
    if (!example.rejected) {
        fail(ErrorKind::objective,
             std::string(who) + ": example has no rejected completion");
    }
}

}  // namespace

Tensor dpo_loss(Tape& tape, const Model& model, const Model& ref_model,
                const PreferenceExample& example, const ObjectiveConfig& config) {
    config.validate();
    require_rejected(example, "dpo_loss");
    const EncodedExample enc = encode_example(example, model.config.max_seq);
    const LogProbNorm norm = dpo_norm(config);

    Tensor lp_chosen =
        sequence_log_prob(tape, model, enc.prompt_ids, enc.chosen_ids, norm);
    Tensor lp_rejected =
        sequence_log_prob(tape, model, enc.prompt_ids, *enc.rejected_ids, norm);
    const double ref_chosen =
        sequence_log_prob_value(ref_model, enc.prompt_ids, enc.chosen_ids, norm);
    const double ref_rejected = sequence_log_prob_value(
        ref_model, enc.prompt_ids, *enc.rejected_ids, norm);

    Tensor chosen_ratio = tape.sub(lp_chosen, Tensor::scalar(ref_chosen));
    Tensor rejected_ratio = tape.sub(lp_rejected, Tensor::scalar(ref_rejected));
    Tensor z = tape.scale(tape.sub(chosen_ratio, rejected_ratio), config.beta);
    return tape.scale(tape.log_(tape.sigmoid(z)), -1.0);
}

Tensor orpo_loss(Tape& tape, const Model& model, const PreferenceExample& example,
                 const ObjectiveConfig& config) {
    config.validate();
    require_rejected(example, "orpo_loss");
    const EncodedExample enc = encode_example(example, model.config.max_seq);
    const LogProbNorm norm =
        config.orpo_length_norm ? LogProbNorm::mean : LogProbNorm::sum;

    Tensor nll = sft_loss(tape, model, example);

    Tensor lp_chosen =
        sequence_log_prob(tape, model, enc.prompt_ids, enc.chosen_ids, norm);
    Tensor lp_rejected =
        sequence_log_prob(tape, model, enc.prompt_ids, *enc.rejected_ids, norm);
    Tensor z = tape.sub(tape.log_odds(lp_chosen), tape.log_odds(lp_rejected));
    Tensor odds_term = tape.scale(tape.log_(tape.sigmoid(z)), -1.0);
    return tape.add(nll, tape.scale(odds_term, config.orpo_weight));
}

Tensor objective_loss(Tape& tape, const Model& model, const Model* ref_model,
                      const PreferenceExample& example,
                      const ObjectiveConfig& config) {
    switch (config.kind) {
        case ObjectiveKind::sft:
            return sft_loss(tape, model, example);
        case ObjectiveKind::dpo:
            if (ref_model == nullptr) {
                fail(ErrorKind::contract, "objective_loss: dpo needs a reference model");
            }
            return dpo_loss(tape, model, *ref_model, example, config);
        case ObjectiveKind::orpo:
            return orpo_loss(tape, model, example, config);
    }
    fail(ErrorKind::contract, "objective_loss: bad kind");
}

}  // namespace loralab
