#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "loralab/tape.hpp"
#include "loralab/tensor.hpp"

namespace loralab {

enum class LayerRole { attn_q, attn_k, attn_v, attn_o, mlp_in, mlp_out };

const char* layer_role_name(LayerRole role);
LayerRole layer_role_from_name(const std::string& name);
inline constexpr LayerRole kAllRoles[] = {
    LayerRole::attn_q, LayerRole::attn_k,  LayerRole::attn_v,
    LayerRole::attn_o, LayerRole::mlp_in,  LayerRole::mlp_out};

struct ModelConfig {
    std::size_t vocab_size = 258;  // 256 byte ids + separator + end marker
    std::size_t d_model = 64;
    std::size_t n_layers = 2;
    std::size_t n_heads = 4;
    std::size_t d_ff = 128;
    std::size_t max_seq = 256;
    std::size_t adapter_rank = 4;
    double adapter_alpha = 4.0;
    std::vector<LayerRole> target_modules{kAllRoles, kAllRoles + 6};

    // Optional short language-model pass over a general corpus so the frozen
    // base produces byte-plausible text. 0 skips the pass.
    std::size_t pretrain_samples = 0;
    std::size_t pretrain_epochs = 1;
    double pretrain_lr = 1e-3;
    std::size_t pretrain_batch = 16;

    std::size_t head_dim() const { return d_model / n_heads; }
    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

struct LinearWeights {
    Tensor w;  // [d_out x d_in]
    Tensor b;  // [d_out]
};

struct LayerWeights {
    Tensor ln1_gain, ln1_bias;
    LinearWeights attn_q, attn_k, attn_v, attn_o;
    Tensor ln2_gain, ln2_bias;
    LinearWeights mlp_in, mlp_out;

    LinearWeights& linear(LayerRole role);
    const LinearWeights& linear(LayerRole role) const;
};

// Frozen transformer weights; bit-identical before and after any training
// run (content_hash pins the invariant).
struct BaseWeights {
    Tensor tok_embedding;  // [V x d]
    Tensor pos_embedding;  // [max_seq x d]
    std::vector<LayerWeights> layers;
    Tensor final_gain, final_bias;
    Tensor output_proj;  // [V x d]

    void set_trainable(bool trainable);
    void for_each(const std::function<void(Tensor&)>& fn);
    void for_each(const std::function<void(const Tensor&)>& fn) const;
    std::uint64_t content_hash() const;
    BaseWeights clone() const;
};

struct LoraAdapter {
    std::size_t layer = 0;
    LayerRole role = LayerRole::attn_q;
    Tensor a;  // [d_out x r]
    Tensor b;  // [r x d_in]
    std::size_t rank = 0;
    double alpha = 0.0;

    std::string tag() const;
    std::size_t d_out() const { return a.rows(); }
    std::size_t d_in() const { return b.cols(); }
    std::size_t param_count() const { return rank * (d_out() + d_in()); }
    double scaling() const { return alpha / static_cast<double>(rank); }
    LoraAdapter clone() const;
};

// Covers exactly the config's target modules in every layer, layer-major in
// role order.
struct AdapterSet {
    std::vector<LoraAdapter> adapters;

    LoraAdapter* find(std::size_t layer, LayerRole role);
    const LoraAdapter* find(std::size_t layer, LayerRole role) const;
    std::size_t param_count() const;
    AdapterSet clone() const;
    bool empty() const { return adapters.empty(); }
};

struct Model {
    ModelConfig config;
    BaseWeights base;
    AdapterSet adapters;
    std::uint64_t build_seed = 0;

    Model clone() const;
    std::vector<Tensor> adapter_params();
    std::vector<Tensor> base_params();
};

// Base weights drawn from a scaled Gaussian; when config.pretrain_samples > 0
// a short language-model pass over the general corpus follows (seeded from
// the same seed). The base comes back frozen, adapters sized per config with
// zero factors.
Model build_model(const ModelConfig& config, std::uint64_t seed);

// Causal logits [T x V]. Adapted linears compute x(W + (alpha/r) A B)^T via
// the low-rank path.
Tensor model_forward(Tape& tape, const Model& model,
                     const std::vector<int>& tokens);

// Weights become W + (alpha/r) A B and the adapters are dropped; the source
// model is untouched.
Model merge(const Model& model);

enum class LogProbNorm { sum, mean };

// Log-probability of the completion conditioned on prompt + preceding
// completion tokens; prompt positions are excluded. Differentiable when the
// tape records.
Tensor sequence_log_prob(Tape& tape, const Model& model,
                         const std::vector<int>& prompt,
                         const std::vector<int>& completion, LogProbNorm norm);

double sequence_log_prob_value(const Model& model,
                               const std::vector<int>& prompt,
                               const std::vector<int>& completion,
                               LogProbNorm norm);

// Greedy argmax continuation (ties break toward the lowest id). Stops at the
// cap or on the first reserved id, which is not included in the output.
// stop_text, when non-empty, ends generation once the decoded bytes contain
// it (the match is kept).
std::vector<int> greedy_decode(const Model& model,
                               const std::vector<int>& prompt,
                               std::size_t max_new_tokens,
                               const std::string& stop_text = "");

}  // namespace loralab
