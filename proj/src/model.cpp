#include "loralab/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "loralab/datagen.hpp"
#include "loralab/kernels.hpp"
#include "loralab/rng.hpp"
#include "loralab/trainer.hpp"

namespace loralab {

namespace {

Tensor gaussian_tensor(Shape shape, double stddev, Rng& rng) {
    const std::size_t n = shape_numel(shape);
    std::vector<double> data(n);
    for (std::size_t i = 0; i < n; ++i) data[i] = rng.gaussian(0.0, stddev);
    return Tensor::from_data(std::move(shape), std::move(data));
}

Tensor const_tensor(Shape shape, double value) {
    const std::size_t n = shape_numel(shape);
    return Tensor::from_data(std::move(shape), std::vector<double>(n, value));
}

constexpr double kBaseInitStd = 0.02;

std::pair<std::size_t, std::size_t> role_dims(const ModelConfig& cfg,
                                              LayerRole role) {
    switch (role) {
        case LayerRole::attn_q:
        case LayerRole::attn_k:
        case LayerRole::attn_v:
        case LayerRole::attn_o:
            return {cfg.d_model, cfg.d_model};
        case LayerRole::mlp_in:
            return {cfg.d_ff, cfg.d_model};
        case LayerRole::mlp_out:
            return {cfg.d_model, cfg.d_ff};
    }
    fail(ErrorKind::contract, "role_dims: bad role");
}

void hash_bytes(std::uint64_t& h, const void* p, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= bytes[i];
        h *= 0x100000001B3ull;  // FNV-1a
    }
}

Tensor adapted_linear(Tape& tape, const Model& model, const Tensor& x,
                      std::size_t layer, LayerRole role) {
    const LinearWeights& lw = model.base.layers[layer].linear(role);
    Tensor y = tape.add_rowvec(tape.matmul_nt(x, lw.w), lw.b);
    if (const LoraAdapter* ad = model.adapters.find(layer, role)) {
        Tensor u = tape.matmul_nt(x, ad->b);        // [T x r]
        Tensor lowrank = tape.matmul_nt(u, ad->a);  // [T x d_out]
        y = tape.add(y, tape.scale(lowrank, ad->scaling()));
    }
    return y;
}

}  // namespace

const char* layer_role_name(LayerRole role) {
    switch (role) {
        case LayerRole::attn_q: return "attn_q";
        case LayerRole::attn_k: return "attn_k";
        case LayerRole::attn_v: return "attn_v";
        case LayerRole::attn_o: return "attn_o";
        case LayerRole::mlp_in: return "mlp_in";
        case LayerRole::mlp_out: return "mlp_out";
    }
    return "unknown";
}

LayerRole layer_role_from_name(const std::string& name) {
    for (LayerRole role : kAllRoles) {
        if (name == layer_role_name(role)) return role;
    }
    fail(ErrorKind::config, "unknown layer role '" + name + "'");
}

void ModelConfig::validate() const {
    if (vocab_size < 2) {
        fail(ErrorKind::config, "vocab_size must be >= 2");
    }
    if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0) {
        fail(ErrorKind::config,
             "d_model " + std::to_string(d_model) + " not divisible by n_heads " +
                 std::to_string(n_heads));
    }
    if (d_ff == 0) {
        fail(ErrorKind::config, "d_ff must be positive");
    }
    if (max_seq < 2) {
        fail(ErrorKind::config, "max_seq must be >= 2");
    }
    const std::size_t rank_cap = std::min(d_model, d_ff);
    if (adapter_rank < 1 || adapter_rank > rank_cap) {
        fail(ErrorKind::config, "adapter_rank " + std::to_string(adapter_rank) +
                                    " outside [1, " + std::to_string(rank_cap) +
                                    "]");
    }
    if (!(adapter_alpha > 0.0)) {
        fail(ErrorKind::config, "adapter_alpha must be positive");
    }
    if (target_modules.empty()) {
        fail(ErrorKind::config, "target_modules must be non-empty");
    }
    for (std::size_t i = 0; i < target_modules.size(); ++i) {
        for (std::size_t j = i + 1; j < target_modules.size(); ++j) {
            if (target_modules[i] == target_modules[j]) {
                fail(ErrorKind::config,
                     std::string("duplicate target module ") +
                         layer_role_name(target_modules[i]));
            }
        }
    }
    if (pretrain_samples > 0 && (pretrain_batch == 0 || pretrain_epochs == 0)) {
        fail(ErrorKind::config, "pretrain batch/epochs must be >= 1");
    }
}

LinearWeights& LayerWeights::linear(LayerRole role) {
    switch (role) {
        case LayerRole::attn_q: return attn_q;
        case LayerRole::attn_k: return attn_k;
        case LayerRole::attn_v: return attn_v;
        case LayerRole::attn_o: return attn_o;
        case LayerRole::mlp_in: return mlp_in;
        case LayerRole::mlp_out: return mlp_out;
    }
    fail(ErrorKind::contract, "linear: bad role");
}

const LinearWeights& LayerWeights::linear(LayerRole role) const {
    return const_cast<LayerWeights*>(this)->linear(role);
}

void BaseWeights::for_each(const std::function<void(Tensor&)>& fn) {
    fn(tok_embedding);
    fn(pos_embedding);
    for (auto& layer : layers) {
        fn(layer.ln1_gain);
        fn(layer.ln1_bias);
        for (LayerRole role : kAllRoles) {
            fn(layer.linear(role).w);
            fn(layer.linear(role).b);
        }
        fn(layer.ln2_gain);
        fn(layer.ln2_bias);
    }
    fn(final_gain);
    fn(final_bias);
    fn(output_proj);
}

void BaseWeights::for_each(const std::function<void(const Tensor&)>& fn) const {
    const_cast<BaseWeights*>(this)->for_each(
        [&fn](Tensor& t) { fn(t); });
}

void BaseWeights::set_trainable(bool trainable) {
    for_each([trainable](Tensor& t) { t.set_requires_grad(trainable); });
}

std::uint64_t BaseWeights::content_hash() const {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for_each([&h](const Tensor& t) {
        hash_bytes(h, t.data().data(), t.data().size() * sizeof(double));
    });
    return h;
}

BaseWeights BaseWeights::clone() const {
    BaseWeights out;
    out.tok_embedding = tok_embedding.clone();
    out.pos_embedding = pos_embedding.clone();
    out.layers.reserve(layers.size());
    for (const auto& layer : layers) {
        LayerWeights lw;
        lw.ln1_gain = layer.ln1_gain.clone();
        lw.ln1_bias = layer.ln1_bias.clone();
        lw.ln2_gain = layer.ln2_gain.clone();
        lw.ln2_bias = layer.ln2_bias.clone();
        for (LayerRole role : kAllRoles) {
            lw.linear(role).w = layer.linear(role).w.clone();
            lw.linear(role).b = layer.linear(role).b.clone();
        }
        out.layers.push_back(std::move(lw));
    }
    out.final_gain = final_gain.clone();
    out.final_bias = final_bias.clone();
    out.output_proj = output_proj.clone();
    return out;
}

std::string LoraAdapter::tag() const {
    return "layer" + std::to_string(layer) + "." + layer_role_name(role);
}

LoraAdapter LoraAdapter::clone() const {
    LoraAdapter out = *this;
    out.a = a.clone();
    out.b = b.clone();
    return out;
}

LoraAdapter* AdapterSet::find(std::size_t layer, LayerRole role) {
    for (auto& ad : adapters) {
        if (ad.layer == layer && ad.role == role) return &ad;
    }
    return nullptr;
}

const LoraAdapter* AdapterSet::find(std::size_t layer, LayerRole role) const {
    return const_cast<AdapterSet*>(this)->find(layer, role);
}

std::size_t AdapterSet::param_count() const {
    std::size_t n = 0;
    for (const auto& ad : adapters) n += ad.param_count();
    return n;
}

AdapterSet AdapterSet::clone() const {
    AdapterSet out;
    out.adapters.reserve(adapters.size());
    for (const auto& ad : adapters) out.adapters.push_back(ad.clone());
    return out;
}

Model Model::clone() const {
    Model out;
    out.config = config;
    out.base = base.clone();
    out.adapters = adapters.clone();
    out.build_seed = build_seed;
    return out;
}

std::vector<Tensor> Model::adapter_params() {
    std::vector<Tensor> params;
    params.reserve(adapters.adapters.size() * 2);
    for (auto& ad : adapters.adapters) {
        params.push_back(ad.a);
        params.push_back(ad.b);
    }
    return params;
}

std::vector<Tensor> Model::base_params() {
    std::vector<Tensor> params;
    base.for_each([&params](Tensor& t) { params.push_back(t); });
    return params;
}

Model build_model(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(Rng::mix(seed, 0xB00F));

    Model model;
    model.config = config;
    model.build_seed = seed;

    BaseWeights& base = model.base;
    base.tok_embedding =
        gaussian_tensor({config.vocab_size, config.d_model}, kBaseInitStd, rng);
    base.pos_embedding =
        gaussian_tensor({config.max_seq, config.d_model}, kBaseInitStd, rng);
    base.layers.resize(config.n_layers);
    for (auto& layer : base.layers) {
        layer.ln1_gain = const_tensor({config.d_model}, 1.0);
        layer.ln1_bias = const_tensor({config.d_model}, 0.0);
        layer.ln2_gain = const_tensor({config.d_model}, 1.0);
        layer.ln2_bias = const_tensor({config.d_model}, 0.0);
        for (LayerRole role : kAllRoles) {
            const auto [d_out, d_in] = role_dims(config, role);
            layer.linear(role).w =
                gaussian_tensor({d_out, d_in}, kBaseInitStd, rng);
            layer.linear(role).b = const_tensor({d_out}, 0.0);
        }
    }
    base.final_gain = const_tensor({config.d_model}, 1.0);
    base.final_bias = const_tensor({config.d_model}, 0.0);
    base.output_proj =
        gaussian_tensor({config.vocab_size, config.d_model}, kBaseInitStd, rng);

    if (config.pretrain_samples > 0) {
        const Corpus general =
            gen_corpus(CorpusKind::general, config.pretrain_samples,
                       Rng::mix(seed, 0xBA5E));
        lm_pretrain(model, general, config.pretrain_lr, config.pretrain_epochs,
                    config.pretrain_batch, Rng::mix(seed, 0x12E7));
    }
    base.set_trainable(false);

    // Adapters cover exactly the target modules; factors start at zero and
    // the init schemes fill them in.
    for (std::size_t l = 0; l < config.n_layers; ++l) {
        for (LayerRole role : kAllRoles) {
            if (std::find(config.target_modules.begin(),
                          config.target_modules.end(),
                          role) == config.target_modules.end()) {
                continue;
            }
            const auto [d_out, d_in] = role_dims(config, role);
            LoraAdapter ad;
            ad.layer = l;
            ad.role = role;
            ad.rank = config.adapter_rank;
            ad.alpha = config.adapter_alpha;
            ad.a = Tensor::zeros({d_out, config.adapter_rank});
            ad.b = Tensor::zeros({config.adapter_rank, d_in});
            ad.a.set_requires_grad(true);
            ad.b.set_requires_grad(true);
            model.adapters.adapters.push_back(std::move(ad));
        }
    }
    return model;
}

Tensor model_forward(Tape& tape, const Model& model,
                     const std::vector<int>& tokens) {
    const ModelConfig& cfg = model.config;
    if (tokens.empty()) {
        fail(ErrorKind::input, "forward: empty token sequence");
    }
    if (tokens.size() > cfg.max_seq) {
        fail(ErrorKind::input, "forward: sequence length " +
                                   std::to_string(tokens.size()) +
                                   " exceeds max_seq " +
                                   std::to_string(cfg.max_seq));
    }
    const std::size_t t = tokens.size();
    const std::size_t hd = cfg.head_dim();
    const double attn_scale = 1.0 / std::sqrt(static_cast<double>(hd));

    Tensor x = tape.embedding_lookup(model.base.tok_embedding, tokens);
    x = tape.add(x, tape.row_slice(model.base.pos_embedding, 0, t));

    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        const LayerWeights& layer = model.base.layers[l];
        Tensor h = tape.layer_norm(x, layer.ln1_gain, layer.ln1_bias);
        Tensor q = adapted_linear(tape, model, h, l, LayerRole::attn_q);
        Tensor k = adapted_linear(tape, model, h, l, LayerRole::attn_k);
        Tensor v = adapted_linear(tape, model, h, l, LayerRole::attn_v);

        std::vector<Tensor> heads;
        heads.reserve(cfg.n_heads);
        for (std::size_t i = 0; i < cfg.n_heads; ++i) {
            Tensor qh = tape.col_slice(q, i * hd, (i + 1) * hd);
            Tensor kh = tape.col_slice(k, i * hd, (i + 1) * hd);
            Tensor vh = tape.col_slice(v, i * hd, (i + 1) * hd);
            Tensor scores = tape.scale(tape.matmul_nt(qh, kh), attn_scale);
            Tensor probs = tape.causal_softmax(scores);
            heads.push_back(tape.matmul(probs, vh));
        }
        Tensor attn = tape.concat_cols(heads);
        attn = adapted_linear(tape, model, attn, l, LayerRole::attn_o);
        x = tape.add(x, attn);

        Tensor h2 = tape.layer_norm(x, layer.ln2_gain, layer.ln2_bias);
        Tensor mlp = tape.relu(adapted_linear(tape, model, h2, l, LayerRole::mlp_in));
        mlp = adapted_linear(tape, model, mlp, l, LayerRole::mlp_out);
        x = tape.add(x, mlp);
    }
    x = tape.layer_norm(x, model.base.final_gain, model.base.final_bias);
    return tape.matmul_nt(x, model.base.output_proj);
}

Model merge(const Model& model) {
    Model merged;
    merged.config = model.config;
    merged.base = model.base.clone();
    merged.build_seed = model.build_seed;
    for (const auto& ad : model.adapters.adapters) {
        Tensor& w = merged.base.layers[ad.layer].linear(ad.role).w;
        const std::size_t d_out = ad.d_out(), d_in = ad.d_in();
        std::vector<double> delta(d_out * d_in, 0.0);
        kernels::gemm_nn(d_out, ad.rank, d_in, ad.a.data().data(),
                         ad.b.data().data(), delta.data(), false);
        const double s = ad.scaling();
        auto& data = w.mutable_data();
        for (std::size_t i = 0; i < delta.size(); ++i) {
            // Skipping exact zeros keeps untouched weights bit-identical.
            if (delta[i] != 0.0) data[i] += s * delta[i];
        }
    }
    merged.base.set_trainable(false);
    return merged;
}

Tensor sequence_log_prob(Tape& tape, const Model& model,
                         const std::vector<int>& prompt,
                         const std::vector<int>& completion, LogProbNorm norm) {
    if (completion.empty()) {
        fail(ErrorKind::input, "sequence_log_prob: empty completion");
    }
    if (prompt.empty()) {
        fail(ErrorKind::input, "sequence_log_prob: empty prompt");
    }
    const std::size_t total = prompt.size() + completion.size();
    if (total > model.config.max_seq) {
        fail(ErrorKind::input,
             "sequence_log_prob: sequence length " + std::to_string(total) +
                 " exceeds max_seq " + std::to_string(model.config.max_seq));
    }
    std::vector<int> tokens = prompt;
    tokens.insert(tokens.end(), completion.begin(), completion.end());
    tokens.pop_back();  // the final token predicts nothing

    Tensor logits = model_forward(tape, model, tokens);
    Tensor ls = tape.log_softmax(logits);

    const std::size_t p = prompt.size(), c = completion.size();
    std::vector<std::size_t> rows(c), cols(c);
    for (std::size_t i = 0; i < c; ++i) {
        rows[i] = p - 1 + i;
        cols[i] = static_cast<std::size_t>(completion[i]);
    }
    Tensor picked = tape.gather_pairs(ls, rows, cols);
    Tensor total_lp = tape.sum(picked);
    if (norm == LogProbNorm::mean) {
        return tape.scale(total_lp, 1.0 / static_cast<double>(c));
    }
    return total_lp;
}

double sequence_log_prob_value(const Model& model,
                               const std::vector<int>& prompt,
                               const std::vector<int>& completion,
                               LogProbNorm norm) {
    Tape tape(false);
    return sequence_log_prob(tape, model, prompt, completion, norm).item();
}

std::vector<int> greedy_decode(const Model& model,
                               const std::vector<int>& prompt,
                               std::size_t max_new_tokens,
                               const std::string& stop_text) {
    if (prompt.empty()) {
        fail(ErrorKind::input, "greedy_decode: empty prompt");
    }
    std::vector<int> tokens = prompt;
    std::vector<int> generated;
    std::string text;
    while (generated.size() < max_new_tokens &&
           tokens.size() <= model.config.max_seq) {
        Tape tape(false);
        Tensor logits = model_forward(tape, model, tokens);
        const std::size_t v = logits.cols();
        const double* row = logits.data().data() + (logits.rows() - 1) * v;
        std::size_t best = 0;
        for (std::size_t j = 1; j < v; ++j) {
            if (row[j] > row[best]) best = j;
        }
        const int id = static_cast<int>(best);
        if (id > 255) break;  // reserved id terminates generation
        generated.push_back(id);
        tokens.push_back(id);
        if (!stop_text.empty()) {
            text.push_back(static_cast<char>(static_cast<unsigned char>(id)));
            if (text.size() >= stop_text.size() &&
                text.find(stop_text, text.size() - stop_text.size()) !=
                    std::string::npos) {
                break;
            }
        }
    }
    return generated;
}

}  // namespace loralab
