#include "loralab/trainer.hpp"

#include <cmath>

#include "loralab/adapter_io.hpp"
#include "loralab/rng.hpp"
#include "loralab/tokenizer.hpp"

namespace loralab {

void PhasePlan::validate() const {
    if (phase == PhaseKind::warmup && objective.kind != ObjectiveKind::sft) {
        fail(ErrorKind::config, "warmup phase must use the sft objective");
    }
    if (epochs < 1) {
        fail(ErrorKind::config, "epochs must be >= 1");
    }
    if (batch_size < 1) {
        fail(ErrorKind::config, "batch_size must be >= 1");
    }
    if (!(lr_max >= 0.0) || !(lr_min >= 0.0) || lr_min > lr_max) {
        fail(ErrorKind::config, "need 0 <= lr_min <= lr_max");
    }
    objective.validate();
}

AdamW::AdamW(std::vector<Tensor> params, AdamWConfig config)
    : params_(std::move(params)), config_(config) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        m_.emplace_back(p.numel(), 0.0);
        v_.emplace_back(p.numel(), 0.0);
    }
}

void AdamW::step(double lr) {
    ++step_count_;
    const double bc1 = 1.0 - std::pow(config_.beta1,
                                      static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(config_.beta2,
                                      static_cast<double>(step_count_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& p = params_[i].mutable_data();
        const bool has_grad = params_[i].has_grad();
        if (p.size() != m_[i].size() ||
            (has_grad && params_[i].grad().size() != p.size())) {
            fail(ErrorKind::contract, "adamw: parameter/gradient shape mismatch");
        }
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double g = has_grad ? params_[i].grad()[j] : 0.0;
            m_[i][j] = config_.beta1 * m_[i][j] + (1.0 - config_.beta1) * g;
            v_[i][j] = config_.beta2 * v_[i][j] + (1.0 - config_.beta2) * g * g;
            const double m_hat = m_[i][j] / bc1;
            const double v_hat = v_[i][j] / bc2;
            p[j] -= lr * (m_hat / (std::sqrt(v_hat) + config_.eps) +
                          config_.weight_decay * p[j]);
        }
    }
}

void AdamW::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

double cosine_lr(std::size_t step, std::size_t total_steps, double lr_max,
                 double lr_min) {
    if (total_steps < 1) {
        fail(ErrorKind::contract, "cosine_lr: total_steps must be >= 1");
    }
    if (step > total_steps) {
        fail(ErrorKind::contract,
             "cosine_lr: step " + std::to_string(step) + " past total " +
                 std::to_string(total_steps));
    }
    const double frac =
        static_cast<double>(step) / static_cast<double>(total_steps);
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(M_PI * frac));
}

namespace {

// Mean objective over one batch; gradients accumulate across the per-example
// tapes into the shared adapter buffers.
double batch_step(Model& model, const Model* ref,
                  const std::vector<const PreferenceExample*>& batch,
                  const ObjectiveConfig& objective) {
    const double inv = 1.0 / static_cast<double>(batch.size());
    double loss_value = 0.0;
    for (const PreferenceExample* ex : batch) {
        Tape tape;
        Tensor loss = objective_loss(tape, model, ref, *ex, objective);
        Tensor scaled = tape.scale(loss, inv);
        tape.backward(scaled);
        loss_value += scaled.item();
    }
    return loss_value;
}

}  // namespace

TrainedState run_phase(Model& model, const PhasePlan& plan, const Corpus& corpus) {
    plan.validate();
    if (corpus.size() < plan.sample_count) {
        fail(ErrorKind::data,
             "run_phase: plan needs " + std::to_string(plan.sample_count) +
                 " examples, corpus has " + std::to_string(corpus.size()));
    }

    TrainedState state;
    const std::size_t steps_per_epoch = plan.sample_count / plan.batch_size;
    const std::size_t total_steps = plan.epochs * steps_per_epoch;
    if (total_steps == 0) return state;

    // The DPO reference is the model state entering this phase.
    Model ref_snapshot;
    const Model* ref = nullptr;
    if (plan.objective.kind == ObjectiveKind::dpo) {
        ref_snapshot = model.clone();
        ref = &ref_snapshot;
    }

    AdamW optimizer(model.adapter_params());
    Rng rng(Rng::mix(plan.seed, 0x5EED));
    std::vector<std::size_t> order(plan.sample_count);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < plan.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t b = 0; b < steps_per_epoch; ++b) {
            std::vector<const PreferenceExample*> batch;
            batch.reserve(plan.batch_size);
            for (std::size_t i = 0; i < plan.batch_size; ++i) {
                batch.push_back(&corpus.at(order[b * plan.batch_size + i]));
            }
            optimizer.zero_grad();
            const double loss = batch_step(model, ref, batch, plan.objective);
            const double lr = plan.scheduler == Scheduler::cosine
                                  ? cosine_lr(step, total_steps, plan.lr_max,
                                              plan.lr_min)
                                  : plan.lr_max;
            optimizer.step(lr);
            state.trace.push_back({step, lr, loss});
            ++step;
        }
    }
    return state;
}

D2LoraResult run_d2lora(Model& model, std::size_t m, std::size_t n,
                        const PhasePlan& warmup_plan, const PhasePlan& adapt_plan,
                        const Corpus& general, const Corpus& task,
                        const std::string& checkpoint_path) {
    if (warmup_plan.phase != PhaseKind::warmup ||
        warmup_plan.sample_count != m) {
        fail(ErrorKind::contract, "run_d2lora: warmup plan must carry sample_count m");
    }
    if (adapt_plan.phase != PhaseKind::adapt || adapt_plan.sample_count != n) {
        fail(ErrorKind::contract, "run_d2lora: adapt plan must carry sample_count n");
    }
    D2LoraResult result;
    if (m > 0) {
        result.warmup = run_phase(model, warmup_plan, general);
    }
    if (!checkpoint_path.empty()) {
        save_adapters(model, checkpoint_path);
    }
    result.adapt = run_phase(model, adapt_plan, task);
    return result;
}

void lm_pretrain(Model& model, const Corpus& corpus, double lr,
                 std::size_t epochs, std::size_t batch_size,
                 std::uint64_t seed) {
    model.base.set_trainable(true);
    AdamW optimizer(model.base_params());
    Rng rng(Rng::mix(seed, 0x17E4));
    std::vector<std::size_t> order(corpus.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    const std::size_t steps_per_epoch = corpus.size() / batch_size;
    const std::size_t total_steps = epochs * steps_per_epoch;
    std::size_t step = 0;
    const double inv = 1.0 / static_cast<double>(batch_size);
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t b = 0; b < steps_per_epoch; ++b) {
            optimizer.zero_grad();
            for (std::size_t i = 0; i < batch_size; ++i) {
                const PreferenceExample& ex =
                    corpus.at(order[b * batch_size + i]);
                std::vector<int> tokens = Tokenizer::tokenize(ex.prompt);
                tokens.push_back(Tokenizer::kSep);
                const auto completion = Tokenizer::tokenize(ex.chosen);
                tokens.insert(tokens.end(), completion.begin(), completion.end());
                tokens.push_back(Tokenizer::kEos);
                if (tokens.size() > model.config.max_seq) {
                    tokens.resize(model.config.max_seq);
                }
                std::vector<int> inputs(tokens.begin(), tokens.end() - 1);
                std::vector<int> targets(tokens.begin() + 1, tokens.end());
                std::vector<int> mask(targets.size(), 1);
                Tape tape;
                Tensor logits = model_forward(tape, model, inputs);
                Tensor loss = tape.scale(
                    tape.softmax_cross_entropy(logits, targets, mask), inv);
                tape.backward(loss);
            }
            optimizer.step(cosine_lr(step, total_steps > 0 ? total_steps : 1,
                                     lr, 0.0));
            ++step;
        }
    }
    model.base.set_trainable(false);
}

}  // namespace loralab
