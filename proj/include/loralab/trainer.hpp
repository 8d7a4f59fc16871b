#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "loralab/datagen.hpp"
#include "loralab/model.hpp"
#include "loralab/objectives.hpp"

namespace loralab {

enum class PhaseKind { warmup, adapt };
enum class Scheduler { cosine, constant };

struct PhasePlan {
    PhaseKind phase = PhaseKind::adapt;
    std::size_t sample_count = 0;  // m for warmup, n for adaptation
    ObjectiveConfig objective;
    double lr_max = 3e-4;
    double lr_min = 0.0;
    std::size_t epochs = 2;
    std::size_t batch_size = 16;
    std::uint64_t seed = 0;
    Scheduler scheduler = Scheduler::cosine;

    void validate() const;
};

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

// Decoupled weight-decay Adam with bias correction; only the tensors handed
// in are ever updated.
class AdamW {
public:
    AdamW(std::vector<Tensor> params, AdamWConfig config = {});

    void step(double lr);
    void zero_grad();
    std::size_t step_count() const { return step_count_; }

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    AdamWConfig config_;
    std::size_t step_count_ = 0;
};

// lr_min + 0.5 (lr_max - lr_min) (1 + cos(pi step / total)).
double cosine_lr(std::size_t step, std::size_t total_steps, double lr_max,
                 double lr_min);

struct StepTrace {
    std::size_t step = 0;
    double lr = 0.0;
    double loss = 0.0;
};

struct TrainedState {
    std::vector<StepTrace> trace;
    std::size_t steps() const { return trace.size(); }
};

// One training phase over the first sample_count corpus examples:
// seeded shuffle per epoch, fixed batches with the incomplete tail dropped,
// AdamW on the adapter parameters only. Deterministic given the plan seed.
TrainedState run_phase(Model& model, const PhasePlan& plan, const Corpus& corpus);

struct D2LoraResult {
    TrainedState warmup;
    TrainedState adapt;
};

// Warm-up on m general examples, checkpoint, then task adaptation on n
// examples from the warm-up state. m = 0 skips the warm-up entirely, which
// reproduces vanilla LoRA bit-for-bit under equal seeds.
// checkpoint_path, when non-empty, receives the warm-up adapters.
D2LoraResult run_d2lora(Model& model, std::size_t m, std::size_t n,
                        const PhasePlan& warmup_plan,
                        const PhasePlan& adapt_plan, const Corpus& general,
                        const Corpus& task,
                        const std::string& checkpoint_path = "");

// Short language-model pass over a corpus (prompt and completion both
// predicted); updates base weights, used only while building the base model.
void lm_pretrain(Model& model, const Corpus& corpus, double lr,
                 std::size_t epochs, std::size_t batch_size,
                 std::uint64_t seed);

}  // namespace loralab
