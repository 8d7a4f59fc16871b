#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "loralab/init.hpp"
#include "loralab/model.hpp"
#include "loralab/objectives.hpp"

namespace loralab {

// One evaluation point. (experiment, method, scheme, m, n, seed, metric) is
// unique within a metrics file; wall_time is excluded from determinism
// comparisons.
struct MetricsRecord {
    std::string experiment;
    std::string method;
    std::string scheme;
    std::size_t m = 0;
    std::size_t n = 0;
    std::uint64_t seed = 0;
    std::string metric;
    double value = 0.0;
    double wall_time = 0.0;
};

nlohmann::json record_to_json(const MetricsRecord& record);
MetricsRecord record_from_json(const nlohmann::json& j);

void write_metrics_jsonl(const std::vector<MetricsRecord>& records,
                         const std::string& path);
std::vector<MetricsRecord> read_metrics_jsonl(const std::string& path);

// "<dir>/<base>_metrics.jsonl", falling back to .2, .3, ... so reruns append
// a new file and never mutate an existing one.
std::string unique_metrics_path(const std::string& dir, const std::string& base);

struct ExperimentSpec {
    std::string experiment = "effectiveness";  // data_scaling | effectiveness
                                               // | forgetting | scarce
    std::vector<ObjectiveKind> methods{ObjectiveKind::sft};
    std::vector<InitScheme> init_schemes{InitScheme::vanilla};
    std::vector<std::size_t> n_grid{100, 200, 500, 1000, 2000};
    std::size_t m = 2000;
    std::vector<std::uint64_t> seeds{1, 2, 3};
    std::string task = "math";  // math | title

    ModelConfig model;
    std::uint64_t model_seed = 7;

    double warmup_lr = 1e-4;
    std::size_t warmup_epochs = 1;
    double task_lr = 3e-4;
    std::size_t sft_epochs = 2;
    std::size_t dpo_epochs = 2;
    std::size_t orpo_epochs = 2;
    std::size_t batch_size = 16;
    double beta = 0.1;
    double orpo_weight = 0.1;
    std::size_t eval_samples = 100;
    std::size_t mcq_probe_samples = 200;
    std::string out_dir = "out";

    ExperimentSpec();

    void validate() const;
    nlohmann::json to_json() const;
    static ExperimentSpec from_json(const nlohmann::json& j);

    // Full-scale preset: rank 16, alpha 16, warm-up lr 1e-7 for 1 epoch,
    // task lr 1e-6, sft 3 epochs, dpo/orpo 4 epochs, beta 0.1.
    void apply_paper_scale();

    std::size_t epochs_for(ObjectiveKind kind) const;
};

struct ExperimentResult {
    std::string metrics_path;
    std::string manifest_path;
    std::vector<MetricsRecord> records;
};

ExperimentResult run_data_scaling(const ExperimentSpec& spec);
ExperimentResult run_effectiveness(const ExperimentSpec& spec);
ExperimentResult run_forgetting(const ExperimentSpec& spec);
ExperimentResult run_scarce(const ExperimentSpec& spec);

// Dispatch on spec.experiment.
ExperimentResult run_experiment(const ExperimentSpec& spec);

}  // namespace loralab
