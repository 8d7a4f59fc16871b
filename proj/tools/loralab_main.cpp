#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "loralab/adapter_io.hpp"
#include "loralab/datagen.hpp"
#include "loralab/experiments.hpp"
#include "loralab/init.hpp"
#include "loralab/metrics.hpp"
#include "loralab/plot.hpp"
#include "loralab/rng.hpp"
#include "loralab/trainer.hpp"

namespace {

using loralab::ErrorKind;
using nlohmann::json;

std::string default_out_root() {
    const char* env = std::getenv("LORALAB_OUT");
    return env != nullptr ? env : "out";
}

loralab::ExperimentSpec load_spec(const std::string& config_path,
                                  std::optional<std::uint64_t> seed,
                                  const std::string& out_dir, bool paper_scale) {
    loralab::ExperimentSpec spec;
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) {
            loralab::fail(ErrorKind::io,
                          "cannot open config '" + config_path + "'");
        }
        json j;
        try {
            j = json::parse(in);
        } catch (const json::parse_error& e) {
            loralab::fail(ErrorKind::parse,
                          std::string("config: ") + e.what());
        }
        spec = loralab::ExperimentSpec::from_json(j);
    } else {
        spec.out_dir = default_out_root();
    }
    if (paper_scale) spec.apply_paper_scale();
    if (seed) spec.seeds = {*seed};
    if (!out_dir.empty()) spec.out_dir = out_dir;
    return spec;
}

loralab::Corpus corpus_for(const std::string& task, std::size_t size,
                           std::uint64_t seed, const std::string& data_path,
                           const std::string& schema) {
    if (!data_path.empty()) {
        const auto s = schema == "econ_title" ? loralab::JsonlSchema::econ_title
                                              : loralab::JsonlSchema::step_dpo;
        return loralab::load_jsonl(data_path, s);
    }
    return loralab::gen_corpus(loralab::corpus_kind_from_name(task), size, seed);
}

void print_reports(const std::vector<loralab::EvalReport>& reports,
                   const std::string& out_path) {
    std::ostream* os = &std::cout;
    std::ofstream file;
    if (!out_path.empty()) {
        file.open(out_path);
        os = &file;
    }
    for (const auto& rep : reports) {
        *os << json{{"task", loralab::task_tag_name(rep.task_tag)},
                    {"metric", rep.metric},
                    {"value", rep.value},
                    {"sample_count", rep.sample_count},
                    {"seed", rep.seed}}
                   .dump()
            << "\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale LoRA fine-tuning laboratory"};
    app.require_subcommand(1);

    std::string config_path, out_path, data_path, schema = "step_dpo";
    std::optional<std::uint64_t> seed_flag;
    bool paper_scale = false;

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "emit a synthetic corpus as JSONL");
    std::string gen_kind = "math";
    std::size_t gen_size = 100;
    std::uint64_t gen_seed = 1;
    std::string gen_out = "corpus.jsonl";
    gen->add_option("--kind", gen_kind, "math|title|general|mcq");
    gen->add_option("--size", gen_size, "number of examples");
    gen->add_option("--seed", gen_seed, "generator seed");
    gen->add_option("--out", gen_out, "output path");

    // warmup
    auto* warm = app.add_subcommand("warmup",
                                    "train warm-up adapters on the general mix");
    warm->add_option("--config", config_path, "experiment config JSON");
    warm->add_option("--seed", seed_flag, "seed override");
    warm->add_option("--out", out_path, "checkpoint path");
    warm->add_flag("--paper-scale", paper_scale, "use the full-scale presets");

    // train
    auto* train = app.add_subcommand("train", "run one task-adaptation phase");
    std::string init_name = "vanilla", from_ckpt, method_name = "sft",
                trace_path;
    std::size_t train_n = 100;
    train->add_option("--config", config_path, "experiment config JSON");
    train->add_option("--init", init_name, "vanilla|kaiming|pissa|olora|d2lora");
    train->add_option("--from", from_ckpt, "warm-up checkpoint (d2lora)");
    train->add_option("--method", method_name, "sft|dpo|orpo");
    train->add_option("--n", train_n, "task sample count");
    train->add_option("--seed", seed_flag, "seed override");
    train->add_option("--data", data_path, "JSONL corpus instead of synthetic");
    train->add_option("--schema", schema, "step_dpo|econ_title");
    train->add_option("--out", out_path, "adapter checkpoint path");
    train->add_option("--trace", trace_path, "write per-step loss trace JSONL");
    train->add_flag("--paper-scale", paper_scale, "use the full-scale presets");

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate adapters on a task");
    std::string adapters_path, eval_task = "math";
    std::size_t eval_samples = 0;
    eval->add_option("--config", config_path, "experiment config JSON");
    eval->add_option("--adapters", adapters_path, "adapter checkpoint");
    eval->add_option("--task", eval_task, "math|title|mcq");
    eval->add_option("--samples", eval_samples, "eval set size override");
    eval->add_option("--data", data_path, "JSONL corpus instead of synthetic");
    eval->add_option("--schema", schema, "step_dpo|econ_title");
    eval->add_option("--out", out_path, "report path (default stdout)");
    eval->add_flag("--paper-scale", paper_scale, "use the full-scale presets");

    // sweep
    auto* sweep = app.add_subcommand("sweep", "run an experiment sweep");
    std::string experiment = "effectiveness";
    sweep->add_option("experiment", experiment,
                      "data_scaling|effectiveness|forgetting|scarce");
    sweep->add_option("--config", config_path, "experiment config JSON");
    sweep->add_option("--seed", seed_flag, "single-seed override");
    sweep->add_option("--out", out_path, "output directory");
    sweep->add_flag("--paper-scale", paper_scale, "use the full-scale presets");

    // plot
    auto* plot = app.add_subcommand("plot", "render a metrics file as SVG");
    std::string metrics_path, plot_metric = "exact_match",
                plot_out = "plot.svg";
    plot->add_option("--metrics", metrics_path, "metrics JSONL file")
        ->required();
    plot->add_option("--kind", plot_metric,
                     "metric to plot (exact_match, rouge_l_f1, mcq_accuracy)");
    plot->add_option("--out", plot_out, "output SVG path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            const auto corpus = loralab::gen_corpus(
                loralab::corpus_kind_from_name(gen_kind), gen_size, gen_seed);
            loralab::save_jsonl(corpus, gen_out);
            std::cout << "wrote " << corpus.size() << " examples to " << gen_out
                      << "\n";
        } else if (warm->parsed()) {
            auto spec = load_spec(config_path, seed_flag, "", paper_scale);
            const std::uint64_t seed = spec.seeds.front();
            loralab::Model model =
                loralab::build_model(spec.model, spec.model_seed);
            loralab::apply_init(model, {loralab::InitScheme::vanilla, seed, ""});
            const auto general = loralab::gen_corpus(
                loralab::CorpusKind::general, spec.m,
                loralab::Rng::mix(seed, 0x93E4));
            loralab::PhasePlan plan;
            plan.phase = loralab::PhaseKind::warmup;
            plan.sample_count = spec.m;
            plan.lr_max = spec.warmup_lr;
            plan.epochs = spec.warmup_epochs;
            plan.batch_size = spec.batch_size;
            plan.seed = seed;
            loralab::run_phase(model, plan, general);
            const std::string ckpt =
                out_path.empty() ? default_out_root() + "/warmup.ckpt" : out_path;
            loralab::save_adapters(model, ckpt,
                                   "warmup seed=" + std::to_string(seed));
            std::cout << "saved warm-up adapters to " << ckpt << "\n";
        } else if (train->parsed()) {
            auto spec = load_spec(config_path, seed_flag, "", paper_scale);
            const std::uint64_t seed = spec.seeds.front();
            loralab::Model model =
                loralab::build_model(spec.model, spec.model_seed);
            const auto scheme = loralab::init_scheme_from_name(init_name);
            loralab::apply_init(model, {scheme, seed, from_ckpt});
            const auto method = loralab::objective_kind_from_name(method_name);
            const auto corpus = corpus_for(spec.task, train_n,
                                           loralab::Rng::mix(seed, 0x7A51),
                                           data_path, schema);
            loralab::PhasePlan plan;
            plan.phase = loralab::PhaseKind::adapt;
            plan.sample_count = train_n;
            plan.objective.kind = method;
            plan.objective.beta = spec.beta;
            plan.objective.orpo_weight = spec.orpo_weight;
            plan.lr_max = spec.task_lr;
            plan.epochs = spec.epochs_for(method);
            plan.batch_size = spec.batch_size;
            plan.seed = seed;
            const auto state = loralab::run_phase(model, plan, corpus);
            const std::string ckpt =
                out_path.empty() ? default_out_root() + "/adapters.ckpt"
                                 : out_path;
            loralab::save_adapters(model, ckpt,
                                   "train seed=" + std::to_string(seed));
            if (!trace_path.empty()) {
                std::ofstream tf(trace_path);
                for (const auto& t : state.trace) {
                    tf << json{{"step", t.step}, {"lr", t.lr}, {"loss", t.loss}}
                              .dump()
                       << "\n";
                }
            }
            std::cout << "trained " << state.steps() << " steps; saved " << ckpt
                      << "\n";
        } else if (eval->parsed()) {
            auto spec = load_spec(config_path, seed_flag, "", paper_scale);
            loralab::Model model =
                loralab::build_model(spec.model, spec.model_seed);
            if (!adapters_path.empty()) {
                loralab::attach_adapters(model,
                                         loralab::load_adapters(adapters_path));
            }
            const std::size_t samples =
                eval_samples > 0 ? eval_samples : spec.eval_samples;
            std::vector<loralab::EvalReport> reports;
            if (eval_task == "math") {
                const auto corpus =
                    corpus_for("math", samples, 0xE7A1001, data_path, schema);
                reports.push_back(loralab::exact_match_accuracy(model, corpus));
            } else if (eval_task == "title") {
                const auto corpus =
                    corpus_for("title", samples, 0xE7A1002, data_path, schema);
                reports = loralab::rouge_eval(model, corpus);
            } else if (eval_task == "mcq") {
                const auto corpus = loralab::gen_corpus(loralab::CorpusKind::mcq,
                                                        samples, 0xE7A1003);
                reports.push_back(loralab::mcq_accuracy(model, corpus));
            } else {
                loralab::fail(ErrorKind::config,
                              "unknown eval task '" + eval_task + "'");
            }
            print_reports(reports, out_path);
        } else if (sweep->parsed()) {
            auto spec = load_spec(config_path, seed_flag,
                                  out_path.empty() ? default_out_root()
                                                   : out_path,
                                  paper_scale);
            spec.experiment = experiment;
            const auto result = loralab::run_experiment(spec);
            std::cout << "metrics: " << result.metrics_path << "\n"
                      << "manifest: " << result.manifest_path << "\n"
                      << "records: " << result.records.size() << "\n";
        } else if (plot->parsed()) {
            loralab::emit_plot(metrics_path, plot_metric, plot_out);
            std::cout << "wrote " << plot_out << "\n";
        }
    } catch (const loralab::Error& e) {
        std::cerr << "error (" << loralab::error_kind_name(e.kind())
                  << "): " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
