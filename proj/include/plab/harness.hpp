#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "plab/dataset.hpp"
#include "plab/encoders.hpp"
#include "plab/ensembling.hpp"
#include "plab/prompting.hpp"
#include "plab/regularizers.hpp"

namespace plab {

struct RunConfig {
    EncoderConfig encoder;
    DatasetSpec dataset;
    PromptConfig prompt;
    SclConfig scl;

    // component toggles
    bool use_scl = true;
    bool use_gpa = true;
    bool use_textual_diversity = true;

    AggMode agg_mode = AggMode::Gpa;
    double gpa_mu = 15.0;
    double gpa_sigma2 = 1.0;
    double ema_beta = 0.999;

    int epochs = 20;
    int batch_size = 8;
    double learning_rate = 0.0025;
    int shots = 16;          // -1 = full base training data
    int template_count = 4;  // diversity pool size N

    int pretrain_epochs = 30;
    int pretrain_batch = 16;
    double pretrain_lr = 0.005;

    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};

    void validate() const;
    std::string canonical_json() const;     // stable field order
    std::string config_hash() const;        // hex FNV-1a of canonical_json
    static RunConfig from_json_text(const std::string& text);
};

struct EvalReport {
    double base_acc = 0.0;   // percent
    double novel_acc = 0.0;  // percent
    double hm = 0.0;
    std::vector<double> per_epoch_losses;
    std::map<int, double> shot_accuracies;  // K -> percent, few-shot runs only
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string label;  // free-form run tag (e.g. ablation row name)
    double wall_clock_sec = 0.0;  // excluded from the canonical JSON line

    // Deterministic serialization: every field except wall_clock_sec.
    std::string to_json_line() const;
    static EvalReport from_json_line(const std::string& line);
};

double harmonic_mean(double base_acc, double novel_acc);

struct TrainResult {
    PromptSet final_prompts;
    std::optional<PromptSet> aggregated;
    std::vector<double> iteration_losses;
    std::vector<double> epoch_losses;
    // (base_acc, novel_acc) after each epoch, when requested
    std::vector<std::array<double, 2>> epoch_curve;
    // instrumentation
    std::set<int> labels_in_gradient;
    std::set<int> class_tokens_in_gradient;
    long frozen_grad_tensors_touched = 0;
};

// Frozen per-class text features and per-sample context used by both training
// and evaluation; built once per (pair, pool).
struct FrozenContext {
    std::vector<std::vector<double>> class_text_feats;       // per class, normalized ensemble
    std::vector<std::vector<double>> class_text_feats_raw;   // per class, plain mean of raw features
};

FrozenContext build_frozen_context(const FrozenEncoderPair& pair, const TemplatePool& pool,
                                   const Vocabulary& vocab, int num_classes);

// The tuning loop: CE on prompted features, optional self-consistency
// regularization against frozen features, optional per-epoch prompt
// aggregation. Only base-class examples may appear in `tuning_data`.
TrainResult train(const RunConfig& run, const FrozenEncoderPair& pair,
                  const std::vector<Example>& tuning_data, const FrozenContext& frozen,
                  const Vocabulary& vocab, std::uint64_t seed,
                  const Dataset* eval_data = nullptr);

// Base accuracy over the base test split, novel accuracy over the novel test
// split, each classified within its own label set. prompts == nullptr
// evaluates the frozen zero-shot path.
EvalReport evaluate_base_to_novel(const FrozenEncoderPair& pair, const PromptSet* prompts,
                                  const Dataset& data, const FrozenContext& frozen,
                                  const Vocabulary& vocab);

// Accuracy over the full test split among all classes.
double overall_accuracy(const FrozenEncoderPair& pair, const PromptSet* prompts,
                        const std::vector<Example>& test, const FrozenContext& frozen,
                        const Vocabulary& vocab, int num_classes);

struct FewShotResult {
    std::map<int, std::vector<double>> per_seed_acc;  // K -> accuracy per seed
    std::map<int, double> mean_acc;
    std::map<int, double> spread;  // max - min over seeds
};

FewShotResult evaluate_few_shot(const RunConfig& run, const FrozenEncoderPair& pair,
                                const Dataset& data, const std::vector<int>& shots,
                                const TemplatePool& pool, const Vocabulary& vocab);

struct AblationRow {
    std::string name;
    double base_acc = 0.0;
    double novel_acc = 0.0;
    double hm = 0.0;
    std::vector<EvalReport> per_seed;
};

struct AblationReport {
    std::string axis;
    std::vector<AblationRow> rows;
    std::string render_table() const;
};

// axis: components | matching_metric | ensembling_mode | template_count.
// All rows share seeds, dataset, and the frozen encoder per seed.
AblationReport run_ablation(const RunConfig& base, const std::string& axis);

// One full tune: pretrain (or load), train at `seed`, evaluate.
EvalReport run_tune(const RunConfig& run, std::uint64_t seed, const FrozenEncoderPair& pair,
                    const Dataset& data, const TemplatePool& pool, const Vocabulary& vocab,
                    TrainResult* out_result = nullptr);

// Appends the report's JSON line to <out_dir>/results.jsonl and writes
// per-epoch loss and accuracy-curve CSVs next to it.
void emit_report(const EvalReport& report, const TrainResult* result, const std::string& out_dir);

// Output directory from $PLAB_OUT, default "./runs".
std::string output_dir();

// Shared toy defaults: builds vocabulary + pool from the run config.
Vocabulary make_vocabulary(const RunConfig& run);
TemplatePool make_pool(const RunConfig& run, const Vocabulary& vocab);

// Pool used on the text side of contrastive pretraining. Its size is fixed
// (independent of the diversity toggle and template_count) so that every
// variant and ablation row shares the same frozen encoder.
TemplatePool make_pretrain_pool(const RunConfig& run, const Vocabulary& vocab);

}  // namespace plab
