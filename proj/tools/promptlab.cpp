#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "plab/checkpoint.hpp"
#include "plab/harness.hpp"

namespace {

using namespace plab;

RunConfig load_run_config(const std::string& config_path) {
    if (config_path.empty()) return RunConfig{};
    std::ifstream in(config_path);
    if (!in) throw std::runtime_error("cannot open config file: " + config_path);
    std::stringstream ss;
    ss << in.rdbuf();
    return RunConfig::from_json_text(ss.str());
}

struct CommonFlags {
    std::string config_path;
    std::string templates_path;
    // CLI overrides; sentinel values mean "not set on the command line"
    double lr = -1.0;
    int epochs = -1;
    int shots = 0;
    int template_count = -1;
    int depth = -1;
    std::string metric, kl_direction, feature_stage, agg_mode;
    double lambda1 = -1.0, lambda2 = -1.0;
    double gpa_mu = -1e300, gpa_sigma2 = -1e300;
    int toggles_scl = -1, toggles_gpa = -1, toggles_div = -1;
    std::vector<std::uint64_t> seeds;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON config file supplying RunConfig fields");
        cmd->add_option("--templates-file", templates_path,
                        "template pool file, one template per line with a {class} slot "
                        "(default: deterministic built-in pool)");
        cmd->add_option("--lr", lr, "learning rate");
        cmd->add_option("--epochs", epochs, "training epochs");
        cmd->add_option("--shots", shots, "shots per base class (-1 = full data)");
        cmd->add_option("--templates", template_count, "textual diversity pool size N");
        cmd->add_option("--depth", depth, "prompted layers J");
        cmd->add_option("--metric", metric, "matching metric: l1 | mse | cosine");
        cmd->add_option("--kl-direction", kl_direction, "prompted_to_frozen | frozen_to_prompted");
        cmd->add_option("--feature-stage", feature_stage, "pre_normalization | post_normalization");
        cmd->add_option("--agg-mode", agg_mode, "gpa | equal | ema");
        cmd->add_option("--lambda1", lambda1, "image consistency weight");
        cmd->add_option("--lambda2", lambda2, "text consistency weight");
        cmd->add_option("--gpa-mu", gpa_mu, "aggregation Gaussian mean (epochs)");
        cmd->add_option("--gpa-sigma2", gpa_sigma2, "aggregation Gaussian variance");
        cmd->add_option("--scl", toggles_scl, "enable consistency losses (0/1)");
        cmd->add_option("--gpa", toggles_gpa, "enable prompt aggregation (0/1)");
        cmd->add_option("--textual-diversity", toggles_div, "enable template ensembling (0/1)");
        cmd->add_option("--seeds", seeds, "seed list");
    }

    RunConfig resolve() const {
        RunConfig run = load_run_config(config_path);
        if (lr > 0.0) run.learning_rate = lr;
        if (epochs > 0) run.epochs = epochs;
        if (shots != 0) run.shots = shots;
        if (template_count > 0) run.template_count = template_count;
        if (depth >= 0) run.prompt.depth = depth;
        if (!metric.empty()) run.scl.metric = match_metric_from_string(metric);
        if (!kl_direction.empty()) run.scl.kl_direction = kl_direction_from_string(kl_direction);
        if (!feature_stage.empty()) run.scl.feature_stage = feature_stage_from_string(feature_stage);
        if (!agg_mode.empty()) run.agg_mode = agg_mode_from_string(agg_mode);
        if (lambda1 >= 0.0) run.scl.lambda1 = lambda1;
        if (lambda2 >= 0.0) run.scl.lambda2 = lambda2;
        if (gpa_mu > -1e299) run.gpa_mu = gpa_mu;
        if (gpa_sigma2 > -1e299) run.gpa_sigma2 = gpa_sigma2;
        if (toggles_scl >= 0) run.use_scl = toggles_scl != 0;
        if (toggles_gpa >= 0) run.use_gpa = toggles_gpa != 0;
        if (toggles_div >= 0) run.use_textual_diversity = toggles_div != 0;
        if (!seeds.empty()) run.seeds = seeds;
        run.validate();
        return run;
    }
};

TemplatePool get_pool(const RunConfig& run, const Vocabulary& vocab, const std::string& path) {
    if (path.empty()) return make_pool(run, vocab);
    TemplatePool pool = TemplatePool::from_file(path, run.encoder, vocab);
    int n = run.use_textual_diversity ? std::min(run.template_count, pool.size()) : 1;
    return pool.truncated(n);
}

FrozenEncoderPair get_pair(const RunConfig& run, std::uint64_t seed, const std::string& checkpoint,
                           const Dataset& data, const Vocabulary& vocab) {
    if (!checkpoint.empty()) return load_encoder_pair(checkpoint);
    PretrainOptions opts{run.pretrain_epochs, run.pretrain_batch, run.pretrain_lr, seed};
    return pretrain_contrastive(
        run.encoder, pretraining_pairs(data, vocab, make_pretrain_pool(run, vocab)), opts);
}

int cmd_pretrain(const CommonFlags& flags, std::uint64_t seed, const std::string& out_path) {
    RunConfig run = flags.resolve();
    DatasetSpec dspec = run.dataset;
    dspec.seed = seed;
    Dataset data = generate_dataset(run.encoder, dspec);
    Vocabulary vocab = make_vocabulary(run);
    PretrainOptions opts{run.pretrain_epochs, run.pretrain_batch, run.pretrain_lr, seed};
    std::vector<double> trace;
    FrozenEncoderPair pair = pretrain_contrastive(
        run.encoder, pretraining_pairs(data, vocab, make_pretrain_pool(run, vocab)), opts, &trace);
    std::string path = out_path.empty() ? output_dir() + "/encoder.json" : out_path;
    std::filesystem::create_directories(std::filesystem::path(path).parent_path());
    save_encoder_pair(pair, path);
    TemplatePool pool = get_pool(run, vocab, flags.templates_path);
    FrozenContext frozen = build_frozen_context(pair, pool, vocab, dspec.num_classes);
    EvalReport zs = evaluate_base_to_novel(pair, nullptr, data, frozen, vocab);
    std::printf("pretrained %d epochs; final contrastive loss %.4f\n", run.pretrain_epochs,
                trace.empty() ? 0.0 : trace.back());
    std::printf("frozen zero-shot: base %.2f novel %.2f hm %.2f\n", zs.base_acc, zs.novel_acc, zs.hm);
    std::printf("checkpoint written to %s (weight checksum %016llx)\n", path.c_str(),
                static_cast<unsigned long long>(pair.weight_checksum()));
    return 0;
}

int cmd_tune(const CommonFlags& flags, std::uint64_t seed, const std::string& checkpoint,
             const std::string& prompts_out) {
    RunConfig run = flags.resolve();
    DatasetSpec dspec = run.dataset;
    dspec.seed = seed;
    run.dataset = dspec;
    Dataset data = generate_dataset(run.encoder, dspec);
    Vocabulary vocab = make_vocabulary(run);
    FrozenEncoderPair pair = get_pair(run, seed, checkpoint, data, vocab);
    TemplatePool pool = get_pool(run, vocab, flags.templates_path);
    TrainResult result;
    EvalReport report = run_tune(run, seed, pair, data, pool, vocab, &result);
    emit_report(report, &result, output_dir());
    if (!prompts_out.empty()) {
        PromptProvenance prov;
        prov.mode = run.use_gpa ? to_string(run.agg_mode) : "live";
        prov.mu = run.gpa_mu;
        prov.sigma2 = run.gpa_sigma2;
        prov.epochs = run.epochs;
        const PromptSet& final_prompts =
            (run.use_gpa && result.aggregated) ? *result.aggregated : result.final_prompts;
        save_prompts(final_prompts, prompts_out, prov);
    }
    std::printf("%s\n", report.to_json_line().c_str());
    std::fprintf(stderr, "wall clock: %.1fs\n", report.wall_clock_sec);
    return 0;
}

int cmd_fewshot(const CommonFlags& flags, std::uint64_t seed, const std::string& checkpoint,
                std::vector<int> shots) {
    RunConfig run = flags.resolve();
    if (shots.empty()) shots = {1, 2, 4, 8, 16};
    DatasetSpec dspec = run.dataset;
    dspec.seed = seed;
    run.dataset = dspec;
    Dataset data = generate_dataset(run.encoder, dspec);
    Vocabulary vocab = make_vocabulary(run);
    FrozenEncoderPair pair = get_pair(run, seed, checkpoint, data, vocab);
    TemplatePool pool = get_pool(run, vocab, flags.templates_path);
    FewShotResult result = evaluate_few_shot(run, pair, data, shots, pool, vocab);
    EvalReport report;
    report.config_hash = run.config_hash();
    report.seed = seed;
    report.label = "fewshot";
    for (auto& [k, acc] : result.mean_acc) report.shot_accuracies[k] = acc;
    emit_report(report, nullptr, output_dir());
    std::printf("shots  mean_acc  spread\n");
    for (auto& [k, acc] : result.mean_acc) {
        std::printf("%-6d %-9.2f %.2f\n", k, acc, result.spread[k]);
    }
    return 0;
}

int cmd_ablate(const CommonFlags& flags, const std::string& axis) {
    RunConfig run = flags.resolve();
    AblationReport report = run_ablation(run, axis);
    for (const auto& row : report.rows) {
        for (const EvalReport& r : row.per_seed) emit_report(r, nullptr, output_dir());
    }
    std::printf("%s", report.render_table().c_str());
    return 0;
}

int cmd_report(const std::string& log_path_arg) {
    std::string log_path = log_path_arg.empty() ? output_dir() + "/results.jsonl" : log_path_arg;
    std::ifstream in(log_path);
    if (!in) throw std::runtime_error("cannot read " + log_path);
    std::printf("config_hash,seed,label,base_acc,novel_acc,hm\n");
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        EvalReport r = EvalReport::from_json_line(line);
        std::printf("%s,%llu,%s,%.4f,%.4f,%.4f\n", r.config_hash.c_str(),
                    static_cast<unsigned long long>(r.seed), r.label.c_str(), r.base_acc,
                    r.novel_acc, r.hm);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"prompt-tuning laboratory on a toy frozen dual encoder"};
    app.require_subcommand(1);

    CommonFlags flags;
    std::uint64_t seed = 1;
    std::string checkpoint, out_path, prompts_out, axis = "components", log_path;
    std::vector<int> shots;

    auto* pretrain = app.add_subcommand("pretrain", "contrastively pretrain and freeze the encoder pair");
    flags.attach(pretrain);
    pretrain->add_option("--seed", seed, "run seed");
    pretrain->add_option("--out", out_path, "encoder checkpoint path");

    auto* tune = app.add_subcommand("tune", "train prompts and evaluate base-to-novel");
    flags.attach(tune);
    tune->add_option("--seed", seed, "run seed");
    tune->add_option("--encoder", checkpoint, "encoder checkpoint (pretrains when absent)");
    tune->add_option("--prompts-out", prompts_out, "write the inference prompt checkpoint here");

    auto* fewshot = app.add_subcommand("fewshot", "few-shot sweep over K");
    flags.attach(fewshot);
    fewshot->add_option("--seed", seed, "dataset/pretrain seed");
    fewshot->add_option("--encoder", checkpoint, "encoder checkpoint (pretrains when absent)");
    fewshot->add_option("--k", shots, "shot counts (default 1 2 4 8 16)");

    auto* ablate = app.add_subcommand("ablate", "run an ablation axis across shared seeds");
    flags.attach(ablate);
    ablate->add_option("--axis", axis,
                       "components | matching_metric | ensembling_mode | template_count")
        ->required();

    auto* report = app.add_subcommand("report", "re-render the results log as CSV");
    report->add_option("--log", log_path, "results.jsonl path (default $PLAB_OUT/results.jsonl)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (pretrain->parsed()) return cmd_pretrain(flags, seed, out_path);
        if (tune->parsed()) return cmd_tune(flags, seed, checkpoint, prompts_out);
        if (fewshot->parsed()) return cmd_fewshot(flags, seed, checkpoint, shots);
        if (ablate->parsed()) return cmd_ablate(flags, axis);
        if (report->parsed()) return cmd_report(log_path);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
