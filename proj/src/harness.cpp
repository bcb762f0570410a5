#include "plab/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "plab/rng.hpp"

namespace plab {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace

void RunConfig::validate() const {
    encoder.validate();
    dataset.validate();
    scl.validate();
    if (epochs < 1) throw std::invalid_argument("RunConfig: epochs must be at least 1");
    if (batch_size < 1) throw std::invalid_argument("RunConfig: batch_size must be at least 1");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("RunConfig: learning rate must be positive");
    if (shots != -1 && shots < 1) throw std::invalid_argument("RunConfig: shots must be -1 or positive");
    if (template_count < 1) throw std::invalid_argument("RunConfig: template_count must be at least 1");
    if (seeds.empty()) throw std::invalid_argument("RunConfig: seed list is empty");
}

std::string RunConfig::canonical_json() const {
    ordered_json j;
    j["encoder"] = {{"d", encoder.d},
                    {"layers_f", encoder.layers_f},
                    {"layers_g", encoder.layers_g},
                    {"heads", encoder.heads},
                    {"patch_count", encoder.patch_count},
                    {"patch_dim", encoder.patch_dim},
                    {"vocab_size", encoder.vocab_size},
                    {"template_len", encoder.template_len},
                    {"max_seq", encoder.max_seq},
                    {"mlp_mult", encoder.mlp_mult},
                    {"tau", encoder.tau}};
    j["dataset"] = {{"num_classes", dataset.num_classes},
                    {"base_count", dataset.base_count},
                    {"train_per_class", dataset.train_per_class},
                    {"test_per_class", dataset.test_per_class},
                    {"noise_std", dataset.noise_std},
                    {"seed", dataset.seed}};
    j["prompt"] = {{"depth", prompt.depth},
                   {"v_count", prompt.v_count},
                   {"t_count", prompt.t_count},
                   {"template_init", prompt.template_init},
                   {"propagate", prompt.propagate}};
    j["scl"] = {{"lambda1", scl.lambda1},
                {"lambda2", scl.lambda2},
                {"matching_metric", to_string(scl.metric)},
                {"kl_direction", to_string(scl.kl_direction)},
                {"feature_stage", to_string(scl.feature_stage)}};
    j["use_scl"] = use_scl;
    j["use_gpa"] = use_gpa;
    j["use_textual_diversity"] = use_textual_diversity;
    j["agg_mode"] = to_string(agg_mode);
    j["gpa_mu"] = gpa_mu;
    j["gpa_sigma2"] = gpa_sigma2;
    j["ema_beta"] = ema_beta;
    j["epochs"] = epochs;
    j["batch_size"] = batch_size;
    j["learning_rate"] = learning_rate;
    j["shots"] = shots;
    j["template_count"] = template_count;
    j["pretrain_epochs"] = pretrain_epochs;
    j["pretrain_batch"] = pretrain_batch;
    j["pretrain_lr"] = pretrain_lr;
    j["seeds"] = seeds;
    return j.dump();
}

std::string RunConfig::config_hash() const { return hex64(fnv1a(canonical_json())); }

RunConfig RunConfig::from_json_text(const std::string& text) {
    json j = json::parse(text);
    RunConfig c;
    if (j.contains("encoder")) {
        const json& e = j["encoder"];
        c.encoder.d = e.value("d", c.encoder.d);
        c.encoder.layers_f = e.value("layers_f", c.encoder.layers_f);
        c.encoder.layers_g = e.value("layers_g", c.encoder.layers_g);
        c.encoder.heads = e.value("heads", c.encoder.heads);
        c.encoder.patch_count = e.value("patch_count", c.encoder.patch_count);
        c.encoder.patch_dim = e.value("patch_dim", c.encoder.patch_dim);
        c.encoder.vocab_size = e.value("vocab_size", c.encoder.vocab_size);
        c.encoder.template_len = e.value("template_len", c.encoder.template_len);
        c.encoder.max_seq = e.value("max_seq", c.encoder.max_seq);
        c.encoder.mlp_mult = e.value("mlp_mult", c.encoder.mlp_mult);
        c.encoder.tau = e.value("tau", c.encoder.tau);
    }
    if (j.contains("dataset")) {
        const json& d = j["dataset"];
        c.dataset.num_classes = d.value("num_classes", c.dataset.num_classes);
        c.dataset.base_count = d.value("base_count", c.dataset.base_count);
        c.dataset.train_per_class = d.value("train_per_class", c.dataset.train_per_class);
        c.dataset.test_per_class = d.value("test_per_class", c.dataset.test_per_class);
        c.dataset.noise_std = d.value("noise_std", c.dataset.noise_std);
        c.dataset.seed = d.value("seed", c.dataset.seed);
    }
    if (j.contains("prompt")) {
        const json& p = j["prompt"];
        c.prompt.depth = p.value("depth", c.prompt.depth);
        c.prompt.v_count = p.value("v_count", c.prompt.v_count);
        c.prompt.t_count = p.value("t_count", c.prompt.t_count);
        c.prompt.template_init = p.value("template_init", c.prompt.template_init);
        c.prompt.propagate = p.value("propagate", c.prompt.propagate);
    }
    if (j.contains("scl")) {
        const json& s = j["scl"];
        c.scl.lambda1 = s.value("lambda1", c.scl.lambda1);
        c.scl.lambda2 = s.value("lambda2", c.scl.lambda2);
        if (s.contains("matching_metric")) c.scl.metric = match_metric_from_string(s["matching_metric"]);
        if (s.contains("kl_direction")) c.scl.kl_direction = kl_direction_from_string(s["kl_direction"]);
        if (s.contains("feature_stage")) c.scl.feature_stage = feature_stage_from_string(s["feature_stage"]);
    }
    c.use_scl = j.value("use_scl", c.use_scl);
    c.use_gpa = j.value("use_gpa", c.use_gpa);
    c.use_textual_diversity = j.value("use_textual_diversity", c.use_textual_diversity);
    if (j.contains("agg_mode")) c.agg_mode = agg_mode_from_string(j["agg_mode"]);
    c.gpa_mu = j.value("gpa_mu", c.gpa_mu);
    c.gpa_sigma2 = j.value("gpa_sigma2", c.gpa_sigma2);
    c.ema_beta = j.value("ema_beta", c.ema_beta);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.shots = j.value("shots", c.shots);
    c.template_count = j.value("template_count", c.template_count);
    c.pretrain_epochs = j.value("pretrain_epochs", c.pretrain_epochs);
    c.pretrain_batch = j.value("pretrain_batch", c.pretrain_batch);
    c.pretrain_lr = j.value("pretrain_lr", c.pretrain_lr);
    if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    c.validate();
    return c;
}

std::string EvalReport::to_json_line() const {
    ordered_json j;
    j["config_hash"] = config_hash;
    j["seed"] = seed;
    j["label"] = label;
    j["base_acc"] = base_acc;
    j["novel_acc"] = novel_acc;
    j["hm"] = hm;
    j["per_epoch_losses"] = per_epoch_losses;
    ordered_json shot = ordered_json::object();
    for (auto& [k, v] : shot_accuracies) shot[std::to_string(k)] = v;
    j["shot_accuracies"] = std::move(shot);
    return j.dump();
}

EvalReport EvalReport::from_json_line(const std::string& line) {
    json j = json::parse(line);
    EvalReport r;
    r.config_hash = j.value("config_hash", "");
    r.seed = j.value("seed", 0ULL);
    r.label = j.value("label", "");
    r.base_acc = j.value("base_acc", 0.0);
    r.novel_acc = j.value("novel_acc", 0.0);
    r.hm = j.value("hm", 0.0);
    if (j.contains("per_epoch_losses")) r.per_epoch_losses = j["per_epoch_losses"].get<std::vector<double>>();
    if (j.contains("shot_accuracies")) {
        for (auto& [k, v] : j["shot_accuracies"].items()) {
            r.shot_accuracies[std::stoi(k)] = v.get<double>();
        }
    }
    return r;
}

double harmonic_mean(double base_acc, double novel_acc) {
    if (base_acc < 0.0 || base_acc > 100.0 || novel_acc < 0.0 || novel_acc > 100.0) {
        throw std::invalid_argument("harmonic_mean: accuracies must be in [0, 100]");
    }
    if (base_acc == 0.0 && novel_acc == 0.0) {
        warn_degenerate("harmonic_mean of (0, 0)");
        return 0.0;
    }
    return 2.0 * base_acc * novel_acc / (base_acc + novel_acc);
}

Vocabulary make_vocabulary(const RunConfig& run) {
    Vocabulary v;
    v.vocab_size = run.encoder.vocab_size;
    v.num_classes = run.dataset.num_classes;
    if (v.num_words() < run.encoder.template_len) {
        throw std::invalid_argument("vocabulary too small for the canonical template");
    }
    return v;
}

TemplatePool make_pool(const RunConfig& run, const Vocabulary& vocab) {
    int n = run.use_textual_diversity ? run.template_count : 1;
    return TemplatePool::builtin(n, run.encoder, vocab);
}

TemplatePool make_pretrain_pool(const RunConfig& run, const Vocabulary& vocab) {
    constexpr int kPretrainPoolSize = 8;
    return TemplatePool::builtin(kPretrainPoolSize, run.encoder, vocab);
}

FrozenContext build_frozen_context(const FrozenEncoderPair& pair, const TemplatePool& pool,
                                   const Vocabulary& vocab, int num_classes) {
    FrozenContext ctx;
    for (int k = 0; k < num_classes; ++k) {
        int tok = vocab.class_token(k);
        ctx.class_text_feats.push_back(ensembled_frozen_text_feature(pair, pool, tok));
        std::vector<double> raw(pair.config.d, 0.0);
        for (int i = 0; i < pool.size(); ++i) {
            Tensor g = encode_text(pair, pool.instantiate(i, tok));
            for (int c = 0; c < pair.config.d; ++c) raw[c] += g.data()[c] / pool.size();
        }
        ctx.class_text_feats_raw.push_back(std::move(raw));
    }
    return ctx;
}

namespace {

std::vector<double> normalized(const std::vector<double>& v) {
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    if (n == 0.0) throw std::domain_error("normalized: zero vector");
    std::vector<double> out = v;
    for (double& x : out) x /= n;
    return out;
}

int argmax(const std::vector<double>& v) {
    return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

// Class text features for the listed classes, prompted when prompts != nullptr.
std::vector<std::vector<double>> class_features(const FrozenEncoderPair& pair,
                                                const PromptSet* prompts,
                                                const Vocabulary& vocab,
                                                const std::vector<int>& classes) {
    std::vector<int> words = canonical_template_words(vocab, pair.config.template_len);
    std::vector<std::vector<double>> feats;
    for (int k : classes) {
        TokenSequence seq = make_token_sequence(pair.config, vocab, words, vocab.class_token(k));
        Tensor g = prompts ? prompted_encode_text(pair, *prompts, seq) : encode_text(pair, seq);
        feats.push_back(g.data());
    }
    return feats;
}

double split_accuracy(const FrozenEncoderPair& pair, const PromptSet* prompts,
                      const std::vector<Example>& split,
                      const std::vector<std::vector<double>>& class_feats,
                      const std::vector<int>& classes) {
    if (split.empty()) throw std::invalid_argument("evaluation split is empty");
    int correct = 0;
    for (const Example& e : split) {
        Tensor f = prompts ? prompted_encode_image(pair, *prompts, e.patches)
                           : encode_image(pair, e.patches);
        std::vector<double> probs = zero_shot_probs(f.data(), class_feats, pair.config.tau);
        int pred = classes[argmax(probs)];
        if (pred == e.label) ++correct;
    }
    return 100.0 * correct / split.size();
}

}  // namespace

TrainResult train(const RunConfig& run, const FrozenEncoderPair& pair,
                  const std::vector<Example>& tuning_data, const FrozenContext& frozen,
                  const Vocabulary& vocab, std::uint64_t seed, const Dataset* eval_data) {
    run.validate();
    if (tuning_data.empty()) throw std::invalid_argument("train: no tuning data");
    const EncoderConfig& enc = pair.config;
    int base_count = run.dataset.base_count;
    for (const Example& e : tuning_data) {
        if (e.label < 0 || e.label >= base_count) {
            throw std::invalid_argument("train: non-base example in tuning data");
        }
    }

    TrainResult result;
    PromptSet prompts = init_prompts(pair, run.prompt, vocab, mix_seed(seed, 0x9172u));
    result.final_prompts = prompts;
    std::vector<Tensor> params = prompts.parameters();
    std::vector<Tensor> frozen_params = pair.parameters();

    std::optional<AggregationState> agg;
    if (run.use_gpa) {
        agg.emplace(run.agg_mode, run.epochs, run.gpa_mu, run.gpa_sigma2, prompts, run.ema_beta);
    }

    const bool post_norm = run.scl.feature_stage == FeatureStage::PostNormalization;

    // frozen per-sample context (constant across epochs)
    std::vector<std::vector<double>> frozen_img_target(tuning_data.size());
    std::vector<std::vector<double>> frozen_probs(tuning_data.size());
    std::vector<std::vector<double>> base_text_norm;
    for (int k = 0; k < base_count; ++k) base_text_norm.push_back(frozen.class_text_feats[k]);
    if (run.use_scl) {
        for (std::size_t i = 0; i < tuning_data.size(); ++i) {
            Tensor f = encode_image(pair, tuning_data[i].patches);
            frozen_img_target[i] = post_norm ? normalized(f.data()) : f.data();
            frozen_probs[i] = zero_shot_probs(f.data(), base_text_norm, enc.tau);
        }
    }
    std::vector<const std::vector<double>*> frozen_text_target;
    for (int k = 0; k < base_count; ++k) {
        frozen_text_target.push_back(post_norm ? &frozen.class_text_feats[k]
                                               : &frozen.class_text_feats_raw[k]);
    }

    std::vector<int> words = canonical_template_words(vocab, enc.template_len);
    std::vector<TokenSequence> base_seqs;
    for (int k = 0; k < base_count; ++k) {
        base_seqs.push_back(make_token_sequence(enc, vocab, words, vocab.class_token(k)));
    }

    std::vector<std::size_t> order(tuning_data.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 1; epoch <= run.epochs; ++epoch) {
        RandomStream rng(mix_seed(seed, 0x5c4edu + epoch));
        rng.shuffle(order);
        double epoch_loss = 0.0;
        int iters = 0;
        for (std::size_t start = 0; start < order.size(); start += run.batch_size) {
            std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(run.batch_size));
            int b = static_cast<int>(end - start);

            // prompted text features for all base classes, recomputed each step
            std::vector<Tensor> text_rows;
            for (int k = 0; k < base_count; ++k) {
                result.class_tokens_in_gradient.insert(vocab.class_token(k));
                text_rows.push_back(prompted_encode_text(pair, prompts, base_seqs[k]));
            }
            Tensor class_mat_norm = l2_normalize_rows(concat_rows(text_rows));

            Tensor ce_sum = Tensor::scalar(0.0);
            Tensor img_sum = Tensor::scalar(0.0);
            Tensor kl_sum = Tensor::scalar(0.0);
            for (std::size_t ii = start; ii < end; ++ii) {
                const Example& e = tuning_data[order[ii]];
                result.labels_in_gradient.insert(e.label);
                Tensor fp = prompted_encode_image(pair, prompts, e.patches);
                Tensor fp_norm = l2_normalize_rows(fp);
                Tensor probs = softmax_rows(
                    scalar_mul(matmul(fp_norm, transpose(class_mat_norm)), enc.tau));
                std::vector<double> onehot(base_count, 0.0);
                onehot[e.label] = 1.0;
                Tensor ce_i = scalar_mul(
                    sum(elementwise_mul(log(probs), Tensor(1, base_count, std::move(onehot)))), -1.0);
                ce_sum = add(ce_sum, ce_i);
                if (run.use_scl) {
                    Tensor anchor = post_norm ? fp_norm : fp;
                    Tensor target(1, enc.d, frozen_img_target[order[ii]]);
                    img_sum = add(img_sum, scl_feature_loss(anchor, target, run.scl.metric));
                    kl_sum = add(kl_sum, scl_logits_loss(probs, frozen_probs[order[ii]],
                                                         run.scl.kl_direction));
                }
            }
            Tensor loss = scalar_mul(ce_sum, 1.0 / b);
            if (run.use_scl) {
                Tensor text_sum = Tensor::scalar(0.0);
                for (int k = 0; k < base_count; ++k) {
                    Tensor gp = post_norm ? slice_rows(class_mat_norm, k, k + 1) : text_rows[k];
                    Tensor target(1, enc.d, *frozen_text_target[k]);
                    text_sum = add(text_sum, scl_feature_loss(gp, target, run.scl.metric));
                }
                Tensor scl = scl_combined(scalar_mul(img_sum, 1.0 / b),
                                          scalar_mul(text_sum, 1.0 / base_count),
                                          scalar_mul(kl_sum, 1.0 / b), run.scl);
                loss = final_loss(loss, scl);
            }
            double loss_value = loss.value();
            if (!std::isfinite(loss_value)) {
                throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) +
                                         " iteration " + std::to_string(iters));
            }
            backward(loss);
            for (const Tensor& t : frozen_params) {
                if (t.grad() != nullptr) ++result.frozen_grad_tensors_touched;
            }
            if (run.prompt.depth > 0) {
                sgd_step(params, run.learning_rate);
            } else {
                for (Tensor& p : params) p.zero_grad();
            }
            result.iteration_losses.push_back(loss_value);
            epoch_loss += loss_value;
            ++iters;
        }
        result.epoch_losses.push_back(epoch_loss / iters);
        if (agg) agg->update(prompts, epoch);
        if (eval_data) {
            PromptSet snapshot = prompts.clone(false);
            EvalReport r = evaluate_base_to_novel(pair, &snapshot, *eval_data, frozen, vocab);
            result.epoch_curve.push_back({r.base_acc, r.novel_acc});
        }
    }
    result.final_prompts = prompts;
    if (agg) result.aggregated = agg->finalize();
    return result;
}

EvalReport evaluate_base_to_novel(const FrozenEncoderPair& pair, const PromptSet* prompts,
                                  const Dataset& data, const FrozenContext& frozen,
                                  const Vocabulary& vocab) {
    (void)frozen;
    std::vector<int> base_classes, novel_classes;
    for (int k = 0; k < data.spec.num_classes; ++k) {
        (k < data.spec.base_count ? base_classes : novel_classes).push_back(k);
    }
    const PromptSet* p = (prompts && prompts->depth > 0) ? prompts : nullptr;
    auto base_feats = class_features(pair, p, vocab, base_classes);
    auto novel_feats = class_features(pair, p, vocab, novel_classes);
    EvalReport r;
    r.base_acc = split_accuracy(pair, p, data.base_test(), base_feats, base_classes);
    r.novel_acc = split_accuracy(pair, p, data.novel_test(), novel_feats, novel_classes);
    r.hm = harmonic_mean(r.base_acc, r.novel_acc);
    return r;
}

double overall_accuracy(const FrozenEncoderPair& pair, const PromptSet* prompts,
                        const std::vector<Example>& test, const FrozenContext& frozen,
                        const Vocabulary& vocab, int num_classes) {
    (void)frozen;
    std::vector<int> classes(num_classes);
    std::iota(classes.begin(), classes.end(), 0);
    const PromptSet* p = (prompts && prompts->depth > 0) ? prompts : nullptr;
    auto feats = class_features(pair, p, vocab, classes);
    return split_accuracy(pair, p, test, feats, classes);
}

FewShotResult evaluate_few_shot(const RunConfig& run, const FrozenEncoderPair& pair,
                                const Dataset& data, const std::vector<int>& shots,
                                const TemplatePool& pool, const Vocabulary& vocab) {
    FrozenContext frozen = build_frozen_context(pair, pool, vocab, data.spec.num_classes);
    FewShotResult out;
    for (int k : shots) {
        for (std::uint64_t seed : run.seeds) {
            std::vector<Example> subset = subsample_shots(data, k, mix_seed(seed, 0xf5 + k));
            TrainResult tr = train(run, pair, subset, frozen, vocab, seed);
            const PromptSet& final_prompts =
                (run.use_gpa && tr.aggregated) ? *tr.aggregated : tr.final_prompts;
            double acc = overall_accuracy(pair, &final_prompts, data.test, frozen, vocab,
                                          data.spec.num_classes);
            out.per_seed_acc[k].push_back(acc);
        }
        const auto& v = out.per_seed_acc[k];
        double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
        out.mean_acc[k] = mean;
        out.spread[k] = *std::max_element(v.begin(), v.end()) - *std::min_element(v.begin(), v.end());
    }
    return out;
}

EvalReport run_tune(const RunConfig& run, std::uint64_t seed, const FrozenEncoderPair& pair,
                    const Dataset& data, const TemplatePool& pool, const Vocabulary& vocab,
                    TrainResult* out_result) {
    auto t0 = std::chrono::steady_clock::now();
    FrozenContext frozen = build_frozen_context(pair, pool, vocab, data.spec.num_classes);
    std::vector<Example> tuning = run.shots == -1
                                      ? data.base_train()
                                      : subsample_shots(data, run.shots, mix_seed(seed, 0xf5 + run.shots));
    TrainResult tr = train(run, pair, tuning, frozen, vocab, seed, &data);
    const PromptSet& final_prompts =
        (run.use_gpa && tr.aggregated) ? *tr.aggregated : tr.final_prompts;
    EvalReport r = evaluate_base_to_novel(pair, &final_prompts, data, frozen, vocab);
    r.per_epoch_losses = tr.epoch_losses;
    r.config_hash = run.config_hash();
    r.seed = seed;
    r.label = "tune";
    r.wall_clock_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (out_result) *out_result = std::move(tr);
    return r;
}

namespace {

struct AblationVariant {
    std::string name;
    RunConfig config;
};

std::vector<AblationVariant> ablation_variants(const RunConfig& base, const std::string& axis) {
    std::vector<AblationVariant> vs;
    if (axis == "components") {
        RunConfig c = base;
        c.use_scl = c.use_gpa = c.use_textual_diversity = false;
        vs.push_back({"ivlp", c});
        c.use_scl = true;
        vs.push_back({"+scl", c});
        c.use_gpa = true;
        vs.push_back({"+scl+gpa", c});
        c.use_textual_diversity = true;
        vs.push_back({"full", c});
    } else if (axis == "matching_metric") {
        for (MatchMetric m : {MatchMetric::L1, MatchMetric::MSE, MatchMetric::Cosine}) {
            RunConfig c = base;
            c.use_scl = true;
            c.use_gpa = c.use_textual_diversity = false;
            c.scl.metric = m;
            vs.push_back({to_string(m), c});
        }
    } else if (axis == "ensembling_mode") {
        for (AggMode m : {AggMode::Gpa, AggMode::Equal, AggMode::Ema}) {
            RunConfig c = base;
            c.use_gpa = true;
            c.agg_mode = m;
            vs.push_back({to_string(m), c});
        }
    } else if (axis == "template_count") {
        for (int n : {1, 2, 4, 8}) {
            RunConfig c = base;
            c.use_textual_diversity = true;
            c.template_count = n;
            vs.push_back({"n" + std::to_string(n), c});
        }
    } else {
        throw std::invalid_argument("run_ablation: unknown axis '" + axis + "'");
    }
    return vs;
}

}  // namespace

AblationReport run_ablation(const RunConfig& base, const std::string& axis) {
    base.validate();
    std::vector<AblationVariant> variants = ablation_variants(base, axis);
    AblationReport report;
    report.axis = axis;
    for (auto& v : variants) report.rows.push_back({v.name, 0.0, 0.0, 0.0, {}});

    for (std::uint64_t seed : base.seeds) {
        // shared per-seed dataset and frozen encoder across all rows
        DatasetSpec dspec = base.dataset;
        dspec.seed = seed;
        Dataset data = generate_dataset(base.encoder, dspec);
        Vocabulary vocab = make_vocabulary(base);
        PretrainOptions popts{base.pretrain_epochs, base.pretrain_batch, base.pretrain_lr, seed};
        FrozenEncoderPair pair =
            pretrain_contrastive(base.encoder,
                                 pretraining_pairs(data, vocab, make_pretrain_pool(base, vocab)),
                                 popts);
        for (std::size_t vi = 0; vi < variants.size(); ++vi) {
            RunConfig run = variants[vi].config;
            run.dataset = dspec;
            TemplatePool pool = make_pool(run, vocab);
            EvalReport r = run_tune(run, seed, pair, data, pool, vocab);
            r.label = axis + ":" + variants[vi].name;
            report.rows[vi].per_seed.push_back(r);
        }
    }
    for (auto& row : report.rows) {
        for (const EvalReport& r : row.per_seed) {
            row.base_acc += r.base_acc / row.per_seed.size();
            row.novel_acc += r.novel_acc / row.per_seed.size();
            row.hm += r.hm / row.per_seed.size();
        }
    }
    return report;
}

std::string AblationReport::render_table() const {
    std::ostringstream os;
    os << "axis: " << axis << "\n";
    os << "variant            base    novel   hm\n";
    for (const auto& row : rows) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "%-18s %-7.2f %-7.2f %-7.2f\n", row.name.c_str(),
                      row.base_acc, row.novel_acc, row.hm);
        os << buf;
    }
    return os.str();
}

std::string output_dir() {
    const char* env = std::getenv("PLAB_OUT");
    return env && *env ? env : "./runs";
}

void emit_report(const EvalReport& report, const TrainResult* result, const std::string& out_dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    std::string log_path = out_dir + "/results.jsonl";
    {
        std::ofstream log(log_path, std::ios::app);
        if (!log) throw std::runtime_error("cannot append to " + log_path);
        log << report.to_json_line() << "\n";
        if (!log) throw std::runtime_error("write failed: " + log_path);
    }
    std::string stem = out_dir + "/" + report.config_hash + "_" + std::to_string(report.seed);
    {
        std::ofstream csv(stem + "_losses.csv");
        if (!csv) throw std::runtime_error("cannot write " + stem + "_losses.csv");
        csv << "epoch,loss\n";
        for (std::size_t i = 0; i < report.per_epoch_losses.size(); ++i) {
            csv << (i + 1) << "," << report.per_epoch_losses[i] << "\n";
        }
    }
    if (result && !result->epoch_curve.empty()) {
        std::ofstream csv(stem + "_curve.csv");
        if (!csv) throw std::runtime_error("cannot write " + stem + "_curve.csv");
        csv << "epoch,base_acc,novel_acc\n";
        for (std::size_t i = 0; i < result->epoch_curve.size(); ++i) {
            csv << (i + 1) << "," << result->epoch_curve[i][0] << "," << result->epoch_curve[i][1]
                << "\n";
        }
    }
}

}  // namespace plab
