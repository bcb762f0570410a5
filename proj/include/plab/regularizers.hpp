#pragma once

#include <string>
#include <vector>

#include "plab/encoders.hpp"
#include "plab/tensor.hpp"

namespace plab {

enum class MatchMetric { L1, MSE, Cosine };
enum class KlDirection { PromptedToFrozen, FrozenToPrompted };
enum class FeatureStage { PreNormalization, PostNormalization };

MatchMetric match_metric_from_string(const std::string& s);
std::string to_string(MatchMetric m);
KlDirection kl_direction_from_string(const std::string& s);
std::string to_string(KlDirection d);
FeatureStage feature_stage_from_string(const std::string& s);
std::string to_string(FeatureStage s);

struct SclConfig {
    double lambda1 = 10.0;  // image feature consistency weight
    double lambda2 = 25.0;  // text feature consistency weight
    MatchMetric metric = MatchMetric::L1;
    KlDirection kl_direction = KlDirection::FrozenToPrompted;
    FeatureStage feature_stage = FeatureStage::PostNormalization;

    void validate() const;
};

// Consistency between a prompted and a frozen feature vector (both 1 x d).
// L1 and MSE sum over coordinates; Cosine is 1 - cos(a, b). Differentiable in
// `prompted`; `frozen` is normally a constant.
Tensor scl_feature_loss(const Tensor& prompted, const Tensor& frozen, MatchMetric metric);

// Plain-vector variant used at evaluation/oracle call sites.
double scl_feature_loss(const std::vector<double>& prompted, const std::vector<double>& frozen,
                        MatchMetric metric);

// KL divergence between two probability vectors, argument order set by
// `direction` (PromptedToFrozen puts the prompted distribution first).
// Probabilities are floored at 1e-12 before the log.
double scl_logits_loss(const std::vector<double>& prompted_probs,
                       const std::vector<double>& frozen_probs, KlDirection direction);

// Differentiable KL(a || frozen) / KL(frozen || a) against a constant frozen
// distribution; `prompted_probs` must come from a softmax (strictly positive).
Tensor scl_logits_loss(const Tensor& prompted_probs, const std::vector<double>& frozen_probs,
                       KlDirection direction);

// lambda1 * image + lambda2 * text + logits.
Tensor scl_combined(const Tensor& scl_image, const Tensor& scl_text, const Tensor& scl_logits,
                    const SclConfig& cfg);
double scl_combined(double scl_image, double scl_text, double scl_logits, const SclConfig& cfg);

// L_final = L_CE + L_SCL.
Tensor final_loss(const Tensor& ce, const Tensor& scl);

// N templates, each a word-id list with one class slot.
class TemplatePool {
public:
    // Lines of the form "w0 w3 {class} .."; tokens are either wN or {class}.
    static TemplatePool from_file(const std::string& path, const EncoderConfig& cfg,
                                  const Vocabulary& vocab);
    static TemplatePool from_lines(const std::vector<std::string>& lines, const EncoderConfig& cfg,
                                   const Vocabulary& vocab);
    // Deterministic built-in pool of `count` templates over the toy vocabulary.
    static TemplatePool builtin(int count, const EncoderConfig& cfg, const Vocabulary& vocab);

    int size() const { return static_cast<int>(templates_.size()); }
    TokenSequence instantiate(int index, int class_token_id) const;
    TemplatePool truncated(int count) const;

private:
    TemplatePool(const EncoderConfig& cfg, const Vocabulary& vocab) : cfg_(cfg), vocab_(vocab) {}
    struct Entry {
        std::vector<int> words_before;  // before the class slot
        std::vector<int> words_after;
    };
    EncoderConfig cfg_;
    Vocabulary vocab_;
    std::vector<Entry> templates_;
};

// Frozen text feature for one class: each template encoded, L2-normalized,
// averaged over the pool, then re-normalized.
std::vector<double> ensembled_frozen_text_feature(const FrozenEncoderPair& pair,
                                                  const TemplatePool& pool, int class_token_id);

}  // namespace plab
