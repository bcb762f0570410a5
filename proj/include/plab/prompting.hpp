#pragma once

#include <cstdint>
#include <vector>

#include "plab/encoders.hpp"
#include "plab/tensor.hpp"

namespace plab {

struct PromptConfig {
    int depth = 3;    // J, prompted layers per branch
    int v_count = 4;  // visual prompts per layer
    int t_count = 4;  // text prompts per layer
    bool template_init = true;  // first-layer text prompts copy the canonical template embedding
    // When true, first-layer prompts propagate through deeper layers instead of
    // being replaced by that layer's own prompt tensors (ablation path).
    bool propagate = false;
};

// The only trainable state during tuning: per-layer vision and text prompts.
struct PromptSet {
    int depth = 0;
    bool propagate = false;
    std::vector<Tensor> vision;  // depth tensors, V x d
    std::vector<Tensor> text;    // depth tensors, T x d

    std::vector<Tensor> parameters() const;
    PromptSet clone(bool requires_grad) const;
    std::uint64_t prompt_checksum() const;
    void set_requires_grad(bool v);
};

// The fixed toy analogue of "a photo of a": the first `len` template words.
std::vector<int> canonical_template_words(const Vocabulary& vocab, int len);

// Vision prompts N(0, 0.02); text prompts likewise except layer 0, which
// copies the canonical template word embeddings when template_init is set
// (requires t_count == template_len).
PromptSet init_prompts(const FrozenEncoderPair& pair, const PromptConfig& cfg,
                       const Vocabulary& vocab, std::uint64_t seed);

// [P_v[0]; e_cls; patches] through the image branch; at prompted layer j > 0
// the V prompt positions are replaced by P_v[j]. Depth 0 reduces to
// encode_image exactly.
Tensor prompted_encode_image(const FrozenEncoderPair& pair, const PromptSet& prompts,
                             const Tensor& patches);

// [SOS; P_t[0]; words; class; EOS] through the text branch with the same
// replacement rule; pooled at EOS.
Tensor prompted_encode_text(const FrozenEncoderPair& pair, const PromptSet& prompts,
                            const TokenSequence& seq);

// -log softmax_y of temperature-scaled cosine similarities between the image
// feature (1 x d) and each class feature row (C x d); differentiable.
Tensor ce_loss(const Tensor& image_feat, const Tensor& class_feats, int label, double tau);

}  // namespace plab
