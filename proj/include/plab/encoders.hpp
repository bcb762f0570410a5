#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "plab/tensor.hpp"

namespace plab {

// Shapes and fixed scalars of the dual encoder. Token embedding width equals
// the shared space width d on both branches; a final linear map projects the
// pooled token into the shared space.
struct EncoderConfig {
    int d = 32;           // shared embedding width
    int layers_f = 4;     // image branch depth
    int layers_g = 4;     // text branch depth
    int heads = 4;
    int patch_count = 16;  // M
    int patch_dim = 12;
    int vocab_size = 64;   // includes SOS/EOS, class tokens and template words
    int template_len = 4;  // L, canonical template word count
    int max_seq = 16;
    int mlp_mult = 2;      // MLP hidden width = mlp_mult * d
    double tau = 10.0;     // fixed temperature

    void validate() const;
};

// Token id conventions shared by the text pipeline: 0 = SOS, 1 = EOS, then
// one id per class, then template-word ids.
struct Vocabulary {
    int vocab_size = 64;
    int num_classes = 10;

    int sos() const { return 0; }
    int eos() const { return 1; }
    int class_token(int k) const;
    int word(int i) const;
    int num_words() const { return vocab_size - 2 - num_classes; }
    bool is_class_token(int id) const { return id >= 2 && id < 2 + num_classes; }
};

// SOS, template words, class token, EOS.
struct TokenSequence {
    std::vector<int> ids;
};

TokenSequence make_token_sequence(const EncoderConfig& cfg, const Vocabulary& vocab,
                                  const std::vector<int>& template_words, int class_token_id);

struct BlockWeights {
    Tensor ln1_gain, ln1_bias;
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor ln2_gain, ln2_bias;
    Tensor w1, b1, w2, b2;
};

struct BranchWeights {
    std::vector<BlockWeights> blocks;
    Tensor ln_final_gain, ln_final_bias;
    Tensor proj_w, proj_b;  // d -> d
};

struct FrozenEncoderPair {
    EncoderConfig config;

    // image branch
    Tensor patch_embed_w, patch_embed_b;  // patch_dim -> d
    Tensor cls_token;                     // 1 x d
    Tensor pos_image;                     // (1 + M) x d
    BranchWeights image;

    // text branch
    Tensor token_embed;  // vocab_size x d
    Tensor pos_text;     // max_seq x d
    BranchWeights text;

    std::vector<std::pair<std::string, Tensor>> named_weights();
    std::vector<Tensor> parameters();
    std::vector<Tensor> parameters() const;
    void freeze();
    std::uint64_t weight_checksum() const;
};

// Random initialization with requires_grad enabled (for pretraining).
FrozenEncoderPair init_encoder_pair(const EncoderConfig& cfg, std::uint64_t seed);

// One transformer block applied to an S x d sequence.
Tensor transformer_block(const BlockWeights& w, const Tensor& x, int heads);

// Full image branch: patches (M x patch_dim) -> projected d-vector (1 x d).
Tensor encode_image(const FrozenEncoderPair& pair, const Tensor& patches);

// Full text branch: token sequence -> projected d-vector (1 x d), pooled at EOS.
Tensor encode_text(const FrozenEncoderPair& pair, const TokenSequence& seq);

// Softmax over temperature-scaled cosine similarities. Plain (graph-free)
// evaluation used at inference time.
std::vector<double> zero_shot_probs(const std::vector<double>& image_feat,
                                    const std::vector<std::vector<double>>& class_feats,
                                    double tau);

struct ContrastivePair {
    Tensor patches;       // M x patch_dim, requires_grad = false
    TokenSequence text;
};

struct PretrainOptions {
    int epochs = 30;
    int batch_size = 16;
    double learning_rate = 0.005;
    std::uint64_t seed = 0;
};

// Symmetric in-batch contrastive pretraining over image/text pairs. Returns a
// frozen pair; the per-epoch mean loss trace is written to `loss_trace` when
// non-null.
FrozenEncoderPair pretrain_contrastive(const EncoderConfig& cfg,
                                       const std::vector<ContrastivePair>& dataset,
                                       const PretrainOptions& opts,
                                       std::vector<double>* loss_trace = nullptr);

}  // namespace plab
