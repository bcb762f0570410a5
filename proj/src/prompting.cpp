#include "plab/prompting.hpp"

#include <stdexcept>

#include "plab/rng.hpp"

namespace plab {

std::vector<Tensor> PromptSet::parameters() const {
    std::vector<Tensor> out;
    out.insert(out.end(), vision.begin(), vision.end());
    out.insert(out.end(), text.begin(), text.end());
    return out;
}

PromptSet PromptSet::clone(bool requires_grad) const {
    PromptSet c;
    c.depth = depth;
    c.propagate = propagate;
    for (const Tensor& t : vision) c.vision.emplace_back(t.rows(), t.cols(), t.data(), requires_grad);
    for (const Tensor& t : text) c.text.emplace_back(t.rows(), t.cols(), t.data(), requires_grad);
    return c;
}

std::uint64_t PromptSet::prompt_checksum() const { return checksum(parameters()); }

void PromptSet::set_requires_grad(bool v) {
    for (Tensor& t : vision) t.set_requires_grad(v);
    for (Tensor& t : text) t.set_requires_grad(v);
}

std::vector<int> canonical_template_words(const Vocabulary& vocab, int len) {
    std::vector<int> words;
    for (int i = 0; i < len; ++i) words.push_back(vocab.word(i));
    return words;
}

PromptSet init_prompts(const FrozenEncoderPair& pair, const PromptConfig& cfg,
                       const Vocabulary& vocab, std::uint64_t seed) {
    const EncoderConfig& enc = pair.config;
    if (cfg.depth < 0 || cfg.depth > std::min(enc.layers_f, enc.layers_g)) {
        throw std::invalid_argument("init_prompts: depth exceeds encoder depth");
    }
    if (cfg.v_count <= 0 || cfg.t_count <= 0) {
        throw std::invalid_argument("init_prompts: prompt counts must be positive");
    }
    if (cfg.template_init && cfg.t_count != enc.template_len) {
        throw std::invalid_argument("init_prompts: template initialization requires t_count == template_len");
    }
    RandomStream rng(mix_seed(seed, 0x9209275));
    PromptSet ps;
    ps.depth = cfg.depth;
    ps.propagate = cfg.propagate;
    auto draw = [&rng](int rows, int cols) {
        std::vector<double> v(static_cast<std::size_t>(rows) * cols);
        for (auto& x : v) x = rng.normal(0.0, 0.02);
        return Tensor(rows, cols, std::move(v), true);
    };
    for (int j = 0; j < cfg.depth; ++j) ps.vision.push_back(draw(cfg.v_count, enc.d));
    for (int j = 0; j < cfg.depth; ++j) {
        if (j == 0 && cfg.template_init) {
            std::vector<double> v;
            for (int w : canonical_template_words(vocab, enc.template_len)) {
                const auto& emb = pair.token_embed.data();
                v.insert(v.end(), emb.begin() + static_cast<std::size_t>(w) * enc.d,
                         emb.begin() + static_cast<std::size_t>(w + 1) * enc.d);
            }
            ps.text.emplace_back(cfg.t_count, enc.d, std::move(v), true);
        } else {
            ps.text.push_back(draw(cfg.t_count, enc.d));
        }
    }
    return ps;
}

namespace {

// Runs a branch with prompts occupying rows [prompt_at, prompt_at + count).
// x0 already contains the layer-0 prompts.
Tensor run_prompted_branch(const BranchWeights& br, const PromptSet& prompts,
                           const std::vector<Tensor>& layer_prompts, Tensor x, int heads,
                           int prompt_at, int pool_row) {
    int s = x.rows();
    for (std::size_t layer = 0; layer < br.blocks.size(); ++layer) {
        x = transformer_block(br.blocks[layer], x, heads);
        std::size_t next = layer + 1;
        if (!prompts.propagate && next < layer_prompts.size()) {
            int count = layer_prompts[next].rows();
            std::vector<Tensor> parts;
            if (prompt_at > 0) parts.push_back(slice_rows(x, 0, prompt_at));
            parts.push_back(layer_prompts[next]);
            parts.push_back(slice_rows(x, prompt_at + count, s));
            x = concat_rows(parts);
        }
    }
    x = layer_norm(x, br.ln_final_gain, br.ln_final_bias);
    Tensor pooled = slice_rows(x, pool_row, pool_row + 1);
    return add(matmul(pooled, br.proj_w), br.proj_b);
}

}  // namespace

Tensor prompted_encode_image(const FrozenEncoderPair& pair, const PromptSet& prompts,
                             const Tensor& patches) {
    if (prompts.depth == 0) return encode_image(pair, patches);
    const EncoderConfig& cfg = pair.config;
    if (patches.rows() != cfg.patch_count || patches.cols() != cfg.patch_dim) {
        throw std::invalid_argument("prompted_encode_image: bad patch shape");
    }
    int v = prompts.vision[0].rows();
    Tensor embeds = add(matmul(patches, pair.patch_embed_w),
                        broadcast_rows(pair.patch_embed_b, cfg.patch_count));
    Tensor tokens = concat_rows({pair.cls_token, embeds});
    Tensor positioned = add(tokens, slice_rows(pair.pos_image, 0, cfg.patch_count + 1));
    Tensor x = concat_rows({prompts.vision[0], positioned});
    return run_prompted_branch(pair.image, prompts, prompts.vision, x, cfg.heads,
                               /*prompt_at=*/0, /*pool_row=*/v);
}

Tensor prompted_encode_text(const FrozenEncoderPair& pair, const PromptSet& prompts,
                            const TokenSequence& seq) {
    if (prompts.depth == 0) return encode_text(pair, seq);
    const EncoderConfig& cfg = pair.config;
    int s = static_cast<int>(seq.ids.size());
    int t = prompts.text[0].rows();
    if (s + t > cfg.max_seq) throw std::invalid_argument("prompted_encode_text: sequence exceeds max_seq");
    std::vector<Tensor> rows;
    for (int id : seq.ids) {
        if (id < 0 || id >= cfg.vocab_size) throw std::invalid_argument("prompted_encode_text: bad token id");
        rows.push_back(slice_rows(pair.token_embed, id, id + 1));
    }
    Tensor tokens = concat_rows(rows);
    // prompts sit between SOS and the first template word
    Tensor x = concat_rows({slice_rows(tokens, 0, 1), prompts.text[0], slice_rows(tokens, 1, s)});
    x = add(x, slice_rows(pair.pos_text, 0, s + t));
    return run_prompted_branch(pair.text, prompts, prompts.text, x, cfg.heads,
                               /*prompt_at=*/1, /*pool_row=*/s + t - 1);
}

Tensor ce_loss(const Tensor& image_feat, const Tensor& class_feats, int label, double tau) {
    if (!(tau > 0.0)) throw std::invalid_argument("ce_loss: tau must be positive");
    if (image_feat.rows() != 1 || image_feat.cols() != class_feats.cols()) {
        throw std::invalid_argument("ce_loss: feature dimension mismatch");
    }
    int c = class_feats.rows();
    if (label < 0 || label >= c) throw std::invalid_argument("ce_loss: label out of range");
    Tensor f = l2_normalize_rows(image_feat);
    Tensor g = l2_normalize_rows(class_feats);
    Tensor logits = scalar_mul(matmul(f, transpose(g)), tau);
    Tensor probs = softmax_rows(logits);
    std::vector<double> onehot(c, 0.0);
    onehot[label] = 1.0;
    Tensor mask(1, c, std::move(onehot));
    return scalar_mul(sum(elementwise_mul(log(probs), mask)), -1.0);
}

}  // namespace plab
