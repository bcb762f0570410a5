#include "plab/encoders.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "plab/rng.hpp"

namespace plab {

void EncoderConfig::validate() const {
    if (d <= 0 || layers_f <= 0 || layers_g <= 0 || heads <= 0 || patch_count <= 0 ||
        patch_dim <= 0 || vocab_size <= 0 || template_len <= 0 || max_seq <= 0 || mlp_mult <= 0) {
        throw std::invalid_argument("EncoderConfig: all extents must be positive");
    }
    if (d % heads != 0) throw std::invalid_argument("EncoderConfig: d must be divisible by heads");
    if (max_seq < template_len + 3) {
        throw std::invalid_argument("EncoderConfig: max_seq too small for SOS + template + class + EOS");
    }
    if (!(tau > 0.0)) throw std::invalid_argument("EncoderConfig: tau must be positive");
}

int Vocabulary::class_token(int k) const {
    if (k < 0 || k >= num_classes) throw std::invalid_argument("Vocabulary: class index out of range");
    return 2 + k;
}

int Vocabulary::word(int i) const {
    if (i < 0 || i >= num_words()) throw std::invalid_argument("Vocabulary: word index out of range");
    return 2 + num_classes + i;
}

TokenSequence make_token_sequence(const EncoderConfig& cfg, const Vocabulary& vocab,
                                  const std::vector<int>& template_words, int class_token_id) {
    TokenSequence seq;
    seq.ids.push_back(vocab.sos());
    for (int w : template_words) {
        if (w < 0 || w >= cfg.vocab_size) throw std::invalid_argument("token id out of vocabulary");
        seq.ids.push_back(w);
    }
    if (class_token_id < 0 || class_token_id >= cfg.vocab_size) {
        throw std::invalid_argument("class token id out of vocabulary");
    }
    seq.ids.push_back(class_token_id);
    seq.ids.push_back(vocab.eos());
    if (static_cast<int>(seq.ids.size()) > cfg.max_seq) {
        throw std::invalid_argument("token sequence exceeds max_seq");
    }
    return seq;
}

namespace {

Tensor rand_tensor(RandomStream& rng, int rows, int cols, double std) {
    std::vector<double> v(static_cast<std::size_t>(rows) * cols);
    for (auto& x : v) x = rng.normal(0.0, std);
    return Tensor(rows, cols, std::move(v), true);
}

BlockWeights init_block(RandomStream& rng, int d, int hidden) {
    BlockWeights b;
    double ws = 1.0 / std::sqrt(static_cast<double>(d));
    double hs = 1.0 / std::sqrt(static_cast<double>(hidden));
    b.ln1_gain = Tensor(1, d, std::vector<double>(d, 1.0), true);
    b.ln1_bias = Tensor(1, d, true);
    b.wq = rand_tensor(rng, d, d, ws);
    b.bq = Tensor(1, d, true);
    b.wk = rand_tensor(rng, d, d, ws);
    b.bk = Tensor(1, d, true);
    b.wv = rand_tensor(rng, d, d, ws);
    b.bv = Tensor(1, d, true);
    b.wo = rand_tensor(rng, d, d, ws);
    b.bo = Tensor(1, d, true);
    b.ln2_gain = Tensor(1, d, std::vector<double>(d, 1.0), true);
    b.ln2_bias = Tensor(1, d, true);
    b.w1 = rand_tensor(rng, d, hidden, ws);
    b.b1 = Tensor(1, hidden, true);
    b.w2 = rand_tensor(rng, hidden, d, hs);
    b.b2 = Tensor(1, d, true);
    return b;
}

BranchWeights init_branch(RandomStream& rng, int d, int layers, int hidden) {
    BranchWeights br;
    for (int i = 0; i < layers; ++i) br.blocks.push_back(init_block(rng, d, hidden));
    br.ln_final_gain = Tensor(1, d, std::vector<double>(d, 1.0), true);
    br.ln_final_bias = Tensor(1, d, true);
    br.proj_w = rand_tensor(rng, d, d, 1.0 / std::sqrt(static_cast<double>(d)));
    br.proj_b = Tensor(1, d, true);
    return br;
}

void collect_branch(const std::string& prefix, BranchWeights& br,
                    std::vector<std::pair<std::string, Tensor>>& out) {
    for (std::size_t i = 0; i < br.blocks.size(); ++i) {
        auto& b = br.blocks[i];
        std::string p = prefix + ".block" + std::to_string(i) + ".";
        out.emplace_back(p + "ln1_gain", b.ln1_gain);
        out.emplace_back(p + "ln1_bias", b.ln1_bias);
        out.emplace_back(p + "wq", b.wq);
        out.emplace_back(p + "bq", b.bq);
        out.emplace_back(p + "wk", b.wk);
        out.emplace_back(p + "bk", b.bk);
        out.emplace_back(p + "wv", b.wv);
        out.emplace_back(p + "bv", b.bv);
        out.emplace_back(p + "wo", b.wo);
        out.emplace_back(p + "bo", b.bo);
        out.emplace_back(p + "ln2_gain", b.ln2_gain);
        out.emplace_back(p + "ln2_bias", b.ln2_bias);
        out.emplace_back(p + "w1", b.w1);
        out.emplace_back(p + "b1", b.b1);
        out.emplace_back(p + "w2", b.w2);
        out.emplace_back(p + "b2", b.b2);
    }
    out.emplace_back(prefix + ".ln_final_gain", br.ln_final_gain);
    out.emplace_back(prefix + ".ln_final_bias", br.ln_final_bias);
    out.emplace_back(prefix + ".proj_w", br.proj_w);
    out.emplace_back(prefix + ".proj_b", br.proj_b);
}

}  // namespace

std::vector<std::pair<std::string, Tensor>> FrozenEncoderPair::named_weights() {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("image.patch_embed_w", patch_embed_w);
    out.emplace_back("image.patch_embed_b", patch_embed_b);
    out.emplace_back("image.cls_token", cls_token);
    out.emplace_back("image.pos", pos_image);
    collect_branch("image", image, out);
    out.emplace_back("text.token_embed", token_embed);
    out.emplace_back("text.pos", pos_text);
    collect_branch("text", text, out);
    return out;
}

std::vector<Tensor> FrozenEncoderPair::parameters() {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_weights()) out.push_back(t);
    return out;
}

std::vector<Tensor> FrozenEncoderPair::parameters() const {
    return const_cast<FrozenEncoderPair*>(this)->parameters();
}

void FrozenEncoderPair::freeze() {
    for (Tensor& t : parameters()) {
        t.zero_grad();
        t.set_requires_grad(false);
    }
}

std::uint64_t FrozenEncoderPair::weight_checksum() const { return checksum(parameters()); }

FrozenEncoderPair init_encoder_pair(const EncoderConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    RandomStream rng(mix_seed(seed, 0x9c0de));
    FrozenEncoderPair pair;
    pair.config = cfg;
    int hidden = cfg.mlp_mult * cfg.d;
    pair.patch_embed_w = rand_tensor(rng, cfg.patch_dim, cfg.d, 1.0 / std::sqrt(static_cast<double>(cfg.patch_dim)));
    pair.patch_embed_b = Tensor(1, cfg.d, true);
    pair.cls_token = rand_tensor(rng, 1, cfg.d, 0.02);
    pair.pos_image = rand_tensor(rng, cfg.patch_count + 1, cfg.d, 0.02);
    pair.image = init_branch(rng, cfg.d, cfg.layers_f, hidden);
    pair.token_embed = rand_tensor(rng, cfg.vocab_size, cfg.d, 0.02);
    pair.pos_text = rand_tensor(rng, cfg.max_seq, cfg.d, 0.02);
    pair.text = init_branch(rng, cfg.d, cfg.layers_g, hidden);
    return pair;
}

Tensor transformer_block(const BlockWeights& w, const Tensor& x, int heads) {
    int s = x.rows();
    int d = x.cols();
    int hd = d / heads;
    Tensor x1 = layer_norm(x, w.ln1_gain, w.ln1_bias);
    Tensor q = add(matmul(x1, w.wq), broadcast_rows(w.bq, s));
    Tensor k = add(matmul(x1, w.wk), broadcast_rows(w.bk, s));
    Tensor v = add(matmul(x1, w.wv), broadcast_rows(w.bv, s));
    std::vector<Tensor> head_out;
    double scale = 1.0 / std::sqrt(static_cast<double>(hd));
    for (int h = 0; h < heads; ++h) {
        Tensor qh = slice_cols(q, h * hd, (h + 1) * hd);
        Tensor kh = slice_cols(k, h * hd, (h + 1) * hd);
        Tensor vh = slice_cols(v, h * hd, (h + 1) * hd);
        Tensor attn = softmax_rows(scalar_mul(matmul(qh, transpose(kh)), scale));
        head_out.push_back(matmul(attn, vh));
    }
    Tensor o = add(matmul(concat_cols(head_out), w.wo), broadcast_rows(w.bo, s));
    Tensor y = add(x, o);
    Tensor y1 = layer_norm(y, w.ln2_gain, w.ln2_bias);
    Tensor m = add(matmul(gelu(add(matmul(y1, w.w1), broadcast_rows(w.b1, s))), w.w2),
                   broadcast_rows(w.b2, s));
    return add(y, m);
}

namespace {

Tensor run_branch(const BranchWeights& br, Tensor x, int heads, int pool_row) {
    for (const BlockWeights& b : br.blocks) x = transformer_block(b, x, heads);
    x = layer_norm(x, br.ln_final_gain, br.ln_final_bias);
    Tensor pooled = slice_rows(x, pool_row, pool_row + 1);
    return add(matmul(pooled, br.proj_w), br.proj_b);
}

}  // namespace

Tensor encode_image(const FrozenEncoderPair& pair, const Tensor& patches) {
    const EncoderConfig& cfg = pair.config;
    if (patches.rows() != cfg.patch_count || patches.cols() != cfg.patch_dim) {
        throw std::invalid_argument("encode_image: patches must be " + std::to_string(cfg.patch_count) +
                                    "x" + std::to_string(cfg.patch_dim) + ", got " +
                                    std::to_string(patches.rows()) + "x" + std::to_string(patches.cols()));
    }
    Tensor embeds = add(matmul(patches, pair.patch_embed_w),
                        broadcast_rows(pair.patch_embed_b, cfg.patch_count));
    Tensor seq = concat_rows({pair.cls_token, embeds});
    Tensor x = add(seq, slice_rows(pair.pos_image, 0, cfg.patch_count + 1));
    return run_branch(pair.image, x, cfg.heads, 0);
}

Tensor encode_text(const FrozenEncoderPair& pair, const TokenSequence& seq) {
    const EncoderConfig& cfg = pair.config;
    int s = static_cast<int>(seq.ids.size());
    if (s < 3 || s > cfg.max_seq) throw std::invalid_argument("encode_text: bad sequence length");
    std::vector<Tensor> rows;
    rows.reserve(seq.ids.size());
    for (int id : seq.ids) {
        if (id < 0 || id >= cfg.vocab_size) throw std::invalid_argument("encode_text: token id out of range");
        rows.push_back(slice_rows(pair.token_embed, id, id + 1));
    }
    Tensor x = add(concat_rows(rows), slice_rows(pair.pos_text, 0, s));
    return run_branch(pair.text, x, cfg.heads, s - 1);
}

std::vector<double> zero_shot_probs(const std::vector<double>& image_feat,
                                    const std::vector<std::vector<double>>& class_feats,
                                    double tau) {
    if (!(tau > 0.0)) throw std::invalid_argument("zero_shot_probs: tau must be positive");
    if (class_feats.empty()) throw std::invalid_argument("zero_shot_probs: no classes");
    auto norm = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x * x;
        return std::sqrt(s);
    };
    double fn = norm(image_feat);
    if (fn == 0.0) throw std::domain_error("zero_shot_probs: zero-norm image feature");
    std::vector<double> logits(class_feats.size());
    for (std::size_t c = 0; c < class_feats.size(); ++c) {
        const auto& g = class_feats[c];
        if (g.size() != image_feat.size()) throw std::invalid_argument("zero_shot_probs: dimension mismatch");
        double gn = norm(g);
        if (gn == 0.0) throw std::domain_error("zero_shot_probs: zero-norm class feature");
        double dot = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * image_feat[i];
        logits[c] = tau * dot / (fn * gn);
    }
    double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double& l : logits) {
        l = std::exp(l - mx);
        z += l;
    }
    for (double& l : logits) l /= z;
    return logits;
}

FrozenEncoderPair pretrain_contrastive(const EncoderConfig& cfg,
                                       const std::vector<ContrastivePair>& dataset,
                                       const PretrainOptions& opts,
                                       std::vector<double>* loss_trace) {
    FrozenEncoderPair pair = init_encoder_pair(cfg, opts.seed);
    if (opts.epochs > 0 && opts.batch_size < 2) {
        throw std::invalid_argument("pretrain_contrastive: batch size must be at least 2");
    }
    std::vector<Tensor> params = pair.parameters();
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        RandomStream rng(mix_seed(opts.seed, 0xba7c4 + epoch));
        rng.shuffle(order);
        double epoch_loss = 0.0;
        int batches = 0;
        for (std::size_t start = 0; start + 2 <= order.size(); start += opts.batch_size) {
            std::size_t end = std::min(order.size(), start + opts.batch_size);
            int b = static_cast<int>(end - start);
            if (b < 2) break;
            std::vector<Tensor> img_rows, txt_rows;
            for (std::size_t i = start; i < end; ++i) {
                img_rows.push_back(encode_image(pair, dataset[order[i]].patches));
                txt_rows.push_back(encode_text(pair, dataset[order[i]].text));
            }
            Tensor fi = l2_normalize_rows(concat_rows(img_rows));
            Tensor ft = l2_normalize_rows(concat_rows(txt_rows));
            Tensor sim = scalar_mul(matmul(fi, transpose(ft)), cfg.tau);
            std::vector<double> eye(static_cast<std::size_t>(b) * b, 0.0);
            for (int i = 0; i < b; ++i) eye[static_cast<std::size_t>(i) * b + i] = 1.0;
            Tensor diag_mask(b, b, std::move(eye));
            Tensor li2t = scalar_mul(sum(elementwise_mul(log(softmax_rows(sim)), diag_mask)), -1.0 / b);
            Tensor lt2i = scalar_mul(sum(elementwise_mul(log(softmax_rows(transpose(sim))), diag_mask)), -1.0 / b);
            Tensor loss = scalar_mul(add(li2t, lt2i), 0.5);
            backward(loss);
            sgd_step(params, opts.learning_rate);
            epoch_loss += loss.value();
            ++batches;
        }
        if (loss_trace && batches > 0) loss_trace->push_back(epoch_loss / batches);
    }
    pair.freeze();
    return pair;
}

}  // namespace plab
