#include <doctest.h>

#include <cmath>
#include <vector>

#include "plab/encoders.hpp"
#include "plab/rng.hpp"
#include "plab/tensor.hpp"

using namespace plab;

namespace {

EncoderConfig micro_config() {
    EncoderConfig cfg;
    cfg.d = 8;
    cfg.layers_f = 1;
    cfg.layers_g = 1;
    cfg.heads = 1;
    cfg.patch_count = 4;
    cfg.patch_dim = 3;
    cfg.vocab_size = 16;
    cfg.template_len = 2;
    cfg.max_seq = 8;
    cfg.mlp_mult = 2;
    return cfg;
}

Tensor rand_patches(RandomStream& rng, const EncoderConfig& cfg) {
    std::vector<double> v(static_cast<std::size_t>(cfg.patch_count) * cfg.patch_dim);
    for (auto& x : v) x = rng.normal(0.0, 1.0);
    return Tensor(cfg.patch_count, cfg.patch_dim, std::move(v));
}

// --- straight-line re-implementation of the forward pass on plain doubles ---

using Mat = std::vector<std::vector<double>>;

Mat to_mat(const Tensor& t) {
    Mat m(t.rows(), std::vector<double>(t.cols()));
    for (int i = 0; i < t.rows(); ++i)
        for (int j = 0; j < t.cols(); ++j) m[i][j] = t.at(i, j);
    return m;
}

Mat mat_mul(const Mat& a, const Mat& b) {
    Mat c(a.size(), std::vector<double>(b[0].size(), 0.0));
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t k = 0; k < b.size(); ++k)
            for (std::size_t j = 0; j < b[0].size(); ++j) c[i][j] += a[i][k] * b[k][j];
    return c;
}

void add_row(Mat& m, const Mat& row) {
    for (auto& r : m)
        for (std::size_t j = 0; j < r.size(); ++j) r[j] += row[0][j];
}

Mat oracle_layer_norm(const Mat& x, const Mat& gain, const Mat& bias) {
    Mat out = x;
    for (auto& row : out) {
        double mean = 0.0;
        for (double v : row) mean += v;
        mean /= row.size();
        double var = 0.0;
        for (double v : row) var += (v - mean) * (v - mean);
        var /= row.size();
        double inv = 1.0 / std::sqrt(var + 1e-5);
        for (std::size_t j = 0; j < row.size(); ++j)
            row[j] = gain[0][j] * (row[j] - mean) * inv + bias[0][j];
    }
    return out;
}

Mat oracle_softmax(const Mat& x) {
    Mat out = x;
    for (auto& row : out) {
        double mx = row[0];
        for (double v : row) mx = std::max(mx, v);
        double z = 0.0;
        for (double& v : row) {
            v = std::exp(v - mx);
            z += v;
        }
        for (double& v : row) v /= z;
    }
    return out;
}

// Single-head pre-norm block, written step by step without the graph engine.
Mat oracle_block(const BlockWeights& w, const Mat& x) {
    int d = static_cast<int>(x[0].size());
    Mat x1 = oracle_layer_norm(x, to_mat(w.ln1_gain), to_mat(w.ln1_bias));
    Mat q = mat_mul(x1, to_mat(w.wq));
    add_row(q, to_mat(w.bq));
    Mat k = mat_mul(x1, to_mat(w.wk));
    add_row(k, to_mat(w.bk));
    Mat v = mat_mul(x1, to_mat(w.wv));
    add_row(v, to_mat(w.bv));
    Mat scores(x.size(), std::vector<double>(x.size(), 0.0));
    double scale = 1.0 / std::sqrt(static_cast<double>(d));
    for (std::size_t i = 0; i < x.size(); ++i)
        for (std::size_t j = 0; j < x.size(); ++j) {
            double dot = 0.0;
            for (int c = 0; c < d; ++c) dot += q[i][c] * k[j][c];
            scores[i][j] = dot * scale;
        }
    Mat attn = oracle_softmax(scores);
    Mat mixed = mat_mul(attn, v);
    Mat o = mat_mul(mixed, to_mat(w.wo));
    add_row(o, to_mat(w.bo));
    Mat y = x;
    for (std::size_t i = 0; i < y.size(); ++i)
        for (int j = 0; j < d; ++j) y[i][j] += o[i][j];
    Mat y1 = oracle_layer_norm(y, to_mat(w.ln2_gain), to_mat(w.ln2_bias));
    Mat h = mat_mul(y1, to_mat(w.w1));
    add_row(h, to_mat(w.b1));
    for (auto& row : h)
        for (double& vv : row) vv = 0.5 * vv * (1.0 + std::erf(vv * M_SQRT1_2));
    Mat m = mat_mul(h, to_mat(w.w2));
    add_row(m, to_mat(w.b2));
    Mat out = y;
    for (std::size_t i = 0; i < out.size(); ++i)
        for (int j = 0; j < d; ++j) out[i][j] += m[i][j];
    return out;
}

Mat oracle_branch(const BranchWeights& br, Mat x, int pool_row) {
    for (const BlockWeights& b : br.blocks) x = oracle_block(b, x);
    x = oracle_layer_norm(x, to_mat(br.ln_final_gain), to_mat(br.ln_final_bias));
    Mat pooled{x[static_cast<std::size_t>(pool_row)]};
    Mat out = mat_mul(pooled, to_mat(br.proj_w));
    add_row(out, to_mat(br.proj_b));
    return out;
}

}  // namespace

TEST_CASE("encode_image output has the shared width and is deterministic") {
    EncoderConfig cfg = micro_config();
    FrozenEncoderPair pair = init_encoder_pair(cfg, 3);
    RandomStream rng(5);
    Tensor patches = rand_patches(rng, cfg);
    Tensor a = encode_image(pair, patches);
    Tensor b = encode_image(pair, patches);
    CHECK(a.rows() == 1);
    CHECK(a.cols() == cfg.d);
    CHECK(a.data() == b.data());
}

TEST_CASE("encode_image rejects wrong patch shapes") {
    EncoderConfig cfg = micro_config();
    FrozenEncoderPair pair = init_encoder_pair(cfg, 3);
    CHECK_THROWS_AS(encode_image(pair, Tensor(cfg.patch_count + 1, cfg.patch_dim)),
                    std::invalid_argument);
}

TEST_CASE("encode_text output width and class-token sensitivity") {
    EncoderConfig cfg = micro_config();
    FrozenEncoderPair pair = init_encoder_pair(cfg, 3);
    Vocabulary vocab{cfg.vocab_size, 3};
    std::vector<int> words{vocab.word(0), vocab.word(1)};
    Tensor a = encode_text(pair, make_token_sequence(cfg, vocab, words, vocab.class_token(0)));
    Tensor b = encode_text(pair, make_token_sequence(cfg, vocab, words, vocab.class_token(1)));
    CHECK(a.cols() == cfg.d);
    CHECK(a.data() != b.data());
}

TEST_CASE("image branch matches the straight-line oracle") {
    EncoderConfig cfg = micro_config();
    FrozenEncoderPair pair = init_encoder_pair(cfg, 17);
    RandomStream rng(21);
    Tensor patches = rand_patches(rng, cfg);
    Tensor got = encode_image(pair, patches);

    Mat embeds = mat_mul(to_mat(patches), to_mat(pair.patch_embed_w));
    add_row(embeds, to_mat(pair.patch_embed_b));
    Mat x{to_mat(pair.cls_token)[0]};
    for (auto& r : embeds) x.push_back(r);
    Mat pos = to_mat(pair.pos_image);
    for (std::size_t i = 0; i < x.size(); ++i)
        for (int j = 0; j < cfg.d; ++j) x[i][j] += pos[i][j];
    Mat want = oracle_branch(pair.image, x, 0);
    for (int j = 0; j < cfg.d; ++j) CHECK(std::fabs(got.at(0, j) - want[0][j]) < 1e-10);
}

TEST_CASE("text branch matches the straight-line oracle") {
    EncoderConfig cfg = micro_config();
    FrozenEncoderPair pair = init_encoder_pair(cfg, 17);
    Vocabulary vocab{cfg.vocab_size, 3};
    TokenSequence seq = make_token_sequence(cfg, vocab, {vocab.word(0), vocab.word(1)},
                                            vocab.class_token(2));
    Tensor got = encode_text(pair, seq);

    Mat embed = to_mat(pair.token_embed);
    Mat pos = to_mat(pair.pos_text);
    Mat x;
    for (std::size_t i = 0; i < seq.ids.size(); ++i) {
        x.push_back(embed[static_cast<std::size_t>(seq.ids[i])]);
        for (int j = 0; j < cfg.d; ++j) x[i][j] += pos[i][j];
    }
    Mat want = oracle_branch(pair.text, x, static_cast<int>(seq.ids.size()) - 1);
    for (int j = 0; j < cfg.d; ++j) CHECK(std::fabs(got.at(0, j) - want[0][j]) < 1e-10);
}

TEST_CASE("zero_shot_probs degenerate and trivial cases") {
    std::vector<double> f{1.0, 2.0, 3.0};
    SUBCASE("identical class features give uniform") {
        std::vector<std::vector<double>> cls(4, std::vector<double>{0.5, -0.5, 1.0});
        auto p = zero_shot_probs(f, cls, 10.0);
        for (double v : p) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
    }
    SUBCASE("single class") {
        auto p = zero_shot_probs(f, {{1.0, 0.0, 0.0}}, 10.0);
        REQUIRE(p.size() == 1);
        CHECK(p[0] == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("zero-norm features rejected") {
        CHECK_THROWS_AS(zero_shot_probs({0.0, 0.0, 0.0}, {{1.0, 0.0, 0.0}}, 10.0),
                        std::domain_error);
        CHECK_THROWS_AS(zero_shot_probs(f, {{0.0, 0.0, 0.0}}, 10.0), std::domain_error);
    }
    SUBCASE("tau must be positive") {
        CHECK_THROWS_AS(zero_shot_probs(f, {{1.0, 0.0, 0.0}}, 0.0), std::invalid_argument);
    }
}

TEST_CASE("zero_shot_probs matches direct formula evaluation") {
    RandomStream rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> f(6);
        for (auto& v : f) v = rng.normal(0.0, 1.0);
        std::vector<std::vector<double>> cls(3, std::vector<double>(6));
        for (auto& c : cls)
            for (auto& v : c) v = rng.normal(0.0, 1.0);
        double tau = rng.uniform(0.5, 20.0);
        auto got = zero_shot_probs(f, cls, tau);

        auto cosine = [&](const std::vector<double>& a, const std::vector<double>& b) {
            double dot = 0.0, na = 0.0, nb = 0.0;
            for (std::size_t i = 0; i < a.size(); ++i) {
                dot += a[i] * b[i];
                na += a[i] * a[i];
                nb += b[i] * b[i];
            }
            return dot / (std::sqrt(na) * std::sqrt(nb));
        };
        double z = 0.0;
        std::vector<double> want(3);
        for (int c = 0; c < 3; ++c) {
            want[c] = std::exp(tau * cosine(cls[c], f));
            z += want[c];
        }
        double sum = 0.0;
        for (int c = 0; c < 3; ++c) {
            CHECK(std::fabs(got[c] - want[c] / z) < 1e-12);
            sum += got[c];
        }
        CHECK(std::fabs(sum - 1.0) < 1e-12);
    }
}

TEST_CASE("zero_shot_probs is invariant to positive rescaling of the image feature") {
    std::vector<double> f{0.3, -1.1, 0.7};
    std::vector<double> f2{0.3 * 7.5, -1.1 * 7.5, 0.7 * 7.5};
    std::vector<std::vector<double>> cls{{1.0, 0.2, 0.0}, {-0.5, 0.5, 0.5}};
    auto a = zero_shot_probs(f, cls, 10.0);
    auto b = zero_shot_probs(f2, cls, 10.0);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::fabs(a[i] - b[i]) < 1e-12);
}

TEST_CASE("config validation") {
    EncoderConfig cfg = micro_config();
    cfg.heads = 3;  // 8 % 3 != 0
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = micro_config();
    cfg.tau = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = micro_config();
    cfg.max_seq = cfg.template_len + 2;  // no room for the class token
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("token sequence layout") {
    EncoderConfig cfg = micro_config();
    Vocabulary vocab{cfg.vocab_size, 3};
    TokenSequence seq = make_token_sequence(cfg, vocab, {vocab.word(0), vocab.word(1)},
                                            vocab.class_token(1));
    CHECK(seq.ids.front() == vocab.sos());
    CHECK(seq.ids.back() == vocab.eos());
    CHECK(seq.ids.size() == 2u + 2u + 1u);
    CHECK_THROWS_AS(make_token_sequence(cfg, vocab, std::vector<int>(10, vocab.word(0)),
                                        vocab.class_token(0)),
                    std::invalid_argument);
}

TEST_CASE("pretraining edge cases and determinism") {
    EncoderConfig cfg = micro_config();
    Vocabulary vocab{cfg.vocab_size, 3};
    RandomStream rng(41);
    std::vector<ContrastivePair> data;
    for (int i = 0; i < 8; ++i) {
        data.push_back({rand_patches(rng, cfg),
                        make_token_sequence(cfg, vocab, {vocab.word(0), vocab.word(1)},
                                            vocab.class_token(i % 3))});
    }

    SUBCASE("epochs = 0 returns a frozen randomly initialized pair") {
        PretrainOptions opts{0, 4, 0.01, 9};
        FrozenEncoderPair pair = pretrain_contrastive(cfg, data, opts);
        FrozenEncoderPair fresh = init_encoder_pair(cfg, 9);
        fresh.freeze();
        CHECK(pair.weight_checksum() == fresh.weight_checksum());
        for (const Tensor& t : pair.parameters()) CHECK_FALSE(t.requires_grad());
    }

    SUBCASE("batch size below 2 is rejected") {
        PretrainOptions opts{1, 1, 0.01, 9};
        CHECK_THROWS_AS(pretrain_contrastive(cfg, data, opts), std::invalid_argument);
    }

    SUBCASE("same seed twice gives bit-identical weights") {
        PretrainOptions opts{2, 4, 0.01, 9};
        FrozenEncoderPair a = pretrain_contrastive(cfg, data, opts);
        FrozenEncoderPair b = pretrain_contrastive(cfg, data, opts);
        CHECK(a.weight_checksum() == b.weight_checksum());
    }

    SUBCASE("weights are frozen after pretraining") {
        PretrainOptions opts{1, 4, 0.01, 9};
        FrozenEncoderPair pair = pretrain_contrastive(cfg, data, opts);
        for (const Tensor& t : pair.parameters()) CHECK_FALSE(t.requires_grad());
    }
}
