#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "plab/checkpoint.hpp"
#include "plab/encoders.hpp"
#include "plab/prompting.hpp"
#include "plab/rng.hpp"

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

struct TempDir {
    std::filesystem::path dir;
    TempDir() {
        dir = std::filesystem::temp_directory_path() /
              ("plab_ckpt_" + std::to_string(::getpid()));
        std::filesystem::create_directories(dir);
    }
    ~TempDir() { std::filesystem::remove_all(dir); }
    std::string path(const std::string& name) const { return (dir / name).string(); }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

}  // namespace

TEST_CASE("encoder checkpoint round-trips weights and forward pass") {
    TempDir tmp;
    EncoderConfig cfg = micro_config();
    FrozenEncoderPair pair = init_encoder_pair(cfg, 11);
    pair.freeze();

    const std::string path = tmp.path("encoder.json");
    save_encoder_pair(pair, path);
    FrozenEncoderPair loaded = load_encoder_pair(path);

    CHECK(loaded.weight_checksum() == pair.weight_checksum());

    RandomStream rng(99);
    std::vector<double> v(static_cast<std::size_t>(cfg.patch_count) * cfg.patch_dim);
    for (auto& x : v) x = rng.normal(0.0, 1.0);
    Tensor patches(cfg.patch_count, cfg.patch_dim, v);
    Tensor a = encode_image(pair, patches);
    Tensor b = encode_image(loaded, patches);
    for (int j = 0; j < a.cols(); ++j) CHECK(a.at(0, j) == b.at(0, j));

    Vocabulary vocab{cfg.vocab_size, 4};
    TokenSequence seq = make_token_sequence(
        cfg, vocab, canonical_template_words(vocab, cfg.template_len), vocab.class_token(2));
    Tensor ta = encode_text(pair, seq);
    Tensor tb = encode_text(loaded, seq);
    for (int j = 0; j < ta.cols(); ++j) CHECK(ta.at(0, j) == tb.at(0, j));
}

TEST_CASE("encoder checkpoint files are byte-stable") {
    TempDir tmp;
    FrozenEncoderPair pair = init_encoder_pair(micro_config(), 7);
    pair.freeze();
    save_encoder_pair(pair, tmp.path("a.json"));
    save_encoder_pair(pair, tmp.path("b.json"));
    CHECK(slurp(tmp.path("a.json")) == slurp(tmp.path("b.json")));
}

TEST_CASE("encoder checkpoint load rejects bad input") {
    TempDir tmp;

    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_encoder_pair(tmp.path("missing.json")), std::runtime_error);
    }
    SUBCASE("wrong format tag") {
        std::ofstream(tmp.path("junk.json")) << "{\"format\":\"other\",\"version\":1}\n";
        CHECK_THROWS_AS(load_encoder_pair(tmp.path("junk.json")), std::runtime_error);
    }
    SUBCASE("wrong version") {
        FrozenEncoderPair pair = init_encoder_pair(micro_config(), 7);
        pair.freeze();
        save_encoder_pair(pair, tmp.path("enc.json"));
        std::string text = slurp(tmp.path("enc.json"));
        std::string needle = "\"version\":1";
        text.replace(text.find(needle), needle.size(), "\"version\":2");
        std::ofstream(tmp.path("enc.json")) << text;
        CHECK_THROWS_AS(load_encoder_pair(tmp.path("enc.json")), std::runtime_error);
    }
    SUBCASE("shape mismatch against the stored config") {
        FrozenEncoderPair pair = init_encoder_pair(micro_config(), 7);
        pair.freeze();
        save_encoder_pair(pair, tmp.path("enc.json"));
        std::string text = slurp(tmp.path("enc.json"));
        // Claim a wider model than the stored tensors actually are.
        std::string needle = "\"d\":8";
        REQUIRE(text.find(needle) != std::string::npos);
        text.replace(text.find(needle), needle.size(), "\"d\":16");
        std::ofstream(tmp.path("enc.json")) << text;
        CHECK_THROWS_AS(load_encoder_pair(tmp.path("enc.json")), std::runtime_error);
    }
}

TEST_CASE("prompt checkpoint round-trips tensors and provenance") {
    TempDir tmp;
    EncoderConfig cfg = micro_config();
    FrozenEncoderPair pair = init_encoder_pair(cfg, 3);
    pair.freeze();
    Vocabulary vocab{cfg.vocab_size, 4};
    PromptConfig pc;
    pc.depth = 1;
    pc.t_count = cfg.template_len;
    PromptSet prompts = init_prompts(pair, pc, vocab, 21);

    PromptProvenance prov;
    prov.mode = "gpa";
    prov.mu = 15.0;
    prov.sigma2 = 1.0;
    prov.epochs = 20;
    const std::string path = tmp.path("prompts.json");
    save_prompts(prompts, path, prov);

    PromptProvenance got;
    PromptSet loaded = load_prompts(path, &got);
    CHECK(loaded.depth == prompts.depth);
    CHECK(loaded.propagate == prompts.propagate);
    CHECK(loaded.prompt_checksum() == prompts.prompt_checksum());
    CHECK(got.mode == "gpa");
    CHECK(got.mu == 15.0);
    CHECK(got.sigma2 == 1.0);
    CHECK(got.epochs == 20);

    TokenSequence seq = make_token_sequence(
        cfg, vocab, canonical_template_words(vocab, cfg.template_len), vocab.class_token(0));
    Tensor a = prompted_encode_text(pair, prompts, seq);
    Tensor b = prompted_encode_text(pair, loaded, seq);
    for (int j = 0; j < a.cols(); ++j) CHECK(a.at(0, j) == b.at(0, j));
}

TEST_CASE("prompt checkpoint load rejects depth mismatch") {
    TempDir tmp;
    EncoderConfig cfg = micro_config();
    FrozenEncoderPair pair = init_encoder_pair(cfg, 3);
    pair.freeze();
    Vocabulary vocab{cfg.vocab_size, 4};
    PromptConfig pc;
    pc.depth = 1;
    pc.t_count = cfg.template_len;
    PromptSet prompts = init_prompts(pair, pc, vocab, 21);
    save_prompts(prompts, tmp.path("p.json"));

    std::string text = slurp(tmp.path("p.json"));
    std::string needle = "\"depth\":1";
    REQUIRE(text.find(needle) != std::string::npos);
    text.replace(text.find(needle), needle.size(), "\"depth\":2");
    std::ofstream(tmp.path("p.json")) << text;
    CHECK_THROWS_AS(load_prompts(tmp.path("p.json")), std::runtime_error);
}
