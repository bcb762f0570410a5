#include "plab/regularizers.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "plab/rng.hpp"

namespace plab {

namespace {
constexpr double kProbFloor = 1e-12;
}

MatchMetric match_metric_from_string(const std::string& s) {
    if (s == "l1" || s == "L1") return MatchMetric::L1;
    if (s == "mse" || s == "MSE") return MatchMetric::MSE;
    if (s == "cosine") return MatchMetric::Cosine;
    throw std::invalid_argument("unknown matching metric: " + s);
}

std::string to_string(MatchMetric m) {
    switch (m) {
        case MatchMetric::L1: return "l1";
        case MatchMetric::MSE: return "mse";
        case MatchMetric::Cosine: return "cosine";
    }
    return "?";
}

KlDirection kl_direction_from_string(const std::string& s) {
    if (s == "prompted_to_frozen") return KlDirection::PromptedToFrozen;
    if (s == "frozen_to_prompted") return KlDirection::FrozenToPrompted;
    throw std::invalid_argument("unknown KL direction: " + s);
}

std::string to_string(KlDirection d) {
    return d == KlDirection::PromptedToFrozen ? "prompted_to_frozen" : "frozen_to_prompted";
}

FeatureStage feature_stage_from_string(const std::string& s) {
    if (s == "pre_normalization") return FeatureStage::PreNormalization;
    if (s == "post_normalization") return FeatureStage::PostNormalization;
    throw std::invalid_argument("unknown feature stage: " + s);
}

std::string to_string(FeatureStage s) {
    return s == FeatureStage::PreNormalization ? "pre_normalization" : "post_normalization";
}

void SclConfig::validate() const {
    if (lambda1 < 0.0 || lambda2 < 0.0) {
        throw std::invalid_argument("SclConfig: lambda weights must be nonnegative");
    }
}

Tensor scl_feature_loss(const Tensor& prompted, const Tensor& frozen, MatchMetric metric) {
    if (prompted.rows() != 1 || frozen.rows() != 1 || prompted.cols() != frozen.cols()) {
        throw std::invalid_argument("scl_feature_loss: dimension mismatch");
    }
    switch (metric) {
        case MatchMetric::L1:
            return sum(abs(sub(prompted, frozen)));
        case MatchMetric::MSE: {
            Tensor diff = sub(prompted, frozen);
            return sum(elementwise_mul(diff, diff));
        }
        case MatchMetric::Cosine: {
            auto zero_norm = [](const Tensor& t) {
                double s = 0.0;
                for (double x : t.data()) s += x * x;
                return s == 0.0;
            };
            if (zero_norm(prompted) || zero_norm(frozen)) {
                throw std::domain_error("scl_feature_loss: cosine with zero-norm input");
            }
            Tensor dot = sum(elementwise_mul(l2_normalize_rows(prompted), l2_normalize_rows(frozen)));
            return sub(Tensor::scalar(1.0), dot);
        }
    }
    throw std::invalid_argument("scl_feature_loss: bad metric");
}

double scl_feature_loss(const std::vector<double>& prompted, const std::vector<double>& frozen,
                        MatchMetric metric) {
    return scl_feature_loss(Tensor::row(std::vector<double>(prompted)),
                            Tensor::row(std::vector<double>(frozen)), metric).value();
}

namespace {

void check_simplex(const std::vector<double>& p, const char* who) {
    double s = 0.0;
    for (double x : p) {
        if (x < -1e-9) throw std::invalid_argument(std::string(who) + ": negative probability");
        s += x;
    }
    if (std::abs(s - 1.0) > 1e-9) {
        throw std::invalid_argument(std::string(who) + ": probabilities sum to " + std::to_string(s));
    }
}

}  // namespace

double scl_logits_loss(const std::vector<double>& prompted_probs,
                       const std::vector<double>& frozen_probs, KlDirection direction) {
    if (prompted_probs.size() != frozen_probs.size()) {
        throw std::invalid_argument("scl_logits_loss: size mismatch");
    }
    check_simplex(prompted_probs, "scl_logits_loss");
    check_simplex(frozen_probs, "scl_logits_loss");
    const auto& a = direction == KlDirection::PromptedToFrozen ? prompted_probs : frozen_probs;
    const auto& b = direction == KlDirection::PromptedToFrozen ? frozen_probs : prompted_probs;
    double kl = 0.0;
    bool clamped = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] <= 0.0) continue;  // 0 * log 0 = 0
        double bi = b[i];
        if (bi < kProbFloor) {
            bi = kProbFloor;
            clamped = true;
        }
        double ai = std::max(a[i], kProbFloor);
        kl += a[i] * (std::log(ai) - std::log(bi));
    }
    if (clamped) warn_degenerate("scl_logits_loss clamped a zero probability");
    return kl;
}

Tensor scl_logits_loss(const Tensor& prompted_probs, const std::vector<double>& frozen_probs,
                       KlDirection direction) {
    if (prompted_probs.rows() != 1 ||
        prompted_probs.cols() != static_cast<int>(frozen_probs.size())) {
        throw std::invalid_argument("scl_logits_loss: size mismatch");
    }
    std::vector<double> q = frozen_probs;
    for (double& x : q) x = std::max(x, kProbFloor);
    int c = prompted_probs.cols();
    Tensor qconst(1, c, std::move(q));
    if (direction == KlDirection::PromptedToFrozen) {
        // sum a * (log a - log q)
        Tensor diff = sub(log(prompted_probs), log(qconst));
        return sum(elementwise_mul(prompted_probs, diff));
    }
    // sum q * (log q - log a); only log a carries gradient
    Tensor diff = sub(log(qconst), log(prompted_probs));
    return sum(elementwise_mul(qconst, diff));
}

Tensor scl_combined(const Tensor& scl_image, const Tensor& scl_text, const Tensor& scl_logits,
                    const SclConfig& cfg) {
    cfg.validate();
    return add(add(scalar_mul(scl_image, cfg.lambda1), scalar_mul(scl_text, cfg.lambda2)),
               scl_logits);
}

double scl_combined(double scl_image, double scl_text, double scl_logits, const SclConfig& cfg) {
    cfg.validate();
    if (!std::isfinite(scl_image) || !std::isfinite(scl_text) || !std::isfinite(scl_logits)) {
        throw std::domain_error("scl_combined: non-finite component");
    }
    return cfg.lambda1 * scl_image + cfg.lambda2 * scl_text + scl_logits;
}

Tensor final_loss(const Tensor& ce, const Tensor& scl) { return add(ce, scl); }

TemplatePool TemplatePool::from_lines(const std::vector<std::string>& lines,
                                      const EncoderConfig& cfg, const Vocabulary& vocab) {
    TemplatePool pool(cfg, vocab);
    for (const std::string& line : lines) {
        if (line.empty() || line[0] == '#') continue;
        Entry e;
        bool seen_slot = false;
        std::istringstream iss(line);
        std::string tok;
        while (iss >> tok) {
            if (tok == "{class}") {
                if (seen_slot) throw std::invalid_argument("template has two class slots: " + line);
                seen_slot = true;
            } else if (tok.size() > 1 && tok[0] == 'w') {
                int idx = std::stoi(tok.substr(1));
                int id = vocab.word(idx);
                (seen_slot ? e.words_after : e.words_before).push_back(id);
            } else {
                throw std::invalid_argument("bad template token '" + tok + "' in: " + line);
            }
        }
        if (!seen_slot) throw std::invalid_argument("template lacks a {class} slot: " + line);
        // SOS + words + class + EOS must fit
        int len = static_cast<int>(e.words_before.size() + e.words_after.size()) + 3;
        if (len > cfg.max_seq) throw std::invalid_argument("template exceeds max_seq: " + line);
        pool.templates_.push_back(std::move(e));
    }
    if (pool.templates_.empty()) throw std::invalid_argument("template pool is empty");
    return pool;
}

TemplatePool TemplatePool::from_file(const std::string& path, const EncoderConfig& cfg,
                                     const Vocabulary& vocab) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open template pool: " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return from_lines(lines, cfg, vocab);
}

TemplatePool TemplatePool::builtin(int count, const EncoderConfig& cfg, const Vocabulary& vocab) {
    if (count < 1) throw std::invalid_argument("TemplatePool::builtin: count must be at least 1");
    TemplatePool pool(cfg, vocab);
    // Template 0 is the canonical template; the rest vary word choices and
    // lengths deterministically within the word vocabulary.
    RandomStream rng(0x7e3914);
    int words = vocab.num_words();
    int max_words = cfg.max_seq - 3;
    for (int t = 0; t < count; ++t) {
        Entry e;
        if (t == 0) {
            for (int i = 0; i < cfg.template_len; ++i) e.words_before.push_back(vocab.word(i));
        } else {
            int len = 1 + static_cast<int>(rng.uniform_index(
                          static_cast<std::uint64_t>(std::min(max_words, cfg.template_len + 2))));
            for (int i = 0; i < len; ++i) {
                e.words_before.push_back(vocab.word(static_cast<int>(rng.uniform_index(words))));
            }
        }
        pool.templates_.push_back(std::move(e));
    }
    return pool;
}

TokenSequence TemplatePool::instantiate(int index, int class_token_id) const {
    if (index < 0 || index >= size()) throw std::invalid_argument("TemplatePool: index out of range");
    const Entry& e = templates_[index];
    TokenSequence seq;
    seq.ids.push_back(vocab_.sos());
    seq.ids.insert(seq.ids.end(), e.words_before.begin(), e.words_before.end());
    seq.ids.push_back(class_token_id);
    seq.ids.insert(seq.ids.end(), e.words_after.begin(), e.words_after.end());
    seq.ids.push_back(vocab_.eos());
    return seq;
}

TemplatePool TemplatePool::truncated(int count) const {
    if (count < 1 || count > size()) throw std::invalid_argument("TemplatePool: bad truncation count");
    TemplatePool pool(cfg_, vocab_);
    pool.templates_.assign(templates_.begin(), templates_.begin() + count);
    return pool;
}

std::vector<double> ensembled_frozen_text_feature(const FrozenEncoderPair& pair,
                                                  const TemplatePool& pool, int class_token_id) {
    int n = pool.size();
    std::vector<double> acc(pair.config.d, 0.0);
    for (int i = 0; i < n; ++i) {
        Tensor g = encode_text(pair, pool.instantiate(i, class_token_id));
        const auto& v = g.data();
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        if (norm == 0.0) throw std::domain_error("ensembled_frozen_text_feature: zero-norm feature");
        for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += v[j] / norm / n;
    }
    double norm = 0.0;
    for (double x : acc) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) throw std::domain_error("ensembled_frozen_text_feature: degenerate ensemble");
    for (double& x : acc) x /= norm;
    return acc;
}

}  // namespace plab
