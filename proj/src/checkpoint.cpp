#include "plab/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace plab {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

ordered_json tensor_to_json(const Tensor& t) {
    ordered_json j;
    j["rows"] = t.rows();
    j["cols"] = t.cols();
    j["data"] = t.data();
    return j;
}

Tensor tensor_from_json(const json& j, bool requires_grad) {
    return Tensor(j.at("rows").get<int>(), j.at("cols").get<int>(),
                  j.at("data").get<std::vector<double>>(), requires_grad);
}

ordered_json config_to_json(const EncoderConfig& c) {
    ordered_json j;
    j["d"] = c.d;
    j["layers_f"] = c.layers_f;
    j["layers_g"] = c.layers_g;
    j["heads"] = c.heads;
    j["patch_count"] = c.patch_count;
    j["patch_dim"] = c.patch_dim;
    j["vocab_size"] = c.vocab_size;
    j["template_len"] = c.template_len;
    j["max_seq"] = c.max_seq;
    j["mlp_mult"] = c.mlp_mult;
    j["tau"] = c.tau;
    return j;
}

EncoderConfig config_from_json(const json& j) {
    EncoderConfig c;
    c.d = j.at("d").get<int>();
    c.layers_f = j.at("layers_f").get<int>();
    c.layers_g = j.at("layers_g").get<int>();
    c.heads = j.at("heads").get<int>();
    c.patch_count = j.at("patch_count").get<int>();
    c.patch_dim = j.at("patch_dim").get<int>();
    c.vocab_size = j.at("vocab_size").get<int>();
    c.template_len = j.at("template_len").get<int>();
    c.max_seq = j.at("max_seq").get<int>();
    c.mlp_mult = j.at("mlp_mult").get<int>();
    c.tau = j.at("tau").get<double>();
    c.validate();
    return c;
}

void write_file(const std::string& path, const ordered_json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump() << "\n";
    if (!out) throw std::runtime_error("write failed: " + path);
}

json read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    json j;
    in >> j;
    return j;
}

}  // namespace

void save_encoder_pair(const FrozenEncoderPair& pair, const std::string& path) {
    ordered_json j;
    j["format"] = "plab-encoder";
    j["version"] = 1;
    j["config"] = config_to_json(pair.config);
    ordered_json weights;
    for (auto& [name, t] : const_cast<FrozenEncoderPair&>(pair).named_weights()) {
        weights[name] = tensor_to_json(t);
    }
    j["weights"] = std::move(weights);
    write_file(path, j);
}

FrozenEncoderPair load_encoder_pair(const std::string& path) {
    json j = read_file(path);
    if (j.value("format", "") != "plab-encoder" || j.value("version", 0) != 1) {
        throw std::runtime_error("not a version-1 encoder checkpoint: " + path);
    }
    EncoderConfig cfg = config_from_json(j.at("config"));
    // build a randomly initialized pair for its structure, then overwrite
    FrozenEncoderPair pair = init_encoder_pair(cfg, 0);
    const json& weights = j.at("weights");
    for (auto& [name, t] : pair.named_weights()) {
        if (!weights.contains(name)) throw std::runtime_error("checkpoint missing weight " + name);
        Tensor loaded = tensor_from_json(weights.at(name), false);
        if (loaded.rows() != t.rows() || loaded.cols() != t.cols()) {
            throw std::runtime_error("checkpoint weight shape mismatch for " + name);
        }
        t.mutable_data() = loaded.data();
    }
    pair.freeze();
    return pair;
}

void save_prompts(const PromptSet& prompts, const std::string& path,
                  const PromptProvenance& prov) {
    ordered_json j;
    j["format"] = "plab-prompts";
    j["version"] = 1;
    j["depth"] = prompts.depth;
    j["propagate"] = prompts.propagate;
    j["mode"] = prov.mode;
    j["mu"] = prov.mu;
    j["sigma2"] = prov.sigma2;
    j["epochs"] = prov.epochs;
    ordered_json vision = ordered_json::array();
    for (const Tensor& t : prompts.vision) vision.push_back(tensor_to_json(t));
    ordered_json text = ordered_json::array();
    for (const Tensor& t : prompts.text) text.push_back(tensor_to_json(t));
    j["vision"] = std::move(vision);
    j["text"] = std::move(text);
    write_file(path, j);
}

PromptSet load_prompts(const std::string& path, PromptProvenance* prov) {
    json j = read_file(path);
    if (j.value("format", "") != "plab-prompts" || j.value("version", 0) != 1) {
        throw std::runtime_error("not a version-1 prompt checkpoint: " + path);
    }
    PromptSet p;
    p.depth = j.at("depth").get<int>();
    p.propagate = j.value("propagate", false);
    for (const json& t : j.at("vision")) p.vision.push_back(tensor_from_json(t, false));
    for (const json& t : j.at("text")) p.text.push_back(tensor_from_json(t, false));
    if (static_cast<int>(p.vision.size()) != p.depth || static_cast<int>(p.text.size()) != p.depth) {
        throw std::runtime_error("prompt checkpoint depth mismatch: " + path);
    }
    if (prov) {
        prov->mode = j.value("mode", "live");
        prov->mu = j.value("mu", 0.0);
        prov->sigma2 = j.value("sigma2", 0.0);
        prov->epochs = j.value("epochs", 0);
    }
    return p;
}

}  // namespace plab
