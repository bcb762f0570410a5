#include "plab/dataset.hpp"

#include <stdexcept>

#include "plab/prompting.hpp"
#include "plab/rng.hpp"

namespace plab {

void DatasetSpec::validate() const {
    if (num_classes < 2) throw std::invalid_argument("DatasetSpec: need at least 2 classes");
    if (base_count < 1 || base_count >= num_classes) {
        throw std::invalid_argument("DatasetSpec: base_count must be in [1, num_classes)");
    }
    if (train_per_class < 1 || test_per_class < 1) {
        throw std::invalid_argument("DatasetSpec: per-class sample counts must be positive");
    }
    if (noise_std < 0.0) throw std::invalid_argument("DatasetSpec: noise_std must be nonnegative");
}

std::vector<Example> Dataset::base_train() const {
    std::vector<Example> out;
    for (const Example& e : train)
        if (is_base(e.label)) out.push_back(e);
    return out;
}

std::vector<Example> Dataset::base_test() const {
    std::vector<Example> out;
    for (const Example& e : test)
        if (is_base(e.label)) out.push_back(e);
    return out;
}

std::vector<Example> Dataset::novel_test() const {
    std::vector<Example> out;
    for (const Example& e : test)
        if (!is_base(e.label)) out.push_back(e);
    return out;
}

Dataset generate_dataset(const EncoderConfig& cfg, const DatasetSpec& spec) {
    spec.validate();
    Dataset data;
    data.spec = spec;
    int m = cfg.patch_count, pd = cfg.patch_dim;
    for (int k = 0; k < spec.num_classes; ++k) {
        RandomStream proto_rng(mix_seed(spec.seed, 0xd47a100 + k));
        std::vector<double> proto(static_cast<std::size_t>(m) * pd);
        for (auto& x : proto) x = proto_rng.normal();
        auto draw = [&](RandomStream& rng) {
            std::vector<double> v = proto;
            for (auto& x : v) x += rng.normal(0.0, spec.noise_std);
            return Example{Tensor(m, pd, std::move(v)), k};
        };
        RandomStream train_rng(mix_seed(spec.seed, 0x77a10 + k));
        for (int i = 0; i < spec.train_per_class; ++i) data.train.push_back(draw(train_rng));
        RandomStream test_rng(mix_seed(spec.seed, 0x7e570 + k));
        for (int i = 0; i < spec.test_per_class; ++i) data.test.push_back(draw(test_rng));
    }
    return data;
}

std::vector<Example> subsample_shots(const Dataset& data, int shots, std::uint64_t seed) {
    if (shots < 1) throw std::invalid_argument("subsample_shots: shots must be positive");
    if (shots > data.spec.train_per_class) {
        throw std::invalid_argument("subsample_shots: " + std::to_string(shots) +
                                    " shots exceed " + std::to_string(data.spec.train_per_class) +
                                    " training samples per class");
    }
    std::vector<Example> out;
    for (int k = 0; k < data.spec.base_count; ++k) {
        std::vector<const Example*> pool;
        for (const Example& e : data.train)
            if (e.label == k) pool.push_back(&e);
        std::vector<int> idx(pool.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
        if (shots < static_cast<int>(pool.size())) {
            // full-shot subsampling must equal the full-data run, so keep
            // generation order in that case
            RandomStream rng(mix_seed(seed, 0x5407 + k));
            rng.shuffle(idx);
        }
        for (int i = 0; i < shots; ++i) out.push_back(*pool[idx[i]]);
    }
    return out;
}

std::vector<ContrastivePair> pretraining_pairs(const Dataset& data, const Vocabulary& vocab,
                                               const TemplatePool& pool) {
    std::vector<ContrastivePair> pairs;
    pairs.reserve(data.train.size());
    for (std::size_t i = 0; i < data.train.size(); ++i) {
        const Example& e = data.train[i];
        int t = static_cast<int>(i % pool.size());
        pairs.push_back({e.patches, pool.instantiate(t, vocab.class_token(e.label))});
    }
    return pairs;
}

}  // namespace plab
