#pragma once

#include <cstdint>
#include <vector>

#include "plab/encoders.hpp"
#include "plab/regularizers.hpp"

namespace plab {

struct DatasetSpec {
    int num_classes = 10;
    int base_count = 5;  // classes used for tuning; the rest are novel
    int train_per_class = 32;
    int test_per_class = 32;
    double noise_std = 0.55;
    std::uint64_t seed = 0;

    void validate() const;
};

struct Example {
    Tensor patches;  // M x patch_dim, frozen
    int label = 0;
};

struct Dataset {
    DatasetSpec spec;
    std::vector<Example> train;
    std::vector<Example> test;

    bool is_base(int label) const { return label < spec.base_count; }
    std::vector<Example> base_train() const;
    std::vector<Example> base_test() const;
    std::vector<Example> novel_test() const;
};

// Each class gets a random prototype patch grid; samples are prototype plus
// Gaussian noise. Train and test draws are disjoint by construction.
Dataset generate_dataset(const EncoderConfig& cfg, const DatasetSpec& spec);

// K examples per base class, drawn deterministically from `seed`.
std::vector<Example> subsample_shots(const Dataset& data, int shots, std::uint64_t seed);

// Image/text pairs over ALL classes for contrastive pretraining; the text side
// wraps each sample's class token in a template, cycling through the pool so
// the frozen encoder sees every wording.
std::vector<ContrastivePair> pretraining_pairs(const Dataset& data, const Vocabulary& vocab,
                                               const TemplatePool& pool);

}  // namespace plab
