#pragma once

#include <string>

#include "plab/encoders.hpp"
#include "plab/ensembling.hpp"
#include "plab/prompting.hpp"

namespace plab {

// Versioned JSON checkpoints. Doubles are serialized with round-trip
// precision, so a fixed seed yields byte-stable files.

void save_encoder_pair(const FrozenEncoderPair& pair, const std::string& path);
FrozenEncoderPair load_encoder_pair(const std::string& path);

struct PromptProvenance {
    std::string mode = "live";  // live | gpa | equal | ema
    double mu = 0.0;
    double sigma2 = 0.0;
    int epochs = 0;
};

void save_prompts(const PromptSet& prompts, const std::string& path,
                  const PromptProvenance& prov = {});
PromptSet load_prompts(const std::string& path, PromptProvenance* prov = nullptr);

}  // namespace plab
