#pragma once

#include <string>
#include <vector>

#include "plab/prompting.hpp"

namespace plab {

enum class AggMode { Gpa, Equal, Ema };

AggMode agg_mode_from_string(const std::string& s);
std::string to_string(AggMode m);

// Normalized Gaussian density evaluated at epoch indices 1..epochs.
std::vector<double> gaussian_weights(int epochs, double mu, double sigma2);

// Running aggregate of per-epoch prompt snapshots. The live training
// PromptSet is never touched; updates copy values in.
class AggregationState {
public:
    AggregationState(AggMode mode, int total_epochs, double mu, double sigma2,
                     const PromptSet& shape_like, double ema_beta = 0.999);

    // epoch_index is 1-based and must advance by exactly one per call.
    void update(const PromptSet& epoch_prompts, int epoch_index);

    // The prompt set used for inference. Gpa mode requires all epochs consumed.
    PromptSet finalize() const;

    AggMode mode() const { return mode_; }
    int consumed_epochs() const { return consumed_; }
    int total_epochs() const { return total_epochs_; }
    const std::vector<double>& weights() const { return weights_; }

private:
    AggMode mode_;
    int total_epochs_;
    double ema_beta_;
    std::vector<double> weights_;  // empty unless Gpa
    PromptSet accum_;
    int consumed_ = 0;
};

}  // namespace plab
