#include "plab/ensembling.hpp"

#include <cmath>
#include <stdexcept>

namespace plab {

AggMode agg_mode_from_string(const std::string& s) {
    if (s == "gpa") return AggMode::Gpa;
    if (s == "equal") return AggMode::Equal;
    if (s == "ema") return AggMode::Ema;
    throw std::invalid_argument("unknown aggregation mode: " + s);
}

std::string to_string(AggMode m) {
    switch (m) {
        case AggMode::Gpa: return "gpa";
        case AggMode::Equal: return "equal";
        case AggMode::Ema: return "ema";
    }
    return "?";
}

std::vector<double> gaussian_weights(int epochs, double mu, double sigma2) {
    if (epochs < 1) throw std::invalid_argument("gaussian_weights: epochs must be at least 1");
    if (!(sigma2 > 0.0)) throw std::invalid_argument("gaussian_weights: sigma2 must be positive");
    std::vector<double> w(epochs);
    // subtract the max exponent so the normalization is stable for tiny sigma2
    double max_e = -1e300;
    for (int i = 1; i <= epochs; ++i) {
        double e = -(i - mu) * (i - mu) / (2.0 * sigma2);
        max_e = std::max(max_e, e);
        w[i - 1] = e;
    }
    double z = 0.0;
    for (double& x : w) {
        x = std::exp(x - max_e);
        z += x;
    }
    for (double& x : w) x /= z;
    return w;
}

namespace {

void axpy(PromptSet& acc, double alpha, const PromptSet& p, double self_scale) {
    auto apply = [&](std::vector<Tensor>& dst, const std::vector<Tensor>& src) {
        for (std::size_t i = 0; i < dst.size(); ++i) {
            auto& d = dst[i].mutable_data();
            const auto& s = src[i].data();
            if (d.size() != s.size()) throw std::invalid_argument("prompt aggregation: shape mismatch");
            for (std::size_t j = 0; j < d.size(); ++j) d[j] = self_scale * d[j] + alpha * s[j];
        }
    };
    apply(acc.vision, p.vision);
    apply(acc.text, p.text);
}

}  // namespace

AggregationState::AggregationState(AggMode mode, int total_epochs, double mu, double sigma2,
                                   const PromptSet& shape_like, double ema_beta)
    : mode_(mode), total_epochs_(total_epochs), ema_beta_(ema_beta) {
    if (total_epochs < 1) throw std::invalid_argument("AggregationState: epochs must be at least 1");
    if (mode == AggMode::Gpa) weights_ = gaussian_weights(total_epochs, mu, sigma2);
    if (mode == AggMode::Ema && !(ema_beta >= 0.0 && ema_beta < 1.0)) {
        throw std::invalid_argument("AggregationState: ema beta must be in [0, 1)");
    }
    accum_ = shape_like.clone(/*requires_grad=*/false);
    // start from zero; the first update writes the first snapshot in
    for (Tensor& t : accum_.vision) std::fill(t.mutable_data().begin(), t.mutable_data().end(), 0.0);
    for (Tensor& t : accum_.text) std::fill(t.mutable_data().begin(), t.mutable_data().end(), 0.0);
}

void AggregationState::update(const PromptSet& epoch_prompts, int epoch_index) {
    if (epoch_index != consumed_ + 1) {
        throw std::invalid_argument("AggregationState::update: epoch index " +
                                    std::to_string(epoch_index) + " out of order (expected " +
                                    std::to_string(consumed_ + 1) + ")");
    }
    if (epoch_index > total_epochs_) {
        throw std::invalid_argument("AggregationState::update: past the final epoch");
    }
    switch (mode_) {
        case AggMode::Gpa:
            axpy(accum_, weights_[epoch_index - 1], epoch_prompts, 1.0);
            break;
        case AggMode::Equal: {
            // running mean over epochs seen so far
            double k = static_cast<double>(epoch_index);
            axpy(accum_, 1.0 / k, epoch_prompts, (k - 1.0) / k);
            break;
        }
        case AggMode::Ema:
            if (epoch_index == 1) {
                axpy(accum_, 1.0, epoch_prompts, 0.0);
            } else {
                axpy(accum_, 1.0 - ema_beta_, epoch_prompts, ema_beta_);
            }
            break;
    }
    consumed_ = epoch_index;
}

PromptSet AggregationState::finalize() const {
    if (consumed_ < 1) throw std::invalid_argument("AggregationState::finalize: no epochs consumed");
    if (mode_ == AggMode::Gpa && consumed_ != total_epochs_) {
        throw std::invalid_argument("AggregationState::finalize: gpa weights incomplete (" +
                                    std::to_string(consumed_) + " of " +
                                    std::to_string(total_epochs_) + " epochs)");
    }
    return accum_.clone(/*requires_grad=*/false);
}

}  // namespace plab
