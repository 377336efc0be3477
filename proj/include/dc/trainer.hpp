#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "dc/cnn.hpp"
#include "dc/lm.hpp"
#include "dc/optimizer.hpp"

namespace dc {

using Sequences = std::vector<std::vector<TokenId>>;

struct LabeledSequences {
    Sequences inputs;
    std::vector<std::size_t> labels;
};

struct EpochMetrics {
    std::size_t epoch = 0;   // 1-based
    double train_loss = 0.0;
    double valid_loss = 0.0;
    std::optional<double> valid_accuracy;
};

struct TrainHistory {
    std::vector<EpochMetrics> epochs;
    std::size_t best_epoch = 0;
    double best_valid_loss = 0.0;
};

struct TrainOptions {
    std::size_t max_epochs = 100;
    // Training stops once this many epochs have passed since the best one;
    // patience 0 therefore runs a single epoch.
    std::size_t patience = 5;
    std::size_t batch_size = 32;
    std::function<void(const EpochMetrics&)> on_epoch;

    void validate() const;
};

// Targets are each sequence followed by EOS. Returns the token-weighted
// mean NLL over the set, eval mode, in fixed batch order.
double lm_loss(const LanguageModel& model, const Sequences& data, std::size_t batch_size);

// Minibatch training with dropout; the returned model holds the weights of
// the epoch with the lowest validation loss.
TrainHistory train_lm(LanguageModel& model, const Sequences& train, const Sequences& valid,
                      const OptimizerConfig& optimizer, const TrainOptions& options, Rng rng);

struct ClassifierEval {
    double loss = 0.0;       // mean cross-entropy
    double accuracy = 0.0;
};

ClassifierEval evaluate_classifier(const NoveltyClassifier& model, const LabeledSequences& data, std::size_t batch_size);

TrainHistory train_classifier(NoveltyClassifier& model, const LabeledSequences& train, const LabeledSequences& valid,
                              const OptimizerConfig& optimizer, const TrainOptions& options, Rng rng);

} // namespace dc
