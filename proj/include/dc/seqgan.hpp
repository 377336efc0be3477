#pragma once

#include <functional>
#include <nlohmann/json.hpp>
#include <span>
#include <vector>

#include "dc/trainer.hpp"

namespace dc {

struct SeqGanSchedule {
    std::size_t g_pretrain_epochs = 50;
    std::size_t d_pretrain_epochs = 5;
    std::size_t g_steps = 8;
    std::size_t d_steps = 4;
    std::size_t batch_size = 32;
    // One adversarial epoch is one cycle of g_steps generator updates
    // followed by d_steps discriminator updates.
    std::size_t adversarial_epochs = 550;
    std::size_t rollout_count = 1;

    void validate() const;
};

void to_json(nlohmann::json& j, const SeqGanSchedule& s);
void from_json(const nlohmann::json& j, SeqGanSchedule& s);

// Exponential moving average of the mean reward of each update.
class Baseline {
public:
    explicit Baseline(double decay = 0.9, double initial = 0.5);

    [[nodiscard]] double value() const { return value_; }
    [[nodiscard]] double decay() const { return decay_; }
    [[nodiscard]] std::size_t observations() const { return observations_; }
    void observe(double mean_reward);

private:
    double decay_;
    double value_;
    std::size_t observations_ = 0;
};

// An episode is a generated token sequence of at most max_len actions; its
// last action may be EOS. A prefix is complete when it ends with EOS or has
// max_len tokens. The discriminator never sees the EOS token.
bool is_complete(std::span<const TokenId> prefix, std::size_t max_len);

// Expected terminal reward of `prefix`: the discriminator score when the
// prefix is complete, otherwise the mean score over rollout_count
// completions sampled from the generator.
double mc_rollout_q(const LanguageModel& generator, const ValueDiscriminator& discriminator,
                    std::span<const TokenId> prefix, std::size_t max_len, std::size_t rollout_count, Rng& rng);

// Samples `count` episodes from the generator.
Sequences sample_episodes(const LanguageModel& generator, std::size_t count, std::size_t max_len, Rng& rng);

// Q for every action of every episode, q[b][t] for action t of episode b.
// Rollouts for all episodes run as one batch per prefix length.
std::vector<std::vector<double>> rollout_rewards(const LanguageModel& generator, const ValueDiscriminator& discriminator,
                                                 const Sequences& episodes, std::size_t max_len,
                                                 std::size_t rollout_count, Rng& rng);

// Sum over episodes and actions of weight[b][t] * ln G(y_t | y_<t),
// evaluated without dropout.
Var weighted_log_prob(Tape& tape, const LanguageModel& generator, const Sequences& episodes,
                      const std::vector<std::vector<double>>& weights);

// theta <- theta + lr * sum_t (Q_t - b) grad ln G(y_t | y_<t), then the
// baseline observes the mean of q_values.
void reinforce_update(LanguageModel& generator, std::span<const TokenId> episode, std::span<const double> q_values,
                      Baseline& baseline, double lr);

// Episode tokens without a trailing EOS.
std::vector<TokenId> strip_eos(std::span<const TokenId> episode);

struct SeqGanEpoch {
    std::size_t epoch = 0;         // 0 = after pretraining
    double d_loss = 0.0;           // mean BCE over this epoch's d_steps
    double d_accuracy = 0.0;       // held-out real vs freshly generated
    double g_reward = 0.0;         // mean D score of fresh generator samples
    double baseline = 0.0;
};

struct SeqGanHistory {
    TrainHistory g_pretrain;
    std::vector<double> d_pretrain_loss;
    std::vector<SeqGanEpoch> epochs;   // epochs[0] is the pretraining state
    // Mean D score of samples from the pretrained and from the final
    // generator, both under the final discriminator.
    double pretrained_g_final_reward = 0.0;
    double final_g_final_reward = 0.0;
};

struct SeqGanOptions {
    std::size_t max_len = 0;    // episode length cap
    OptimizerConfig g_optimizer = OptimizerConfig::adagrad(0.01);
    OptimizerConfig d_optimizer = OptimizerConfig::adam(1e-4);
    std::size_t eval_samples = 256;
    std::function<void(const SeqGanEpoch&)> on_epoch;
};

// One binary cross-entropy minibatch step: `real` labelled 1, `fake` 0.
// Returns the loss before the step.
double discriminator_step(ValueDiscriminator& d, Optimizer& opt, const Sequences& real, const Sequences& fake, Rng& rng);

// Discriminator accuracy on real sequences vs `real.size()` fresh samples.
double discriminator_accuracy(const ValueDiscriminator& d, const LanguageModel& g, const Sequences& real,
                              std::size_t max_len, Rng& rng);

// Pretrains the generator (maximum likelihood) and the discriminator, then
// alternates generator policy-gradient steps and discriminator steps.
SeqGanHistory train_seqgan(LanguageModel& generator, ValueDiscriminator& discriminator, const Sequences& real_train,
                           const Sequences& real_valid, const SeqGanSchedule& schedule, const SeqGanOptions& options,
                           Rng rng);

} // namespace dc
