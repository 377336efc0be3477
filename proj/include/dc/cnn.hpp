#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <span>
#include <vector>

#include "dc/autodiff.hpp"
#include "dc/checkpoint.hpp"
#include "dc/tokens.hpp"

namespace dc {

enum class Head { sigmoid, softmax };

struct CnnConfig {
    std::size_t vocab_size = 0;
    std::size_t embed_dim = 300;
    std::size_t max_len = 0;
    std::vector<std::size_t> kernel_sizes{3, 4, 5};
    std::size_t filters_per_kernel = 64;
    double dropout_rate = 0.5;
    Head head = Head::sigmoid;
    std::size_t num_classes = 1;   // ignored for the sigmoid head

    void validate() const;
    [[nodiscard]] std::size_t outputs() const { return head == Head::sigmoid ? 1 : num_classes; }
};

void to_json(nlohmann::json& j, const CnnConfig& c);
void from_json(const nlohmann::json& j, CnnConfig& c);

// Sentence CNN: embedding, one tanh conv1d per kernel size in parallel,
// max-over-time pooling of each, dropout, dense head.
//
// Inputs are padded with PAD (or truncated) to max_len. Conv positions whose
// window reaches into the padding are excluded from the max; a sequence
// shorter than the kernel keeps only its first window.
class CnnClassifier {
public:
    CnnClassifier(CnnConfig config, Rng& init);
    CnnClassifier(CnnConfig config, ParameterStore params);

    [[nodiscard]] const CnnConfig& config() const { return config_; }
    [[nodiscard]] const ParameterStore& parameters() const { return params_; }
    ParameterStore& parameters() { return params_; }
    [[nodiscard]] std::uint64_t vocab_fingerprint() const { return fingerprint_; }
    void set_vocab_fingerprint(std::uint64_t fp) { fingerprint_ = fp; }

    [[nodiscard]] bool truncates(std::span<const TokenId> tokens) const { return tokens.size() > config_.max_len; }

    // [B, outputs] pre-activation scores.
    Var logits(Tape& tape, const std::vector<std::vector<TokenId>>& batch, Mode mode, Rng* dropout_rng) const;

    [[nodiscard]] Checkpoint to_checkpoint() const;

protected:
    CnnConfig config_;
    ParameterStore params_;
    std::uint64_t fingerprint_ = 0;
};

// Sigmoid head: probability that a sequence is real context data.
class ValueDiscriminator : public CnnClassifier {
public:
    ValueDiscriminator(CnnConfig config, Rng& init);
    ValueDiscriminator(CnnConfig config, ParameterStore params);

    // Eval mode; strictly inside (0, 1) for finite logits.
    [[nodiscard]] double score(std::span<const TokenId> tokens) const;
    [[nodiscard]] std::vector<double> scores(const std::vector<std::vector<TokenId>>& batch) const;

    static ValueDiscriminator from_checkpoint(const Checkpoint& ckpt);
};

// Softmax head over the style classes of the context.
class NoveltyClassifier : public CnnClassifier {
public:
    NoveltyClassifier(CnnConfig config, Rng& init);
    NoveltyClassifier(CnnConfig config, ParameterStore params);

    [[nodiscard]] std::vector<double> class_dist(std::span<const TokenId> tokens) const;
    [[nodiscard]] std::size_t num_classes() const { return config_.num_classes; }

    static NoveltyClassifier from_checkpoint(const Checkpoint& ckpt);
};

} // namespace dc
