#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <span>
#include <vector>

#include "dc/autodiff.hpp"
#include "dc/checkpoint.hpp"
#include "dc/tokens.hpp"

namespace dc {

struct LmConfig {
    std::size_t vocab_size = 0;
    std::size_t embed_dim = 300;
    std::size_t context_len = 20;
    std::size_t lstm_units = 256;
    double dropout_rate = 0.2;

    void validate() const;
};

void to_json(nlohmann::json& j, const LmConfig& c);
void from_json(const nlohmann::json& j, LmConfig& c);

// Anything that assigns a next-token likelihood to each position of a
// sequence. The surprise measure only needs this much of a model.
class NextTokenModel {
public:
    virtual ~NextTokenModel() = default;
    [[nodiscard]] virtual const ParameterStore& parameters() const = 0;
    // Eval-mode NLL of tokens[k] given BOS + tokens[0..k), shape [N].
    virtual Var token_nll(Tape& tape, std::span<const TokenId> tokens) const = 0;
};

class LmStepper;

// Embedding -> LSTM -> dropout -> dense softmax over the vocabulary.
//
// The LSTM reads at most context_len inputs: the prediction for position t
// is conditioned on the last context_len tokens of BOS + prefix.
class LanguageModel : public NextTokenModel {
public:
    LanguageModel(LmConfig config, Rng& init);
    LanguageModel(LmConfig config, ParameterStore params);

    [[nodiscard]] const LmConfig& config() const { return config_; }
    [[nodiscard]] const ParameterStore& parameters() const override { return params_; }
    ParameterStore& parameters() { return params_; }
    [[nodiscard]] std::uint64_t vocab_fingerprint() const { return fingerprint_; }
    void set_vocab_fingerprint(std::uint64_t fp) { fingerprint_ = fp; }

    [[nodiscard]] std::vector<double> next_dist(std::span<const TokenId> prefix) const;
    // Multinomial sampling of up to max_len tokens following prefix. Stops
    // when EOS is drawn; EOS itself is not returned.
    std::vector<TokenId> sample(std::span<const TokenId> prefix, std::size_t max_len, Rng& rng) const;
    // Mean per-token NLL under teacher forcing.
    [[nodiscard]] double nll(std::span<const TokenId> sequence) const;

    Var token_nll(Tape& tape, std::span<const TokenId> tokens) const override;

    // Teacher-forced logits for a batch of target rows (ragged; short rows are
    // padded with PAD). Row t*B + b of the result predicts targets[b][t].
    Var logits(Tape& tape, const std::vector<std::vector<TokenId>>& targets, Mode mode, Rng* dropout_rng) const;
    // Mean NLL over the non-PAD targets of the batch.
    Var batch_loss(Tape& tape, const std::vector<std::vector<TokenId>>& targets, Mode mode, Rng* dropout_rng) const;

    [[nodiscard]] Checkpoint to_checkpoint() const;
    static LanguageModel from_checkpoint(const Checkpoint& ckpt);

private:
    friend class LmStepper;

    struct Leaves {
        Var embedding, weight_ih, weight_hh, bias, dense_w, dense_b;
    };

    Leaves leaves(Tape& tape) const;
    std::pair<Var, Var> cell(const Leaves& w, Var x, Var h, Var c) const;
    // Runs the LSTM over equal-length input rows from a zero state; returns
    // the hidden state after every step.
    std::vector<Var> run(Tape& tape, const Leaves& w, const std::vector<std::vector<TokenId>>& inputs) const;

    LmConfig config_;
    ParameterStore params_;
    std::uint64_t fingerprint_ = 0;
};

// Incremental eval-mode decoding for a batch of independent rows, each
// starting from BOS. Copyable, so a partially decoded batch can be forked.
class LmStepper {
public:
    LmStepper(const LanguageModel& model, std::size_t batch);

    // Next-token distributions, [batch, vocab].
    [[nodiscard]] const Tensor& probs() const { return probs_; }
    [[nodiscard]] std::size_t batch() const { return history_.size(); }
    // Appends one token per row and recomputes the distributions.
    void push(std::span<const TokenId> tokens);

private:
    void refresh_from_window();

    const LanguageModel* model_;
    std::vector<std::vector<TokenId>> history_;
    Tensor h_, c_, probs_;
};

} // namespace dc
