#include "dc/lm.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

#include "dc/error.hpp"

namespace dc {

void LmConfig::validate() const
{
    if (vocab_size < 1 || embed_dim < 1 || context_len < 1 || lstm_units < 1) {
        throw InputError(fmt::format("LmConfig: sizes must be positive (vocab {}, embed {}, context {}, units {})",
                                     vocab_size, embed_dim, context_len, lstm_units));
    }
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
        throw InputError(fmt::format("LmConfig: dropout_rate {} outside [0, 1)", dropout_rate));
    }
}

void to_json(nlohmann::json& j, const LmConfig& c)
{
    j = nlohmann::json{{"vocab_size", c.vocab_size},
                       {"embed_dim", c.embed_dim},
                       {"context_len", c.context_len},
                       {"lstm_units", c.lstm_units},
                       {"dropout_rate", c.dropout_rate}};
}

void from_json(const nlohmann::json& j, LmConfig& c)
{
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.context_len = j.value("context_len", c.context_len);
    c.lstm_units = j.value("lstm_units", c.lstm_units);
    c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
}

namespace {

Tensor uniform_init(Shape shape, double bound, Rng rng)
{
    Tensor t(std::move(shape));
    for (auto& v : t.values()) {
        v = rng.uniform(-bound, bound);
    }
    return t;
}

double inv_sqrt(std::size_t n) { return 1.0 / std::sqrt(static_cast<double>(n)); }

} // namespace

LanguageModel::LanguageModel(LmConfig config, Rng& init) : config_(config)
{
    config_.validate();
    const std::size_t V = config_.vocab_size, E = config_.embed_dim, H = config_.lstm_units;
    params_.add("embedding", uniform_init({V, E}, inv_sqrt(E), init.split("embedding")));
    params_.add("lstm/weight_ih", uniform_init({E, 4 * H}, inv_sqrt(E), init.split("lstm/weight_ih")));
    params_.add("lstm/weight_hh", uniform_init({H, 4 * H}, inv_sqrt(H), init.split("lstm/weight_hh")));
    // Gate order is input, forget, cell, output; the forget bias starts at 1.
    Tensor bias({4 * H});
    for (std::size_t j = H; j < 2 * H; ++j) {
        bias[j] = 1.0;
    }
    params_.add("lstm/bias", std::move(bias));
    params_.add("dense/weight", uniform_init({H, V}, inv_sqrt(H), init.split("dense/weight")));
    params_.add("dense/bias", Tensor({V}));
}

LanguageModel::LanguageModel(LmConfig config, ParameterStore params) : config_(config), params_(std::move(params))
{
    config_.validate();
    const std::size_t V = config_.vocab_size, E = config_.embed_dim, H = config_.lstm_units;
    const std::pair<const char*, Shape> expected[] = {
        {"embedding", {V, E}},      {"lstm/weight_ih", {E, 4 * H}}, {"lstm/weight_hh", {H, 4 * H}},
        {"lstm/bias", {4 * H}},     {"dense/weight", {H, V}},       {"dense/bias", {V}},
    };
    if (params_.size() != std::size(expected)) {
        throw InputError("LanguageModel: unexpected parameter count");
    }
    for (const auto& [name, shape] : expected) {
        if (params_.get(name).tensor.shape() != shape) {
            throw ShapeError(fmt::format("LanguageModel: parameter '{}' has shape {}, config implies {}", name,
                                         to_string(params_.get(name).tensor.shape()), to_string(shape)));
        }
    }
}

LanguageModel::Leaves LanguageModel::leaves(Tape& tape) const
{
    return Leaves{tape.parameter(params_[0]), tape.parameter(params_[1]), tape.parameter(params_[2]),
                  tape.parameter(params_[3]), tape.parameter(params_[4]), tape.parameter(params_[5])};
}

std::pair<Var, Var> LanguageModel::cell(const Leaves& w, Var x, Var h, Var c) const
{
    const std::size_t H = config_.lstm_units;
    Var gates = add_row(add(matmul(x, w.weight_ih), matmul(h, w.weight_hh)), w.bias);
    Var i = sigmoid(slice_cols(gates, 0, H));
    Var f = sigmoid(slice_cols(gates, H, 2 * H));
    Var g = tanh(slice_cols(gates, 2 * H, 3 * H));
    Var o = sigmoid(slice_cols(gates, 3 * H, 4 * H));
    Var c_next = add(mul(f, c), mul(i, g));
    Var h_next = mul(o, tanh(c_next));
    return {h_next, c_next};
}

std::vector<Var> LanguageModel::run(Tape& tape, const Leaves& w, const std::vector<std::vector<TokenId>>& inputs) const
{
    const std::size_t B = inputs.size();
    const std::size_t L = inputs.front().size();
    Var h = tape.constant(Tensor({B, config_.lstm_units}));
    Var c = tape.constant(Tensor({B, config_.lstm_units}));
    std::vector<Var> hs;
    hs.reserve(L);
    std::vector<TokenId> column(B);
    for (std::size_t t = 0; t < L; ++t) {
        for (std::size_t b = 0; b < B; ++b) {
            column[b] = inputs[b][t];
        }
        std::tie(h, c) = cell(w, embedding(w.embedding, column), h, c);
        hs.push_back(h);
    }
    return hs;
}

Var LanguageModel::logits(Tape& tape, const std::vector<std::vector<TokenId>>& targets, Mode mode, Rng* dropout_rng) const
{
    if (targets.empty()) {
        throw InputError("LanguageModel: empty batch");
    }
    std::size_t T = 0;
    for (const auto& row : targets) {
        T = std::max(T, row.size());
    }
    if (T == 0) {
        throw InputError("LanguageModel: every sequence in the batch is empty");
    }
    const std::size_t B = targets.size();
    const std::size_t C = config_.context_len;

    // inputs[b][t] is the token read before predicting targets[b][t].
    std::vector<std::vector<TokenId>> inputs(B, std::vector<TokenId>(T, token::pad));
    for (std::size_t b = 0; b < B; ++b) {
        inputs[b][0] = token::bos;
        for (std::size_t t = 1; t < T && t - 1 < targets[b].size(); ++t) {
            inputs[b][t] = targets[b][t - 1];
        }
    }

    const Leaves w = leaves(tape);
    const std::size_t head_len = std::min(T, C);
    std::vector<std::vector<TokenId>> head(B);
    for (std::size_t b = 0; b < B; ++b) {
        head[b].assign(inputs[b].begin(), inputs[b].begin() + static_cast<std::ptrdiff_t>(head_len));
    }
    std::vector<Var> rows = run(tape, w, head);

    if (T > C) {
        // Positions past the context window each see their own window of the
        // last C inputs; all windows run as one batch.
        std::vector<std::vector<TokenId>> windows;
        windows.reserve((T - C) * B);
        for (std::size_t t = C; t < T; ++t) {
            for (std::size_t b = 0; b < B; ++b) {
                windows.emplace_back(inputs[b].begin() + static_cast<std::ptrdiff_t>(t + 1 - C),
                                     inputs[b].begin() + static_cast<std::ptrdiff_t>(t + 1));
            }
        }
        rows.push_back(run(tape, w, windows).back());
    }

    Var hidden = concat_rows(rows);
    if (mode == Mode::train && config_.dropout_rate > 0.0) {
        if (dropout_rng == nullptr) {
            throw InputError("LanguageModel: train mode needs a dropout generator");
        }
        hidden = dropout(hidden, config_.dropout_rate, mode, *dropout_rng);
    }
    return add_row(matmul(hidden, w.dense_w), w.dense_b);
}

Var LanguageModel::batch_loss(Tape& tape, const std::vector<std::vector<TokenId>>& targets, Mode mode, Rng* dropout_rng) const
{
    Var out = logits(tape, targets, mode, dropout_rng);
    const std::size_t B = targets.size();
    const std::size_t T = out.value().dim(0) / B;
    std::vector<TokenId> flat(T * B, token::pad);
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t b = 0; b < B; ++b) {
            if (t < targets[b].size()) {
                flat[t * B + b] = targets[b][t];
            }
        }
    }
    return sparse_cross_entropy(out, flat, token::pad);
}

Var LanguageModel::token_nll(Tape& tape, std::span<const TokenId> tokens) const
{
    if (tokens.empty()) {
        throw InputError("token_nll: empty sequence");
    }
    std::vector<std::vector<TokenId>> batch{std::vector<TokenId>(tokens.begin(), tokens.end())};
    return nll_rows(logits(tape, batch, Mode::eval, nullptr), tokens);
}

double LanguageModel::nll(std::span<const TokenId> sequence) const
{
    Tape tape(GradMode::disabled);
    return mean(token_nll(tape, sequence)).item();
}

std::vector<double> LanguageModel::next_dist(std::span<const TokenId> prefix) const
{
    LmStepper stepper(*this, 1);
    for (TokenId id : prefix) {
        const TokenId one[] = {id};
        stepper.push(one);
    }
    const auto p = stepper.probs().values();
    return {p.begin(), p.end()};
}

std::vector<TokenId> LanguageModel::sample(std::span<const TokenId> prefix, std::size_t max_len, Rng& rng) const
{
    if (max_len < 1) {
        throw InputError("sample: max_len must be at least 1");
    }
    LmStepper stepper(*this, 1);
    for (TokenId id : prefix) {
        const TokenId one[] = {id};
        stepper.push(one);
    }
    std::vector<TokenId> out;
    while (out.size() < max_len) {
        const auto next = static_cast<TokenId>(rng.categorical(stepper.probs().values()));
        if (next == token::eos) {
            break;
        }
        out.push_back(next);
        if (out.size() < max_len) {
            const TokenId one[] = {next};
            stepper.push(one);
        }
    }
    return out;
}

Checkpoint LanguageModel::to_checkpoint() const
{
    Checkpoint ckpt;
    ckpt.kind = "language-model";
    ckpt.config = config_;
    ckpt.vocab_fingerprint = fingerprint_;
    ckpt.params = params_;
    return ckpt;
}

LanguageModel LanguageModel::from_checkpoint(const Checkpoint& ckpt)
{
    if (ckpt.kind != "language-model") {
        throw InputError(fmt::format("checkpoint holds a '{}', expected a language-model", ckpt.kind));
    }
    LanguageModel m(ckpt.config.get<LmConfig>(), ckpt.params);
    m.fingerprint_ = ckpt.vocab_fingerprint;
    return m;
}

// ---------------------------------------------------------------------------

LmStepper::LmStepper(const LanguageModel& model, std::size_t batch)
    : model_(&model), history_(batch, std::vector<TokenId>{token::bos})
{
    if (batch == 0) {
        throw InputError("LmStepper: batch must be positive");
    }
    refresh_from_window();
}

void LmStepper::refresh_from_window()
{
    const std::size_t C = model_->config_.context_len;
    std::vector<std::vector<TokenId>> window;
    window.reserve(history_.size());
    for (const auto& h : history_) {
        const std::size_t start = h.size() > C ? h.size() - C : 0;
        window.emplace_back(h.begin() + static_cast<std::ptrdiff_t>(start), h.end());
    }
    Tape tape(GradMode::disabled);
    const auto w = model_->leaves(tape);
    const std::size_t B = window.size();
    const std::size_t L = window.front().size();
    Var h = tape.constant(Tensor({B, model_->config_.lstm_units}));
    Var c = tape.constant(Tensor({B, model_->config_.lstm_units}));
    std::vector<TokenId> column(B);
    for (std::size_t t = 0; t < L; ++t) {
        for (std::size_t b = 0; b < B; ++b) {
            column[b] = window[b][t];
        }
        std::tie(h, c) = model_->cell(w, embedding(w.embedding, column), h, c);
    }
    h_ = h.value();
    c_ = c.value();
    probs_ = softmax(add_row(matmul(h, w.dense_w), w.dense_b)).value();
}

void LmStepper::push(std::span<const TokenId> tokens)
{
    if (tokens.size() != history_.size()) {
        throw ShapeError(fmt::format("LmStepper: {} tokens for a batch of {}", tokens.size(), history_.size()));
    }
    for (std::size_t b = 0; b < tokens.size(); ++b) {
        history_[b].push_back(tokens[b]);
    }
    if (history_.front().size() > model_->config_.context_len) {
        refresh_from_window();
        return;
    }
    Tape tape(GradMode::disabled);
    const auto w = model_->leaves(tape);
    auto [h, c] = model_->cell(w, embedding(w.embedding, tokens), tape.constant(h_), tape.constant(c_));
    h_ = h.value();
    c_ = c.value();
    probs_ = softmax(add_row(matmul(h, w.dense_w), w.dense_b)).value();
}

} // namespace dc
