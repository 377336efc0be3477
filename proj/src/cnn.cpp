#include "dc/cnn.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

#include "dc/error.hpp"

namespace dc {

void CnnConfig::validate() const
{
    if (vocab_size < 1 || embed_dim < 1 || max_len < 1 || filters_per_kernel < 1) {
        throw InputError(fmt::format("CnnConfig: sizes must be positive (vocab {}, embed {}, max_len {}, filters {})",
                                     vocab_size, embed_dim, max_len, filters_per_kernel));
    }
    if (kernel_sizes.empty()) {
        throw InputError("CnnConfig: at least one kernel size is required");
    }
    for (auto k : kernel_sizes) {
        if (k < 1 || k > max_len) {
            throw InputError(fmt::format("CnnConfig: kernel size {} outside [1, max_len={}]", k, max_len));
        }
    }
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
        throw InputError(fmt::format("CnnConfig: dropout_rate {} outside [0, 1)", dropout_rate));
    }
    if (head == Head::softmax && num_classes < 2) {
        throw InputError(fmt::format("CnnConfig: a softmax head needs at least 2 classes, got {}", num_classes));
    }
}

void to_json(nlohmann::json& j, const CnnConfig& c)
{
    j = nlohmann::json{{"vocab_size", c.vocab_size},
                       {"embed_dim", c.embed_dim},
                       {"max_len", c.max_len},
                       {"kernel_sizes", c.kernel_sizes},
                       {"filters_per_kernel", c.filters_per_kernel},
                       {"dropout_rate", c.dropout_rate},
                       {"head", c.head == Head::sigmoid ? "sigmoid" : "softmax"},
                       {"num_classes", c.num_classes}};
}

void from_json(const nlohmann::json& j, CnnConfig& c)
{
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.max_len = j.value("max_len", c.max_len);
    c.kernel_sizes = j.value("kernel_sizes", c.kernel_sizes);
    c.filters_per_kernel = j.value("filters_per_kernel", c.filters_per_kernel);
    c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
    const std::string head = j.value("head", std::string(c.head == Head::sigmoid ? "sigmoid" : "softmax"));
    if (head != "sigmoid" && head != "softmax") {
        throw InputError(fmt::format("CnnConfig: unknown head '{}'", head));
    }
    c.head = head == "sigmoid" ? Head::sigmoid : Head::softmax;
    c.num_classes = j.value("num_classes", c.num_classes);
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

std::string conv_name(std::size_t k, const char* what) { return fmt::format("conv{}/{}", k, what); }

} // namespace

CnnClassifier::CnnClassifier(CnnConfig config, Rng& init) : config_(std::move(config))
{
    config_.validate();
    const std::size_t E = config_.embed_dim, F = config_.filters_per_kernel;
    params_.add("embedding", uniform_init({config_.vocab_size, E}, inv_sqrt(E), init.split("embedding")));
    for (auto k : config_.kernel_sizes) {
        params_.add(conv_name(k, "weight"), uniform_init({k * E, F}, inv_sqrt(k * E), init.split(conv_name(k, "weight"))));
        params_.add(conv_name(k, "bias"), Tensor({F}));
    }
    const std::size_t features = F * config_.kernel_sizes.size();
    params_.add("dense/weight", uniform_init({features, config_.outputs()}, inv_sqrt(features), init.split("dense/weight")));
    params_.add("dense/bias", Tensor({config_.outputs()}));
}

CnnClassifier::CnnClassifier(CnnConfig config, ParameterStore params) : config_(std::move(config)), params_(std::move(params))
{
    config_.validate();
    const std::size_t E = config_.embed_dim, F = config_.filters_per_kernel;
    auto expect = [&](const std::string& name, const Shape& shape) {
        if (params_.get(name).tensor.shape() != shape) {
            throw ShapeError(fmt::format("CnnClassifier: parameter '{}' has shape {}, config implies {}", name,
                                         to_string(params_.get(name).tensor.shape()), to_string(shape)));
        }
    };
    expect("embedding", {config_.vocab_size, E});
    for (auto k : config_.kernel_sizes) {
        expect(conv_name(k, "weight"), {k * E, F});
        expect(conv_name(k, "bias"), {F});
    }
    expect("dense/weight", {F * config_.kernel_sizes.size(), config_.outputs()});
    expect("dense/bias", {config_.outputs()});
    if (params_.size() != 3 + 2 * config_.kernel_sizes.size()) {
        throw InputError("CnnClassifier: unexpected parameter count");
    }
}

Var CnnClassifier::logits(Tape& tape, const std::vector<std::vector<TokenId>>& batch, Mode mode, Rng* dropout_rng) const
{
    if (batch.empty()) {
        throw InputError("CnnClassifier: empty batch");
    }
    const std::size_t L = config_.max_len;
    Var table = tape.parameter(params_.get("embedding"));
    std::vector<std::pair<Var, Var>> convs;
    for (auto k : config_.kernel_sizes) {
        convs.emplace_back(tape.parameter(params_.get(conv_name(k, "weight"))),
                           tape.parameter(params_.get(conv_name(k, "bias"))));
    }

    std::vector<Var> rows;
    rows.reserve(batch.size());
    std::vector<TokenId> ids(L);
    std::vector<Var> pooled(config_.kernel_sizes.size());
    for (const auto& seq : batch) {
        const std::size_t len = std::min(seq.size(), L);
        std::fill(ids.begin(), ids.end(), token::pad);
        std::copy_n(seq.begin(), len, ids.begin());
        Var x = embedding(table, ids);
        for (std::size_t i = 0; i < config_.kernel_sizes.size(); ++i) {
            const std::size_t k = config_.kernel_sizes[i];
            const std::size_t valid = len >= k ? len - k + 1 : 1;
            pooled[i] = max_over_time(tanh(conv1d(x, convs[i].first, convs[i].second)), valid);
        }
        rows.push_back(pooled.size() == 1 ? pooled[0] : concat_cols(pooled));
    }
    Var features = rows.size() == 1 ? rows[0] : concat_rows(rows);
    if (mode == Mode::train && config_.dropout_rate > 0.0) {
        if (dropout_rng == nullptr) {
            throw InputError("CnnClassifier: train mode needs a dropout generator");
        }
        features = dropout(features, config_.dropout_rate, mode, *dropout_rng);
    }
    return add_row(matmul(features, tape.parameter(params_.get("dense/weight"))), tape.parameter(params_.get("dense/bias")));
}

Checkpoint CnnClassifier::to_checkpoint() const
{
    Checkpoint ckpt;
    ckpt.kind = "cnn";
    ckpt.config = config_;
    ckpt.vocab_fingerprint = fingerprint_;
    ckpt.params = params_;
    return ckpt;
}

namespace {

CnnConfig require_head(CnnConfig c, Head head)
{
    if (c.head != head) {
        throw InputError(head == Head::sigmoid ? "value discriminator needs a sigmoid head"
                                               : "novelty classifier needs a softmax head");
    }
    return c;
}

void require_cnn(const Checkpoint& ckpt)
{
    if (ckpt.kind != "cnn") {
        throw InputError(fmt::format("checkpoint holds a '{}', expected a cnn", ckpt.kind));
    }
}

} // namespace

ValueDiscriminator::ValueDiscriminator(CnnConfig config, Rng& init)
    : CnnClassifier(require_head(std::move(config), Head::sigmoid), init)
{
}

ValueDiscriminator::ValueDiscriminator(CnnConfig config, ParameterStore params)
    : CnnClassifier(require_head(std::move(config), Head::sigmoid), std::move(params))
{
}

std::vector<double> ValueDiscriminator::scores(const std::vector<std::vector<TokenId>>& batch) const
{
    Tape tape(GradMode::disabled);
    const auto& s = sigmoid(logits(tape, batch, Mode::eval, nullptr)).value();
    return {s.values().begin(), s.values().end()};
}

double ValueDiscriminator::score(std::span<const TokenId> tokens) const
{
    return scores({std::vector<TokenId>(tokens.begin(), tokens.end())}).front();
}

ValueDiscriminator ValueDiscriminator::from_checkpoint(const Checkpoint& ckpt)
{
    require_cnn(ckpt);
    ValueDiscriminator d(ckpt.config.get<CnnConfig>(), ckpt.params);
    d.fingerprint_ = ckpt.vocab_fingerprint;
    return d;
}

NoveltyClassifier::NoveltyClassifier(CnnConfig config, Rng& init)
    : CnnClassifier(require_head(std::move(config), Head::softmax), init)
{
}

NoveltyClassifier::NoveltyClassifier(CnnConfig config, ParameterStore params)
    : CnnClassifier(require_head(std::move(config), Head::softmax), std::move(params))
{
}

std::vector<double> NoveltyClassifier::class_dist(std::span<const TokenId> tokens) const
{
    Tape tape(GradMode::disabled);
    std::vector<std::vector<TokenId>> batch{std::vector<TokenId>(tokens.begin(), tokens.end())};
    const auto& p = softmax(logits(tape, batch, Mode::eval, nullptr)).value();
    return {p.values().begin(), p.values().end()};
}

NoveltyClassifier NoveltyClassifier::from_checkpoint(const Checkpoint& ckpt)
{
    require_cnn(ckpt);
    NoveltyClassifier d(ckpt.config.get<CnnConfig>(), ckpt.params);
    d.fingerprint_ = ckpt.vocab_fingerprint;
    return d;
}

} // namespace dc
