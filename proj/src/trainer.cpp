#include "dc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <numeric>
#include <set>

#include "dc/error.hpp"

namespace dc {

void TrainOptions::validate() const
{
    if (max_epochs < 1) {
        throw InputError("training: max_epochs must be at least 1");
    }
    if (batch_size < 1) {
        throw InputError("training: batch_size must be at least 1");
    }
}

namespace {

std::vector<std::size_t> shuffled_order(std::size_t n, Rng& rng)
{
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    return order;
}

std::vector<TokenId> with_eos(const std::vector<TokenId>& s)
{
    std::vector<TokenId> out(s);
    out.push_back(token::eos);
    return out;
}

std::size_t target_count(const Sequences& batch)
{
    std::size_t n = 0;
    for (const auto& s : batch) {
        n += s.size();
    }
    return n;
}

bool improved(const TrainHistory& h, double loss) { return h.epochs.empty() || loss < h.best_valid_loss; }

// Shared epoch loop. `epoch_fn` trains one epoch and returns (train loss,
// valid loss, accuracy).
TrainHistory run_epochs(ParameterStore& params, const TrainOptions& options,
                        const std::function<EpochMetrics(std::size_t)>& epoch_fn)
{
    TrainHistory history;
    ParameterStore best = params;
    for (std::size_t epoch = 1; epoch <= options.max_epochs; ++epoch) {
        EpochMetrics m = epoch_fn(epoch);
        m.epoch = epoch;
        if (!std::isfinite(m.train_loss) || !std::isfinite(m.valid_loss)) {
            throw NumericalError(fmt::format("training diverged at epoch {} (non-finite loss)", epoch));
        }
        if (improved(history, m.valid_loss)) {
            history.best_epoch = epoch;
            history.best_valid_loss = m.valid_loss;
            best = params;
        }
        history.epochs.push_back(m);
        if (options.on_epoch) {
            options.on_epoch(m);
        }
        if (epoch - history.best_epoch >= options.patience) {
            break;
        }
    }
    params.assign_values(best);
    return history;
}

} // namespace

double lm_loss(const LanguageModel& model, const Sequences& data, std::size_t batch_size)
{
    if (data.empty()) {
        throw InputError("lm_loss: empty data set");
    }
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t start = 0; start < data.size(); start += batch_size) {
        Sequences batch;
        for (std::size_t i = start; i < std::min(data.size(), start + batch_size); ++i) {
            batch.push_back(with_eos(data[i]));
        }
        Tape tape(GradMode::disabled);
        const std::size_t n = target_count(batch);
        total += model.batch_loss(tape, batch, Mode::eval, nullptr).item() * static_cast<double>(n);
        count += n;
    }
    return total / static_cast<double>(count);
}

TrainHistory train_lm(LanguageModel& model, const Sequences& train, const Sequences& valid,
                      const OptimizerConfig& optimizer, const TrainOptions& options, Rng rng)
{
    options.validate();
    if (train.empty()) {
        throw InputError("train_lm: training split is empty");
    }
    if (valid.empty()) {
        throw InputError("train_lm: validation split is empty");
    }
    Optimizer opt(optimizer, model.parameters());
    return run_epochs(model.parameters(), options, [&](std::size_t epoch) {
        Rng epoch_rng = rng.split(fmt::format("epoch{}", epoch));
        Rng dropout_rng = epoch_rng.split("dropout");
        const auto order = shuffled_order(train.size(), epoch_rng);
        double total = 0.0;
        std::size_t count = 0;
        for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
            Sequences batch;
            for (std::size_t i = start; i < std::min(order.size(), start + options.batch_size); ++i) {
                batch.push_back(with_eos(train[order[i]]));
            }
            Tape tape;
            Var loss = model.batch_loss(tape, batch, Mode::train, &dropout_rng);
            const std::size_t n = target_count(batch);
            total += loss.item() * static_cast<double>(n);
            count += n;
            tape.backward(loss, model.parameters());
            opt.step(model.parameters());
        }
        EpochMetrics m;
        m.train_loss = total / static_cast<double>(count);
        m.valid_loss = lm_loss(model, valid, options.batch_size);
        return m;
    });
}

ClassifierEval evaluate_classifier(const NoveltyClassifier& model, const LabeledSequences& data, std::size_t batch_size)
{
    if (data.inputs.empty() || data.inputs.size() != data.labels.size()) {
        throw InputError("evaluate_classifier: need one label per input and at least one input");
    }
    double loss = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < data.inputs.size(); start += batch_size) {
        const std::size_t end = std::min(data.inputs.size(), start + batch_size);
        Sequences batch(data.inputs.begin() + static_cast<std::ptrdiff_t>(start),
                        data.inputs.begin() + static_cast<std::ptrdiff_t>(end));
        std::vector<TokenId> labels;
        for (std::size_t i = start; i < end; ++i) {
            labels.push_back(static_cast<TokenId>(data.labels[i]));
        }
        Tape tape(GradMode::disabled);
        Var logits = model.logits(tape, batch, Mode::eval, nullptr);
        loss += sparse_cross_entropy(logits, labels).item() * static_cast<double>(end - start);
        const auto& z = logits.value();
        const std::size_t C = z.dim(1);
        for (std::size_t r = 0; r < end - start; ++r) {
            std::size_t arg = 0;
            for (std::size_t c = 1; c < C; ++c) {
                if (z.at(r, c) > z.at(r, arg)) {
                    arg = c;
                }
            }
            correct += arg == static_cast<std::size_t>(labels[r]) ? 1 : 0;
        }
    }
    const auto n = static_cast<double>(data.inputs.size());
    return {loss / n, static_cast<double>(correct) / n};
}

TrainHistory train_classifier(NoveltyClassifier& model, const LabeledSequences& train, const LabeledSequences& valid,
                              const OptimizerConfig& optimizer, const TrainOptions& options, Rng rng)
{
    options.validate();
    if (train.inputs.empty() || train.inputs.size() != train.labels.size()) {
        throw InputError("train_classifier: training split is empty or labels do not match inputs");
    }
    if (valid.inputs.empty()) {
        throw InputError("train_classifier: validation split is empty");
    }
    const std::set<std::size_t> classes(train.labels.begin(), train.labels.end());
    if (classes.size() < 2 || model.num_classes() < 2) {
        throw InputError("train_classifier: at least two classes are required");
    }
    for (std::size_t label : train.labels) {
        if (label >= model.num_classes()) {
            throw InputError(fmt::format("train_classifier: label {} >= num_classes {}", label, model.num_classes()));
        }
    }
    Optimizer opt(optimizer, model.parameters());
    return run_epochs(model.parameters(), options, [&](std::size_t epoch) {
        Rng epoch_rng = rng.split(fmt::format("epoch{}", epoch));
        Rng dropout_rng = epoch_rng.split("dropout");
        const auto order = shuffled_order(train.inputs.size(), epoch_rng);
        double total = 0.0;
        for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
            Sequences batch;
            std::vector<TokenId> labels;
            for (std::size_t i = start; i < std::min(order.size(), start + options.batch_size); ++i) {
                batch.push_back(train.inputs[order[i]]);
                labels.push_back(static_cast<TokenId>(train.labels[order[i]]));
            }
            Tape tape;
            Var loss = sparse_cross_entropy(model.logits(tape, batch, Mode::train, &dropout_rng), labels);
            total += loss.item() * static_cast<double>(batch.size());
            tape.backward(loss, model.parameters());
            opt.step(model.parameters());
        }
        const auto eval = evaluate_classifier(model, valid, options.batch_size);
        EpochMetrics m;
        m.train_loss = total / static_cast<double>(order.size());
        m.valid_loss = eval.loss;
        m.valid_accuracy = eval.accuracy;
        return m;
    });
}

} // namespace dc
