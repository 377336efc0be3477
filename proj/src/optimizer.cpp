#include "dc/optimizer.hpp"

#include <cmath>
#include <fmt/format.h>

#include "dc/error.hpp"

namespace dc {

std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::adagrad ? "adagrad" : "adam"; }

OptimizerKind parse_optimizer_kind(std::string_view s)
{
    if (s == "adagrad") {
        return OptimizerKind::adagrad;
    }
    if (s == "adam") {
        return OptimizerKind::adam;
    }
    throw InputError(fmt::format("unknown optimizer '{}' (expected adagrad or adam)", s));
}

void OptimizerConfig::validate() const
{
    if (!(lr > 0.0) || !std::isfinite(lr)) {
        throw InputError(fmt::format("optimizer: learning rate must be positive, got {}", lr));
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw InputError("optimizer: betas must lie in [0, 1)");
    }
    if (!(epsilon > 0.0)) {
        throw InputError("optimizer: epsilon must be positive");
    }
}

void to_json(nlohmann::json& j, const OptimizerConfig& c)
{
    j = nlohmann::json{{"kind", std::string(to_string(c.kind))}, {"lr", c.lr}, {"epsilon", c.epsilon}};
    if (c.kind == OptimizerKind::adam) {
        j["beta1"] = c.beta1;
        j["beta2"] = c.beta2;
    }
}

void from_json(const nlohmann::json& j, OptimizerConfig& c)
{
    c.kind = parse_optimizer_kind(j.at("kind").get<std::string>());
    c = c.kind == OptimizerKind::adagrad ? OptimizerConfig::adagrad() : OptimizerConfig::adam();
    c.lr = j.value("lr", c.lr);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.epsilon = j.value("epsilon", c.epsilon);
}

Optimizer::Optimizer(OptimizerConfig config, const ParameterStore& params) : config_(config)
{
    config_.validate();
    for (const auto& p : params) {
        shapes_.push_back(p.tensor.shape());
        second_.emplace_back(p.tensor.size(), 0.0);
        if (config_.kind == OptimizerKind::adam) {
            first_.emplace_back(p.tensor.size(), 0.0);
        }
    }
}

void Optimizer::step(ParameterStore& params)
{
    if (params.size() != shapes_.size()) {
        throw ShapeError("optimizer: parameter set changed since construction");
    }
    ++steps_;
    const double lr = config_.lr, eps = config_.epsilon;
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        if (p.tensor.shape() != shapes_[i]) {
            throw ShapeError(fmt::format("optimizer: '{}' is {} but state is {}", p.name, to_string(p.tensor.shape()),
                                         to_string(shapes_[i])));
        }
        if (!p.trainable) {
            continue;
        }
        auto w = p.tensor.values();
        const auto g = p.tensor.grad();
        auto& v = second_[i];
        if (config_.kind == OptimizerKind::adagrad) {
            for (std::size_t k = 0; k < w.size(); ++k) {
                v[k] += g[k] * g[k];
                w[k] -= lr * g[k] / (std::sqrt(v[k]) + eps);
            }
        } else {
            auto& m = first_[i];
            for (std::size_t k = 0; k < w.size(); ++k) {
                m[k] = b1 * m[k] + (1.0 - b1) * g[k];
                v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
                w[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps);
            }
        }
    }
}

} // namespace dc
