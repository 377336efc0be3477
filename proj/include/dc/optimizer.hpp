#pragma once

#include <nlohmann/json.hpp>
#include <string_view>
#include <vector>

#include "dc/tensor.hpp"

namespace dc {

enum class OptimizerKind { adagrad, adam };

std::string_view to_string(OptimizerKind k);
OptimizerKind parse_optimizer_kind(std::string_view s);

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adagrad;
    double lr = 0.01;
    double beta1 = 0.9;     // adam only
    double beta2 = 0.999;   // adam only
    double epsilon = 1e-8;

    static OptimizerConfig adagrad(double lr = 0.01) { return {OptimizerKind::adagrad, lr, 0.9, 0.999, 1e-8}; }
    static OptimizerConfig adam(double lr = 1e-4) { return {OptimizerKind::adam, lr, 0.9, 0.999, 1e-8}; }

    void validate() const;
};

void to_json(nlohmann::json& j, const OptimizerConfig& c);
void from_json(const nlohmann::json& j, OptimizerConfig& c);

// Descent step on the gradients stored in each trainable Parameter.
//
//   adagrad: G += g^2;  w -= lr * g / (sqrt(G) + eps)
//   adam:    bias-corrected first/second moments, w -= lr * m^ / (sqrt(v^) + eps)
class Optimizer {
public:
    Optimizer(OptimizerConfig config, const ParameterStore& params);

    void step(ParameterStore& params);

    [[nodiscard]] const OptimizerConfig& config() const { return config_; }
    [[nodiscard]] std::size_t steps() const { return steps_; }
    // Adagrad sums of squares / Adam second moments, one per parameter.
    [[nodiscard]] const std::vector<std::vector<double>>& accumulators() const { return second_; }

private:
    OptimizerConfig config_;
    std::vector<Shape> shapes_;
    std::vector<std::vector<double>> first_, second_;
    std::size_t steps_ = 0;
};

} // namespace dc
