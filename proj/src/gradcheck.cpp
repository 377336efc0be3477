#include "dc/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

#include "dc/error.hpp"

namespace dc {

double relative_error(double analytic, double numeric)
{
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    return std::abs(analytic - numeric) / denom;
}

GradCheckReport finite_diff_check(ParameterStore& params, const LossFn& loss, double tolerance, double step)
{
    std::size_t trainable = 0;
    for (const auto& p : params) {
        if (p.trainable) {
            trainable += p.tensor.size();
        }
    }
    if (trainable > kMaxGradCheckScalars) {
        throw InputError(fmt::format(
            "finite_diff_check: model has {} trainable scalars, limit is {}; shrink the embedding, hidden or filter sizes",
            trainable, kMaxGradCheckScalars));
    }

    GradCheckReport report;
    report.tolerance = tolerance;

    std::vector<std::vector<double>> analytic;
    {
        Tape tape;
        Var l = loss(tape);
        tape.backward(l);
        for (const auto& p : params) {
            analytic.push_back(tape.gradient(p));
        }
    }

    auto evaluate = [&] {
        Tape tape(GradMode::disabled);
        return loss(tape).item();
    };

    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& p = params[k];
        if (!p.trainable) {
            continue;
        }
        GradCheckEntry entry{p.name, p.tensor.size(), 0.0, true};
        auto values = p.tensor.values();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            values[i] = saved + step;
            const double up = evaluate();
            values[i] = saved - step;
            const double down = evaluate();
            values[i] = saved;
            const double numeric = (up - down) / (2.0 * step);
            entry.max_relative_error = std::max(entry.max_relative_error, relative_error(analytic[k][i], numeric));
        }
        entry.passed = entry.max_relative_error <= tolerance;
        report.passed = report.passed && entry.passed;
        report.entries.push_back(std::move(entry));
    }
    return report;
}

} // namespace dc
