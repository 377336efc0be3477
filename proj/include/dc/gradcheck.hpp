#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dc/autodiff.hpp"

namespace dc {

inline constexpr std::size_t kMaxGradCheckScalars = 20000;

struct GradCheckEntry {
    std::string name;
    std::size_t scalars = 0;
    double max_relative_error = 0.0;
    bool passed = true;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double tolerance = 0.0;
    bool passed = true;
};

// Builds a scalar loss on the given tape. Must be deterministic: any dropout
// inside has to draw from an Rng seeded afresh on every call.
using LossFn = std::function<Var(Tape&)>;

// |a - n| / max(|a|, |n|, 1e-6). The floor keeps gradients that are zero up
// to rounding from reporting huge relative errors.
double relative_error(double analytic, double numeric);

// Compares reverse-mode gradients against central differences for every
// trainable scalar. Values are restored afterwards.
GradCheckReport finite_diff_check(ParameterStore& params, const LossFn& loss, double tolerance, double step = 1e-5);

template <class Model>
GradCheckReport finite_diff_check(Model& model, const LossFn& loss, double tolerance, double step = 1e-5)
{
    return finite_diff_check(model.parameters(), loss, tolerance, step);
}

} // namespace dc
