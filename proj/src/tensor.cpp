#include "dc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

#include "dc/error.hpp"

namespace dc {

std::size_t numel(const Shape& shape)
{
    std::size_t n = 1;
    for (auto d : shape) {
        n *= d;
    }
    return n;
}

std::string to_string(const Shape& shape)
{
    return fmt::format("[{}]", fmt::join(shape, ", "));
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape))
{
    for (auto d : shape_) {
        if (d == 0) {
            throw ShapeError(fmt::format("tensor dimensions must be positive, got {}", to_string(shape_)));
        }
    }
    values_.assign(numel(shape_), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : Tensor(std::move(shape))
{
    if (values.size() != values_.size()) {
        throw ShapeError(fmt::format("shape {} needs {} values, got {}", to_string(shape_), values_.size(), values.size()));
    }
    values_ = std::move(values);
}

std::span<double> Tensor::grad()
{
    if (!grad_) {
        grad_.emplace(values_.size(), 0.0);
    }
    return *grad_;
}

std::span<const double> Tensor::grad() const
{
    if (!grad_) {
        return {};
    }
    return *grad_;
}

void Tensor::zero_grad()
{
    auto g = grad();
    std::fill(g.begin(), g.end(), 0.0);
}

bool Tensor::all_finite() const
{
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v)
{
    std::fill(values_.begin(), values_.end(), v);
}

Parameter& ParameterStore::add(std::string name, Tensor tensor, bool trainable)
{
    if (find(name) != nullptr) {
        throw InputError(fmt::format("duplicate parameter name '{}'", name));
    }
    params_.push_back(Parameter{std::move(name), std::move(tensor), trainable});
    return params_.back();
}

Parameter* ParameterStore::find(std::string_view name)
{
    for (auto& p : params_) {
        if (p.name == name) {
            return &p;
        }
    }
    return nullptr;
}

const Parameter* ParameterStore::find(std::string_view name) const
{
    return const_cast<ParameterStore*>(this)->find(name);
}

Parameter& ParameterStore::get(std::string_view name)
{
    if (auto* p = find(name)) {
        return *p;
    }
    throw InputError(fmt::format("no parameter named '{}'", name));
}

const Parameter& ParameterStore::get(std::string_view name) const
{
    return const_cast<ParameterStore*>(this)->get(name);
}

std::size_t ParameterStore::scalar_count() const
{
    std::size_t n = 0;
    for (const auto& p : params_) {
        n += p.tensor.size();
    }
    return n;
}

void ParameterStore::zero_grad()
{
    for (auto& p : params_) {
        if (p.trainable) {
            p.tensor.zero_grad();
        }
    }
}

void ParameterStore::assign_values(const ParameterStore& other)
{
    if (other.size() != size()) {
        throw InputError("parameter stores differ in size");
    }
    for (std::size_t i = 0; i < size(); ++i) {
        auto& dst = params_[i];
        const auto& src = other[i];
        if (dst.name != src.name || dst.tensor.shape() != src.tensor.shape()) {
            throw InputError(fmt::format("parameter mismatch: '{}' {} vs '{}' {}", dst.name,
                                         to_string(dst.tensor.shape()), src.name, to_string(src.tensor.shape())));
        }
        std::copy(src.tensor.values().begin(), src.tensor.values().end(), dst.tensor.values().begin());
    }
}

} // namespace dc
