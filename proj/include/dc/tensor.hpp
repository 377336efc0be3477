#pragma once

#include <cstddef>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dc {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

// Dense row-major array of doubles with an optional gradient slot.
// A rank-0 tensor (empty shape) holds exactly one value.
class Tensor {
public:
    Tensor() : Tensor(Shape{}) {}
    explicit Tensor(Shape shape);
    Tensor(Shape shape, std::vector<double> values);

    static Tensor scalar(double v) { return Tensor(Shape{}, {v}); }

    [[nodiscard]] const Shape& shape() const { return shape_; }
    [[nodiscard]] std::size_t rank() const { return shape_.size(); }
    [[nodiscard]] std::size_t dim(std::size_t i) const { return shape_.at(i); }
    [[nodiscard]] std::size_t size() const { return values_.size(); }

    [[nodiscard]] std::span<double> values() { return values_; }
    [[nodiscard]] std::span<const double> values() const { return values_; }
    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }
    // 2-D element access.
    double& at(std::size_t r, std::size_t c) { return values_[r * shape_[1] + c]; }
    [[nodiscard]] double at(std::size_t r, std::size_t c) const { return values_[r * shape_[1] + c]; }

    [[nodiscard]] bool has_grad() const { return grad_.has_value(); }
    // Allocates a zeroed grad slot if absent.
    std::span<double> grad();
    [[nodiscard]] std::span<const double> grad() const;
    void zero_grad();

    [[nodiscard]] bool all_finite() const;
    void fill(double v);

    friend bool operator==(const Tensor& a, const Tensor& b)
    {
        return a.shape_ == b.shape_ && a.values_ == b.values_;
    }

private:
    Shape shape_;
    std::vector<double> values_;
    std::optional<std::vector<double>> grad_;
};

struct Parameter {
    std::string name;
    Tensor tensor;
    bool trainable = true;
};

// Ordered collection of uniquely named parameters.
class ParameterStore {
public:
    Parameter& add(std::string name, Tensor tensor, bool trainable = true);

    [[nodiscard]] Parameter* find(std::string_view name);
    [[nodiscard]] const Parameter* find(std::string_view name) const;
    Parameter& get(std::string_view name);
    [[nodiscard]] const Parameter& get(std::string_view name) const;

    [[nodiscard]] std::size_t size() const { return params_.size(); }
    [[nodiscard]] bool empty() const { return params_.empty(); }
    Parameter& operator[](std::size_t i) { return params_[i]; }
    const Parameter& operator[](std::size_t i) const { return params_[i]; }
    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    [[nodiscard]] auto begin() const { return params_.begin(); }
    [[nodiscard]] auto end() const { return params_.end(); }

    [[nodiscard]] std::size_t scalar_count() const;
    void zero_grad();
    // Copies values from another store with identical names and shapes.
    void assign_values(const ParameterStore& other);

private:
    std::deque<Parameter> params_;  // deque keeps references stable across add()
};

} // namespace dc
