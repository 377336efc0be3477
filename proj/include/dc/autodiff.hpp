#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dc/rng.hpp"
#include "dc/tensor.hpp"

namespace dc {

enum class GradMode { enabled, disabled };

// Train mode enables dropout; eval mode makes every forward pass a pure
// function of (weights, input).
enum class Mode { train, eval };

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
// owning tape is alive.
class Var {
public:
    Var() = default;

    [[nodiscard]] const Tensor& value() const;
    [[nodiscard]] const Shape& shape() const { return value().shape(); }
    [[nodiscard]] std::size_t size() const { return value().size(); }
    [[nodiscard]] double item() const;
    [[nodiscard]] Tape& tape() const { return *tape_; }
    [[nodiscard]] std::size_t id() const { return id_; }
    [[nodiscard]] bool valid() const { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

// Records primitive operations in execution order and replays them in
// reverse to accumulate gradients. Each node owns its gradient buffer, so
// backward never touches the parameters it read from unless asked to via
// backward(loss, params).
class Tape {
public:
    // Receives the tape and the id of the node whose gradient is ready.
    using BackwardFn = std::function<void(Tape&, std::size_t)>;

    explicit Tape(GradMode mode = GradMode::enabled) : mode_(mode) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor value);
    // Leaf that reads the parameter's tensor in place (no copy). The
    // parameter must outlive the tape.
    Var parameter(const Parameter& p);

    // Appends an operation. Rejects non-finite outputs and inputs from other
    // tapes. The backward function is kept only when some input needs grad.
    Var record(Tensor value, std::span<const Var> inputs, BackwardFn backward, std::string_view op);

    void backward(Var loss);
    // Zeroes every trainable parameter's grad, runs backward, then writes the
    // accumulated leaf gradients into Parameter::tensor.grad().
    void backward(Var loss, ParameterStore& params);

    [[nodiscard]] std::span<const double> grad(Var v) const;
    // Sum of the gradients of every leaf created from p; zeros if p never
    // appeared on the tape.
    [[nodiscard]] std::vector<double> gradient(const Parameter& p) const;

    [[nodiscard]] const Tensor& value(std::size_t id) const;
    [[nodiscard]] bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    // Gradient buffer of a node, allocated on first use.
    std::span<double> grad_slot(std::size_t id);

    [[nodiscard]] bool grad_enabled() const { return mode_ == GradMode::enabled; }
    [[nodiscard]] bool consumed() const { return consumed_; }
    [[nodiscard]] std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor own;
        const Tensor* external = nullptr;
        const Parameter* param = nullptr;
        std::vector<double> grad;
        bool requires_grad = false;
        BackwardFn backward;
    };

    GradMode mode_;
    bool consumed_ = false;
    std::deque<Node> nodes_;
    std::unordered_map<const Parameter*, std::vector<std::size_t>> leaves_;
};

// ---------------------------------------------------------------------------
// Primitives. Shapes are row-major; "[m,n]" denotes a rank-2 tensor.

Var matmul(Var a, Var b);           // [m,k] x [k,n] -> [m,n]
Var add(Var a, Var b);              // same shape
Var sub(Var a, Var b);              // same shape
Var mul(Var a, Var b);              // elementwise, same shape
Var add_row(Var a, Var bias);       // [m,n] + [n] broadcast over rows
Var scale(Var a, double factor);
Var sigmoid(Var a);
Var tanh(Var a);
Var log(Var a);
Var exp(Var a);
// Elementwise f with derivative df(x, f(x)).
Var map_unary(Var a, std::function<double(double)> f, std::function<double(double, double)> df);

Var softmax(Var a);                 // over the last axis, per row
Var log_softmax(Var a);             // over the last axis, per row

// table [V,E], ids -> [n,E]
Var embedding(Var table, std::span<const std::int32_t> ids);
// x [L,E], weight [k*E,F], bias [F] -> [L-k+1,F], valid padding.
Var conv1d(Var x, Var weight, Var bias);
// x [T,F] -> [1,F], max over the first `valid` rows.
Var max_over_time(Var x, std::size_t valid);
// Inverted dropout: identity in eval mode or for rate 0.
Var dropout(Var x, double rate, Mode mode, Rng& rng);

Var concat_cols(std::span<const Var> parts);   // [m,n_i] -> [m, sum n_i]
Var concat_rows(std::span<const Var> parts);   // [m_i,n] -> [sum m_i, n]
Var slice_cols(Var x, std::size_t begin, std::size_t end);

Var sum(Var a);                     // -> scalar
Var mean(Var a);                    // -> scalar

// Mean over rows of -sum_c target[r,c] * log_softmax(logits)[r,c].
Var cross_entropy(Var logits, const Tensor& targets);
// Mean over rows whose target differs from ignore_id.
Var sparse_cross_entropy(Var logits, std::span<const std::int32_t> targets, std::int32_t ignore_id = -1);
// Per-row negative log-likelihood, [B,C] -> [B].
Var nll_rows(Var logits, std::span<const std::int32_t> targets);
// logits [B] or [B,1]; mean binary cross-entropy against labels in [0,1].
Var bce_with_logits(Var logits, std::span<const double> labels);

} // namespace dc
