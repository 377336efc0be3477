#include "dc/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <limits>

#include "dc/error.hpp"

namespace dc {

const Tensor& Var::value() const
{
    if (tape_ == nullptr) {
        throw InputError("use of an empty Var");
    }
    return tape_->value(id_);
}

double Var::item() const
{
    const auto& v = value();
    if (v.size() != 1) {
        throw ShapeError(fmt::format("item() needs a single value, shape is {}", to_string(v.shape())));
    }
    return v[0];
}

Var Tape::constant(Tensor value)
{
    if (!value.all_finite()) {
        throw NumericalError("constant: non-finite input value");
    }
    Node n;
    n.own = std::move(value);
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(const Parameter& p)
{
    if (!p.tensor.all_finite()) {
        throw NumericalError(fmt::format("parameter '{}' holds non-finite values", p.name));
    }
    Node n;
    n.external = &p.tensor;
    n.param = &p;
    n.requires_grad = grad_enabled() && p.trainable;
    nodes_.push_back(std::move(n));
    const std::size_t id = nodes_.size() - 1;
    leaves_[&p].push_back(id);
    return Var(this, id);
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn backward, std::string_view op)
{
    if (consumed_) {
        throw InputError(fmt::format("{}: tape already consumed by backward", op));
    }
    bool needs = false;
    for (const auto& in : inputs) {
        if (in.tape_ != this) {
            throw InputError(fmt::format("{}: input recorded on a different tape", op));
        }
        needs = needs || nodes_[in.id_].requires_grad;
    }
    if (!value.all_finite()) {
        throw NumericalError(fmt::format("{}: produced a non-finite value", op));
    }
    Node n;
    n.own = std::move(value);
    n.requires_grad = needs && grad_enabled();
    if (n.requires_grad) {
        n.backward = std::move(backward);
    }
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::value(std::size_t id) const
{
    const auto& n = nodes_.at(id);
    return n.external != nullptr ? *n.external : n.own;
}

std::span<double> Tape::grad_slot(std::size_t id)
{
    auto& n = nodes_[id];
    if (n.grad.empty()) {
        n.grad.assign(value(id).size(), 0.0);
    }
    return n.grad;
}

std::span<const double> Tape::grad(Var v) const
{
    if (v.tape_ != this) {
        throw InputError("grad: Var belongs to a different tape");
    }
    return nodes_[v.id_].grad;
}

std::vector<double> Tape::gradient(const Parameter& p) const
{
    std::vector<double> g(p.tensor.size(), 0.0);
    auto it = leaves_.find(&p);
    if (it == leaves_.end()) {
        return g;
    }
    for (auto id : it->second) {
        const auto& src = nodes_[id].grad;
        if (src.empty()) {
            continue;
        }
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] += src[i];
        }
    }
    return g;
}

void Tape::backward(Var loss)
{
    if (loss.tape_ != this) {
        throw InputError("backward: loss recorded on a different tape");
    }
    if (consumed_) {
        throw InputError("backward: tape already consumed");
    }
    if (loss.size() != 1) {
        throw ShapeError(fmt::format("backward: loss must be scalar, shape is {}", to_string(loss.shape())));
    }
    consumed_ = true;
    if (!nodes_[loss.id_].requires_grad) {
        return;
    }
    grad_slot(loss.id_)[0] = 1.0;
    for (std::size_t i = loss.id_ + 1; i-- > 0;) {
        auto& n = nodes_[i];
        if (!n.requires_grad || n.grad.empty()) {
            continue;
        }
        if (n.backward) {
            n.backward(*this, i);
        }
    }
    for (const auto& [param, ids] : leaves_) {
        for (auto id : ids) {
            for (double g : nodes_[id].grad) {
                if (!std::isfinite(g)) {
                    throw NumericalError(fmt::format("backward: non-finite gradient for '{}'", param->name));
                }
            }
        }
    }
}

void Tape::backward(Var loss, ParameterStore& params)
{
    backward(loss);
    for (auto& p : params) {
        if (!p.trainable) {
            continue;
        }
        auto dst = p.tensor.grad();
        auto g = gradient(p);
        std::copy(g.begin(), g.end(), dst.begin());
    }
}

// ---------------------------------------------------------------------------

namespace {

void require_rank2(const Var& v, std::string_view op)
{
    if (v.value().rank() != 2) {
        throw ShapeError(fmt::format("{}: expected a rank-2 tensor, got {}", op, to_string(v.shape())));
    }
}

void require_same(const Var& a, const Var& b, std::string_view op)
{
    if (a.shape() != b.shape()) {
        throw ShapeError(fmt::format("{}: shape mismatch {} vs {}", op, to_string(a.shape()), to_string(b.shape())));
    }
}

// rows x cols view of a tensor, treating rank-1 as a single row.
std::pair<std::size_t, std::size_t> as_matrix(const Tensor& t)
{
    if (t.rank() == 0) {
        return {1, 1};
    }
    const std::size_t cols = t.shape().back();
    return {t.size() / cols, cols};
}

template <class Fn, class Df>
Var elementwise(Var a, Fn f, Df df, std::string_view op)
{
    const auto& x = a.value();
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = f(x[i]);
    }
    const std::size_t ai = a.id();
    Var in[] = {a};
    return a.tape().record(std::move(out), in,
        [ai, df](Tape& t, std::size_t self) {
            if (!t.requires_grad(ai)) {
                return;
            }
            const auto& x = t.value(ai);
            const auto& y = t.value(self);
            auto g = t.grad_slot(self);
            auto gx = t.grad_slot(ai);
            for (std::size_t i = 0; i < gx.size(); ++i) {
                gx[i] += g[i] * df(x[i], y[i]);
            }
        },
        op);
}

double stable_sigmoid(double x)
{
    if (x >= 0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

} // namespace

Var matmul(Var a, Var b)
{
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    const auto& A = a.value();
    const auto& B = b.value();
    const std::size_t m = A.dim(0), k = A.dim(1), n = B.dim(1);
    if (B.dim(0) != k) {
        throw ShapeError(fmt::format("matmul: inner dimensions differ, {} x {}", to_string(A.shape()), to_string(B.shape())));
    }
    Tensor out({m, n});
    auto* o = out.values().data();
    const auto* pa = A.values().data();
    const auto* pb = B.values().data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double av = pa[i * k + p];
            const double* brow = pb + p * n;
            double* orow = o + i * n;
            for (std::size_t j = 0; j < n; ++j) {
                orow[j] += av * brow[j];
            }
        }
    }
    const std::size_t ai = a.id(), bi = b.id();
    Var in[] = {a, b};
    return a.tape().record(std::move(out), in,
        [ai, bi, m, k, n](Tape& t, std::size_t self) {
            auto g = t.grad_slot(self);
            const auto* pa = t.value(ai).values().data();
            const auto* pb = t.value(bi).values().data();
            if (t.requires_grad(ai)) {
                auto ga = t.grad_slot(ai);
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t p = 0; p < k; ++p) {
                        double acc = 0.0;
                        for (std::size_t j = 0; j < n; ++j) {
                            acc += g[i * n + j] * pb[p * n + j];
                        }
                        ga[i * k + p] += acc;
                    }
                }
            }
            if (t.requires_grad(bi)) {
                auto gb = t.grad_slot(bi);
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t p = 0; p < k; ++p) {
                        const double av = pa[i * k + p];
                        for (std::size_t j = 0; j < n; ++j) {
                            gb[p * n + j] += av * g[i * n + j];
                        }
                    }
                }
            }
        },
        "matmul");
}

namespace {

Var binary(Var a, Var b, double sign_b, bool product, std::string_view op)
{
    require_same(a, b, op);
    const auto& A = a.value();
    const auto& B = b.value();
    Tensor out(A.shape());
    for (std::size_t i = 0; i < A.size(); ++i) {
        out[i] = product ? A[i] * B[i] : A[i] + sign_b * B[i];
    }
    const std::size_t ai = a.id(), bi = b.id();
    Var in[] = {a, b};
    return a.tape().record(std::move(out), in,
        [ai, bi, sign_b, product](Tape& t, std::size_t self) {
            auto g = t.grad_slot(self);
            if (t.requires_grad(ai)) {
                auto ga = t.grad_slot(ai);
                const auto& B = t.value(bi);
                for (std::size_t i = 0; i < ga.size(); ++i) {
                    ga[i] += product ? g[i] * B[i] : g[i];
                }
            }
            if (t.requires_grad(bi)) {
                auto gb = t.grad_slot(bi);
                const auto& A = t.value(ai);
                for (std::size_t i = 0; i < gb.size(); ++i) {
                    gb[i] += product ? g[i] * A[i] : sign_b * g[i];
                }
            }
        },
        op);
}

} // namespace

Var add(Var a, Var b) { return binary(a, b, 1.0, false, "add"); }
Var sub(Var a, Var b) { return binary(a, b, -1.0, false, "sub"); }
Var mul(Var a, Var b) { return binary(a, b, 0.0, true, "mul"); }

Var add_row(Var a, Var bias)
{
    require_rank2(a, "add_row");
    const auto& A = a.value();
    const auto& b = bias.value();
    const std::size_t m = A.dim(0), n = A.dim(1);
    if (b.size() != n || b.rank() > 2 || (b.rank() == 2 && b.dim(0) != 1)) {
        throw ShapeError(fmt::format("add_row: bias {} does not match row width of {}", to_string(b.shape()), to_string(A.shape())));
    }
    Tensor out(A.shape());
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            out[i * n + j] = A[i * n + j] + b[j];
        }
    }
    const std::size_t ai = a.id(), bi = bias.id();
    Var in[] = {a, bias};
    return a.tape().record(std::move(out), in,
        [ai, bi, m, n](Tape& t, std::size_t self) {
            auto g = t.grad_slot(self);
            if (t.requires_grad(ai)) {
                auto ga = t.grad_slot(ai);
                for (std::size_t i = 0; i < ga.size(); ++i) {
                    ga[i] += g[i];
                }
            }
            if (t.requires_grad(bi)) {
                auto gb = t.grad_slot(bi);
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < n; ++j) {
                        gb[j] += g[i * n + j];
                    }
                }
            }
        },
        "add_row");
}

Var scale(Var a, double factor)
{
    return elementwise(
        a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; }, "scale");
}

Var sigmoid(Var a)
{
    return elementwise(a, stable_sigmoid, [](double, double y) { return y * (1.0 - y); }, "sigmoid");
}

Var tanh(Var a)
{
    return elementwise(
        a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; }, "tanh");
}

Var log(Var a)
{
    for (double v : a.value().values()) {
        if (!(v > 0.0)) {
            throw NumericalError("log: input must be strictly positive");
        }
    }
    return elementwise(
        a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; }, "log");
}

Var exp(Var a)
{
    return elementwise(
        a, [](double x) { return std::exp(x); }, [](double, double y) { return y; }, "exp");
}

Var map_unary(Var a, std::function<double(double)> f, std::function<double(double, double)> df)
{
    return elementwise(a, std::move(f), std::move(df), "map_unary");
}

namespace {

// Row-wise log-sum-exp helper shared by the softmax family.
void row_log_softmax(const double* x, double* out, std::size_t n)
{
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
        mx = std::max(mx, x[j]);
    }
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        s += std::exp(x[j] - mx);
    }
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < n; ++j) {
        out[j] = x[j] - lse;
    }
}

} // namespace

Var softmax(Var a)
{
    const auto& x = a.value();
    const auto [rows, cols] = as_matrix(x);
    Tensor out(x.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.values().data() + r * cols;
        double* orow = out.values().data() + r * cols;
        row_log_softmax(xr, orow, cols);
        double s = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            orow[j] = std::exp(orow[j]);
            s += orow[j];
        }
        for (std::size_t j = 0; j < cols; ++j) {
            orow[j] /= s;
        }
    }
    const std::size_t ai = a.id();
    Var in[] = {a};
    return a.tape().record(std::move(out), in,
        [ai, rows = rows, cols = cols](Tape& t, std::size_t self) {
            if (!t.requires_grad(ai)) {
                return;
            }
            const auto& y = t.value(self);
            auto g = t.grad_slot(self);
            auto gx = t.grad_slot(ai);
            for (std::size_t r = 0; r < rows; ++r) {
                double dot = 0.0;
                for (std::size_t j = 0; j < cols; ++j) {
                    dot += g[r * cols + j] * y[r * cols + j];
                }
                for (std::size_t j = 0; j < cols; ++j) {
                    gx[r * cols + j] += y[r * cols + j] * (g[r * cols + j] - dot);
                }
            }
        },
        "softmax");
}

Var log_softmax(Var a)
{
    const auto& x = a.value();
    const auto [rows, cols] = as_matrix(x);
    Tensor out(x.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        row_log_softmax(x.values().data() + r * cols, out.values().data() + r * cols, cols);
    }
    const std::size_t ai = a.id();
    Var in[] = {a};
    return a.tape().record(std::move(out), in,
        [ai, rows = rows, cols = cols](Tape& t, std::size_t self) {
            if (!t.requires_grad(ai)) {
                return;
            }
            const auto& y = t.value(self);
            auto g = t.grad_slot(self);
            auto gx = t.grad_slot(ai);
            for (std::size_t r = 0; r < rows; ++r) {
                double gs = 0.0;
                for (std::size_t j = 0; j < cols; ++j) {
                    gs += g[r * cols + j];
                }
                for (std::size_t j = 0; j < cols; ++j) {
                    gx[r * cols + j] += g[r * cols + j] - std::exp(y[r * cols + j]) * gs;
                }
            }
        },
        "log_softmax");
}

Var embedding(Var table, std::span<const std::int32_t> ids)
{
    require_rank2(table, "embedding");
    const auto& T = table.value();
    const std::size_t vocab = T.dim(0), width = T.dim(1);
    if (ids.empty()) {
        throw ShapeError("embedding: empty id list");
    }
    Tensor out({ids.size(), width});
    for (std::size_t r = 0; r < ids.size(); ++r) {
        if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= vocab) {
            throw InputError(fmt::format("embedding: token id {} outside vocabulary of size {}", ids[r], vocab));
        }
        std::copy_n(T.values().data() + ids[r] * width, width, out.values().data() + r * width);
    }
    const std::size_t ti = table.id();
    std::vector<std::int32_t> idv(ids.begin(), ids.end());
    Var in[] = {table};
    return table.tape().record(std::move(out), in,
        [ti, idv = std::move(idv), width](Tape& t, std::size_t self) {
            if (!t.requires_grad(ti)) {
                return;
            }
            auto g = t.grad_slot(self);
            auto gt = t.grad_slot(ti);
            for (std::size_t r = 0; r < idv.size(); ++r) {
                for (std::size_t j = 0; j < width; ++j) {
                    gt[idv[r] * width + j] += g[r * width + j];
                }
            }
        },
        "embedding");
}

Var conv1d(Var x, Var weight, Var bias)
{
    require_rank2(x, "conv1d");
    require_rank2(weight, "conv1d");
    const auto& X = x.value();
    const auto& W = weight.value();
    const auto& B = bias.value();
    const std::size_t len = X.dim(0), width = X.dim(1);
    const std::size_t span = W.dim(0), filters = W.dim(1);
    if (span % width != 0) {
        throw ShapeError(fmt::format("conv1d: weight {} incompatible with input {}", to_string(W.shape()), to_string(X.shape())));
    }
    const std::size_t k = span / width;
    if (k > len) {
        throw ShapeError(fmt::format("conv1d: kernel size {} exceeds input length {} (input {})", k, len, to_string(X.shape())));
    }
    if (B.size() != filters) {
        throw ShapeError(fmt::format("conv1d: bias {} does not match {} filters", to_string(B.shape()), filters));
    }
    const std::size_t positions = len - k + 1;
    Tensor out({positions, filters});
    const double* px = X.values().data();
    const double* pw = W.values().data();
    double* po = out.values().data();
    for (std::size_t p = 0; p < positions; ++p) {
        double* orow = po + p * filters;
        for (std::size_t f = 0; f < filters; ++f) {
            orow[f] = B[f];
        }
        // The window for position p is the contiguous slice x[p*E, (p+k)*E).
        const double* window = px + p * width;
        for (std::size_t r = 0; r < span; ++r) {
            const double xv = window[r];
            const double* wrow = pw + r * filters;
            for (std::size_t f = 0; f < filters; ++f) {
                orow[f] += xv * wrow[f];
            }
        }
    }
    const std::size_t xi = x.id(), wi = weight.id(), bi = bias.id();
    Var in[] = {x, weight, bias};
    return x.tape().record(std::move(out), in,
        [xi, wi, bi, positions, span, filters, width](Tape& t, std::size_t self) {
            auto g = t.grad_slot(self);
            const double* px = t.value(xi).values().data();
            const double* pw = t.value(wi).values().data();
            if (t.requires_grad(xi)) {
                auto gx = t.grad_slot(xi);
                for (std::size_t p = 0; p < positions; ++p) {
                    for (std::size_t r = 0; r < span; ++r) {
                        double acc = 0.0;
                        for (std::size_t f = 0; f < filters; ++f) {
                            acc += g[p * filters + f] * pw[r * filters + f];
                        }
                        gx[p * width + r] += acc;
                    }
                }
            }
            if (t.requires_grad(wi)) {
                auto gw = t.grad_slot(wi);
                for (std::size_t p = 0; p < positions; ++p) {
                    for (std::size_t r = 0; r < span; ++r) {
                        const double xv = px[p * width + r];
                        for (std::size_t f = 0; f < filters; ++f) {
                            gw[r * filters + f] += xv * g[p * filters + f];
                        }
                    }
                }
            }
            if (t.requires_grad(bi)) {
                auto gb = t.grad_slot(bi);
                for (std::size_t p = 0; p < positions; ++p) {
                    for (std::size_t f = 0; f < filters; ++f) {
                        gb[f] += g[p * filters + f];
                    }
                }
            }
        },
        "conv1d");
}

Var max_over_time(Var x, std::size_t valid)
{
    require_rank2(x, "max_over_time");
    const auto& X = x.value();
    const std::size_t steps = X.dim(0), cols = X.dim(1);
    if (valid == 0 || valid > steps) {
        throw ShapeError(fmt::format("max_over_time: valid length {} outside [1, {}]", valid, steps));
    }
    Tensor out({1, cols});
    std::vector<std::size_t> argmax(cols, 0);
    for (std::size_t c = 0; c < cols; ++c) {
        double best = X[c];
        for (std::size_t r = 1; r < valid; ++r) {
            if (X[r * cols + c] > best) {
                best = X[r * cols + c];
                argmax[c] = r;
            }
        }
        out[c] = best;
    }
    const std::size_t xi = x.id();
    Var in[] = {x};
    return x.tape().record(std::move(out), in,
        [xi, cols, argmax = std::move(argmax)](Tape& t, std::size_t self) {
            if (!t.requires_grad(xi)) {
                return;
            }
            auto g = t.grad_slot(self);
            auto gx = t.grad_slot(xi);
            for (std::size_t c = 0; c < cols; ++c) {
                gx[argmax[c] * cols + c] += g[c];
            }
        },
        "max_over_time");
}

Var dropout(Var x, double rate, Mode mode, Rng& rng)
{
    if (!(rate >= 0.0 && rate < 1.0)) {
        throw InputError(fmt::format("dropout: rate {} outside [0, 1)", rate));
    }
    if (mode == Mode::eval || rate == 0.0) {
        return x;
    }
    const double keep = 1.0 - rate;
    const auto& X = x.value();
    std::vector<double> mask(X.size());
    Tensor out(X.shape());
    for (std::size_t i = 0; i < X.size(); ++i) {
        mask[i] = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
        out[i] = X[i] * mask[i];
    }
    const std::size_t xi = x.id();
    Var in[] = {x};
    return x.tape().record(std::move(out), in,
        [xi, mask = std::move(mask)](Tape& t, std::size_t self) {
            if (!t.requires_grad(xi)) {
                return;
            }
            auto g = t.grad_slot(self);
            auto gx = t.grad_slot(xi);
            for (std::size_t i = 0; i < gx.size(); ++i) {
                gx[i] += g[i] * mask[i];
            }
        },
        "dropout");
}

Var concat_cols(std::span<const Var> parts)
{
    if (parts.empty()) {
        throw ShapeError("concat_cols: nothing to concatenate");
    }
    const std::size_t rows = parts[0].value().rank() == 2 ? parts[0].value().dim(0) : 0;
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    for (const auto& p : parts) {
        require_rank2(p, "concat_cols");
        if (p.value().dim(0) != rows) {
            throw ShapeError(fmt::format("concat_cols: row mismatch {} vs {}", to_string(parts[0].shape()), to_string(p.shape())));
        }
        widths.push_back(p.value().dim(1));
        total += widths.back();
    }
    Tensor out({rows, total});
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const auto& v = parts[k].value();
        for (std::size_t r = 0; r < rows; ++r) {
            std::copy_n(v.values().data() + r * widths[k], widths[k], out.values().data() + r * total + offset);
        }
        offset += widths[k];
    }
    std::vector<std::size_t> ids;
    for (const auto& p : parts) {
        ids.push_back(p.id());
    }
    return parts[0].tape().record(std::move(out), parts,
        [ids = std::move(ids), widths = std::move(widths), rows, total](Tape& t, std::size_t self) {
            auto g = t.grad_slot(self);
            std::size_t offset = 0;
            for (std::size_t k = 0; k < ids.size(); ++k) {
                if (t.requires_grad(ids[k])) {
                    auto gp = t.grad_slot(ids[k]);
                    for (std::size_t r = 0; r < rows; ++r) {
                        for (std::size_t j = 0; j < widths[k]; ++j) {
                            gp[r * widths[k] + j] += g[r * total + offset + j];
                        }
                    }
                }
                offset += widths[k];
            }
        },
        "concat_cols");
}

Var concat_rows(std::span<const Var> parts)
{
    if (parts.empty()) {
        throw ShapeError("concat_rows: nothing to concatenate");
    }
    require_rank2(parts[0], "concat_rows");
    const std::size_t cols = parts[0].value().dim(1);
    std::size_t rows = 0;
    for (const auto& p : parts) {
        require_rank2(p, "concat_rows");
        if (p.value().dim(1) != cols) {
            throw ShapeError(fmt::format("concat_rows: column mismatch {} vs {}", to_string(parts[0].shape()), to_string(p.shape())));
        }
        rows += p.value().dim(0);
    }
    Tensor out({rows, cols});
    std::size_t offset = 0;
    std::vector<std::size_t> ids;
    for (const auto& p : parts) {
        const auto& v = p.value();
        std::copy(v.values().begin(), v.values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(offset));
        offset += v.size();
        ids.push_back(p.id());
    }
    return parts[0].tape().record(std::move(out), parts,
        [ids = std::move(ids)](Tape& t, std::size_t self) {
            auto g = t.grad_slot(self);
            std::size_t offset = 0;
            for (auto id : ids) {
                const std::size_t n = t.value(id).size();
                if (t.requires_grad(id)) {
                    auto gp = t.grad_slot(id);
                    for (std::size_t i = 0; i < n; ++i) {
                        gp[i] += g[offset + i];
                    }
                }
                offset += n;
            }
        },
        "concat_rows");
}

Var slice_cols(Var x, std::size_t begin, std::size_t end)
{
    require_rank2(x, "slice_cols");
    const auto& X = x.value();
    const std::size_t rows = X.dim(0), cols = X.dim(1);
    if (begin >= end || end > cols) {
        throw ShapeError(fmt::format("slice_cols: range [{}, {}) invalid for {}", begin, end, to_string(X.shape())));
    }
    const std::size_t w = end - begin;
    Tensor out({rows, w});
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(X.values().data() + r * cols + begin, w, out.values().data() + r * w);
    }
    const std::size_t xi = x.id();
    Var in[] = {x};
    return x.tape().record(std::move(out), in,
        [xi, rows, cols, begin, w](Tape& t, std::size_t self) {
            if (!t.requires_grad(xi)) {
                return;
            }
            auto g = t.grad_slot(self);
            auto gx = t.grad_slot(xi);
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t j = 0; j < w; ++j) {
                    gx[r * cols + begin + j] += g[r * w + j];
                }
            }
        },
        "slice_cols");
}

namespace {

Var reduce(Var a, bool average)
{
    const auto& x = a.value();
    double s = 0.0;
    for (double v : x.values()) {
        s += v;
    }
    const double factor = average ? 1.0 / static_cast<double>(x.size()) : 1.0;
    const std::size_t ai = a.id();
    Var in[] = {a};
    return a.tape().record(Tensor::scalar(s * factor), in,
        [ai, factor](Tape& t, std::size_t self) {
            if (!t.requires_grad(ai)) {
                return;
            }
            const double g = t.grad_slot(self)[0] * factor;
            for (auto& gx : t.grad_slot(ai)) {
                gx += g;
            }
        },
        average ? "mean" : "sum");
}

} // namespace

Var sum(Var a) { return reduce(a, false); }
Var mean(Var a) { return reduce(a, true); }

Var cross_entropy(Var logits, const Tensor& targets)
{
    require_rank2(logits, "cross_entropy");
    if (targets.shape() != logits.shape()) {
        throw ShapeError(fmt::format("cross_entropy: targets {} vs logits {}", to_string(targets.shape()), to_string(logits.shape())));
    }
    if (!targets.all_finite()) {
        throw NumericalError("cross_entropy: non-finite targets");
    }
    const auto& X = logits.value();
    const std::size_t rows = X.dim(0), cols = X.dim(1);
    std::vector<double> logp(X.size());
    double loss = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        row_log_softmax(X.values().data() + r * cols, logp.data() + r * cols, cols);
        for (std::size_t c = 0; c < cols; ++c) {
            loss -= targets[r * cols + c] * logp[r * cols + c];
        }
    }
    loss /= static_cast<double>(rows);
    const std::size_t xi = logits.id();
    Var in[] = {logits};
    return logits.tape().record(Tensor::scalar(loss), in,
        [xi, rows, cols, logp = std::move(logp), targets](Tape& t, std::size_t self) {
            if (!t.requires_grad(xi)) {
                return;
            }
            const double g = t.grad_slot(self)[0] / static_cast<double>(rows);
            auto gx = t.grad_slot(xi);
            for (std::size_t r = 0; r < rows; ++r) {
                double mass = 0.0;
                for (std::size_t c = 0; c < cols; ++c) {
                    mass += targets[r * cols + c];
                }
                for (std::size_t c = 0; c < cols; ++c) {
                    const std::size_t i = r * cols + c;
                    gx[i] += g * (std::exp(logp[i]) * mass - targets[i]);
                }
            }
        },
        "cross_entropy");
}

namespace {

Var sparse_nll(Var logits, std::span<const std::int32_t> targets, std::int32_t ignore_id, bool per_row)
{
    require_rank2(logits, per_row ? "nll_rows" : "sparse_cross_entropy");
    const auto& X = logits.value();
    const std::size_t rows = X.dim(0), cols = X.dim(1);
    if (targets.size() != rows) {
        throw ShapeError(fmt::format("sparse cross-entropy: {} targets for logits {}", targets.size(), to_string(X.shape())));
    }
    std::vector<double> logp(X.size());
    std::vector<std::int32_t> tv(targets.begin(), targets.end());
    Tensor out = per_row ? Tensor({rows}) : Tensor::scalar(0.0);
    std::size_t counted = 0;
    for (std::size_t r = 0; r < rows; ++r) {
        row_log_softmax(X.values().data() + r * cols, logp.data() + r * cols, cols);
        if (tv[r] == ignore_id) {
            continue;
        }
        if (tv[r] < 0 || static_cast<std::size_t>(tv[r]) >= cols) {
            throw InputError(fmt::format("sparse cross-entropy: target {} outside [0, {})", tv[r], cols));
        }
        const double nll = -logp[r * cols + static_cast<std::size_t>(tv[r])];
        if (per_row) {
            out[r] = nll;
        } else {
            out[0] += nll;
        }
        ++counted;
    }
    if (counted == 0) {
        throw InputError("sparse cross-entropy: every target is ignored");
    }
    const double norm = per_row ? 1.0 : 1.0 / static_cast<double>(counted);
    if (!per_row) {
        out[0] *= norm;
    }
    const std::size_t xi = logits.id();
    Var in[] = {logits};
    return logits.tape().record(std::move(out), in,
        [xi, rows, cols, norm, per_row, ignore_id, logp = std::move(logp), tv = std::move(tv)](Tape& t, std::size_t self) {
            if (!t.requires_grad(xi)) {
                return;
            }
            auto g = t.grad_slot(self);
            auto gx = t.grad_slot(xi);
            for (std::size_t r = 0; r < rows; ++r) {
                if (tv[r] == ignore_id) {
                    continue;
                }
                const double gr = (per_row ? g[r] : g[0]) * norm;
                for (std::size_t c = 0; c < cols; ++c) {
                    const double onehot = static_cast<std::int32_t>(c) == tv[r] ? 1.0 : 0.0;
                    gx[r * cols + c] += gr * (std::exp(logp[r * cols + c]) - onehot);
                }
            }
        },
        per_row ? "nll_rows" : "sparse_cross_entropy");
}

} // namespace

Var sparse_cross_entropy(Var logits, std::span<const std::int32_t> targets, std::int32_t ignore_id)
{
    return sparse_nll(logits, targets, ignore_id, false);
}

Var nll_rows(Var logits, std::span<const std::int32_t> targets)
{
    return sparse_nll(logits, targets, -1, true);
}

Var bce_with_logits(Var logits, std::span<const double> labels)
{
    const auto& X = logits.value();
    const bool column = X.rank() == 2 && X.dim(1) == 1;
    if (!(X.rank() == 1 || column) || X.size() != labels.size()) {
        throw ShapeError(fmt::format("bce_with_logits: logits {} vs {} labels", to_string(X.shape()), labels.size()));
    }
    const std::size_t n = X.size();
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = X[i];
        if (!(labels[i] >= 0.0 && labels[i] <= 1.0)) {
            throw InputError("bce_with_logits: labels must lie in [0, 1]");
        }
        loss += std::max(x, 0.0) - x * labels[i] + std::log1p(std::exp(-std::abs(x)));
    }
    loss /= static_cast<double>(n);
    const std::size_t xi = logits.id();
    std::vector<double> lv(labels.begin(), labels.end());
    Var in[] = {logits};
    return logits.tape().record(Tensor::scalar(loss), in,
        [xi, n, lv = std::move(lv)](Tape& t, std::size_t self) {
            if (!t.requires_grad(xi)) {
                return;
            }
            const double g = t.grad_slot(self)[0] / static_cast<double>(n);
            const auto& X = t.value(xi);
            auto gx = t.grad_slot(xi);
            for (std::size_t i = 0; i < n; ++i) {
                gx[i] += g * (stable_sigmoid(X[i]) - lv[i]);
            }
        },
        "bce_with_logits");
}

} // namespace dc
