#include "sisvae/autodiff.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <utility>

namespace sisvae::ad {

namespace {

thread_local Tape* g_active_tape = nullptr;

[[noreturn]] void shape_error(const char* op, const std::vector<std::size_t>& a,
                              const std::vector<std::size_t>& b) {
    throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_str(a) +
                                " and " + shape_str(b));
}

bool track(const TensorPtr& a) { return a->requires_grad && Tape::active() != nullptr; }

void accumulate(Tensor& t, const std::vector<double>& delta) {
    auto& g = t.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

double stable_sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double stable_softplus(double x) {
    // max(x,0) + log1p(exp(-|x|)) stays finite for |x| > 30
    return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x)));
}

enum class Broadcast { same, a_scalar, b_scalar, mat_vec };

Broadcast binary_rule(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape == b.shape) return Broadcast::same;
    if (a.numel() == 1) return Broadcast::a_scalar;
    if (b.numel() == 1) return Broadcast::b_scalar;
    if (a.is_matrix() && b.is_vector() && a.cols() == b.numel()) return Broadcast::mat_vec;
    shape_error(op, a.shape, b.shape);
}

// Applies fwd elementwise under the broadcast rule and records a backward
// step built from the two partial-derivative evaluators.
template <typename Fwd, typename DA, typename DB>
TensorPtr binary_op(const char* name, const TensorPtr& a, const TensorPtr& b, Fwd fwd, DA da,
                    DB db) {
    const Broadcast bc = binary_rule(name, *a, *b);
    const Tensor& big = (bc == Broadcast::a_scalar) ? *b : *a;
    auto out = std::make_shared<Tensor>();
    out->shape = big.shape;
    out->values.resize(big.numel());

    const std::size_t n = big.numel();
    const std::size_t c = big.cols();
    const auto a_index = [bc](std::size_t i) { return bc == Broadcast::a_scalar ? 0 : i; };
    const auto b_index = [bc, c](std::size_t i) {
        if (bc == Broadcast::b_scalar) return std::size_t{0};
        if (bc == Broadcast::mat_vec) return i % c;
        return i;
    };
    for (std::size_t i = 0; i < n; ++i) {
        out->values[i] = fwd(a->values[a_index(i)], b->values[b_index(i)]);
    }

    if (track(a) || track(b)) {
        out->requires_grad = true;
        Tape::active()->record([=]() {
            const auto& g = out->grad;
            if (g.empty()) return;
            if (a->requires_grad) {
                auto& ga = a->grad_buffer();
                for (std::size_t i = 0; i < n; ++i) {
                    ga[a_index(i)] += g[i] * da(a->values[a_index(i)], b->values[b_index(i)]);
                }
            }
            if (b->requires_grad) {
                auto& gb = b->grad_buffer();
                for (std::size_t i = 0; i < n; ++i) {
                    gb[b_index(i)] += g[i] * db(a->values[a_index(i)], b->values[b_index(i)]);
                }
            }
        });
    }
    return out;
}

template <typename Fwd, typename Dx>
TensorPtr unary_op(const TensorPtr& x, Fwd fwd, Dx dx_from_in_out) {
    auto out = std::make_shared<Tensor>();
    out->shape = x->shape;
    out->values.resize(x->numel());
    for (std::size_t i = 0; i < x->numel(); ++i) out->values[i] = fwd(x->values[i]);

    if (track(x)) {
        out->requires_grad = true;
        Tape::active()->record([=]() {
            if (out->grad.empty()) return;
            auto& gx = x->grad_buffer();
            for (std::size_t i = 0; i < gx.size(); ++i) {
                gx[i] += out->grad[i] * dx_from_in_out(x->values[i], out->values[i]);
            }
        });
    }
    return out;
}

}  // namespace

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ')';
    return os.str();
}

TensorPtr make_tensor(std::vector<std::size_t> shape, std::vector<double> values,
                      bool requires_grad) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    if (shape.empty() || n != values.size()) {
        throw std::invalid_argument("make_tensor: shape " + shape_str(shape) + " does not match " +
                                    std::to_string(values.size()) + " values");
    }
    auto t = std::make_shared<Tensor>();
    t->shape = std::move(shape);
    t->values = std::move(values);
    t->requires_grad = requires_grad;
    return t;
}

TensorPtr make_vector(std::vector<double> values, bool requires_grad) {
    const std::size_t n = values.size();
    return make_tensor({n}, std::move(values), requires_grad);
}

TensorPtr make_scalar(double value, bool requires_grad) {
    return make_tensor({1}, {value}, requires_grad);
}

TensorPtr zeros(std::vector<std::size_t> shape, bool requires_grad) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return make_tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tape::Tape() : prev_(g_active_tape) { g_active_tape = this; }

Tape::~Tape() { g_active_tape = prev_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::function<void()> step) {
    if (consumed_) {
        throw std::logic_error("Tape::record: tape already consumed by backward; clear() first");
    }
    steps_.push_back(std::move(step));
}

void Tape::backward(const TensorPtr& root) {
    if (!root || root->numel() != 1) {
        throw std::invalid_argument("Tape::backward: root must be a scalar tensor");
    }
    if (consumed_) {
        throw std::logic_error("Tape::backward: tape already consumed; clear() first");
    }
    root->grad_buffer()[0] += 1.0;
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
    consumed_ = true;
}

void Tape::clear() {
    steps_.clear();
    consumed_ = false;
}

TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
    return binary_op(
        "add", a, b, [](double x, double y) { return x + y; },
        [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

TensorPtr sub(const TensorPtr& a, const TensorPtr& b) {
    return binary_op(
        "sub", a, b, [](double x, double y) { return x - y; },
        [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

TensorPtr mul(const TensorPtr& a, const TensorPtr& b) {
    return binary_op(
        "mul_elementwise", a, b, [](double x, double y) { return x * y; },
        [](double, double y) { return y; }, [](double x, double) { return x; });
}

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b) {
    if (!a->is_matrix()) shape_error("matmul", a->shape, b->shape);
    const std::size_t r = a->shape[0];
    const std::size_t c = a->shape[1];

    if (b->is_vector()) {
        if (b->numel() != c) shape_error("matmul", a->shape, b->shape);
        auto out = make_tensor({r}, std::vector<double>(r, 0.0));
        for (std::size_t i = 0; i < r; ++i) {
            double acc = 0.0;
            const double* row = a->values.data() + i * c;
            for (std::size_t k = 0; k < c; ++k) acc += row[k] * b->values[k];
            out->values[i] = acc;
        }
        if (track(a) || track(b)) {
            out->requires_grad = true;
            Tape::active()->record([=]() {
                if (out->grad.empty()) return;
                const auto& g = out->grad;
                if (a->requires_grad) {
                    auto& ga = a->grad_buffer();
                    for (std::size_t i = 0; i < r; ++i)
                        for (std::size_t k = 0; k < c; ++k) ga[i * c + k] += g[i] * b->values[k];
                }
                if (b->requires_grad) {
                    auto& gb = b->grad_buffer();
                    for (std::size_t i = 0; i < r; ++i) {
                        const double* row = a->values.data() + i * c;
                        for (std::size_t k = 0; k < c; ++k) gb[k] += row[k] * g[i];
                    }
                }
            });
        }
        return out;
    }

    if (!b->is_matrix() || b->shape[0] != c) shape_error("matmul", a->shape, b->shape);
    const std::size_t p = b->shape[1];
    auto out = make_tensor({r, p}, std::vector<double>(r * p, 0.0));
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t k = 0; k < c; ++k) {
            const double av = a->values[i * c + k];
            const double* brow = b->values.data() + k * p;
            double* orow = out->values.data() + i * p;
            for (std::size_t j = 0; j < p; ++j) orow[j] += av * brow[j];
        }
    }
    if (track(a) || track(b)) {
        out->requires_grad = true;
        Tape::active()->record([=]() {
            if (out->grad.empty()) return;
            const auto& g = out->grad;
            if (a->requires_grad) {
                auto& ga = a->grad_buffer();
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t k = 0; k < c; ++k) {
                        double acc = 0.0;
                        for (std::size_t j = 0; j < p; ++j)
                            acc += g[i * p + j] * b->values[k * p + j];
                        ga[i * c + k] += acc;
                    }
            }
            if (b->requires_grad) {
                auto& gb = b->grad_buffer();
                for (std::size_t k = 0; k < c; ++k)
                    for (std::size_t j = 0; j < p; ++j) {
                        double acc = 0.0;
                        for (std::size_t i = 0; i < r; ++i)
                            acc += a->values[i * c + k] * g[i * p + j];
                        gb[k * p + j] += acc;
                    }
            }
        });
    }
    return out;
}

TensorPtr concat_lastdim(const TensorPtr& a, const TensorPtr& b) {
    TensorPtr out;
    if (a->is_vector() && b->is_vector()) {
        std::vector<double> v;
        v.reserve(a->numel() + b->numel());
        v.insert(v.end(), a->values.begin(), a->values.end());
        v.insert(v.end(), b->values.begin(), b->values.end());
        out = make_vector(std::move(v));
    } else if (a->is_matrix() && b->is_matrix() && a->shape[0] == b->shape[0]) {
        const std::size_t r = a->shape[0], ca = a->shape[1], cb = b->shape[1];
        auto v = std::vector<double>(r * (ca + cb));
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < ca; ++j) v[i * (ca + cb) + j] = a->values[i * ca + j];
            for (std::size_t j = 0; j < cb; ++j) v[i * (ca + cb) + ca + j] = b->values[i * cb + j];
        }
        out = make_tensor({r, ca + cb}, std::move(v));
    } else {
        shape_error("concat_lastdim", a->shape, b->shape);
    }

    if (track(a) || track(b)) {
        out->requires_grad = true;
        const std::size_t r = a->is_matrix() ? a->shape[0] : 1;
        const std::size_t ca = a->cols(), cb = b->cols();
        Tape::active()->record([=]() {
            if (out->grad.empty()) return;
            const auto& g = out->grad;
            if (a->requires_grad) {
                auto& ga = a->grad_buffer();
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < ca; ++j) ga[i * ca + j] += g[i * (ca + cb) + j];
            }
            if (b->requires_grad) {
                auto& gb = b->grad_buffer();
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < cb; ++j)
                        gb[i * cb + j] += g[i * (ca + cb) + ca + j];
            }
        });
    }
    return out;
}

TensorPtr slice(const TensorPtr& x, std::size_t start, std::size_t stop) {
    const std::size_t c = x->cols();
    if (start >= stop || stop > c) {
        throw std::invalid_argument("slice: range [" + std::to_string(start) + ", " +
                                    std::to_string(stop) + ") invalid for shape " +
                                    shape_str(x->shape));
    }
    const std::size_t r = x->is_matrix() ? x->shape[0] : 1;
    const std::size_t w = stop - start;
    std::vector<double> v(r * w);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < w; ++j) v[i * w + j] = x->values[i * c + start + j];
    TensorPtr out = x->is_matrix() ? make_tensor({r, w}, std::move(v)) : make_vector(std::move(v));

    if (track(x)) {
        out->requires_grad = true;
        Tape::active()->record([=]() {
            if (out->grad.empty()) return;
            auto& gx = x->grad_buffer();
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < w; ++j) gx[i * c + start + j] += out->grad[i * w + j];
        });
    }
    return out;
}

TensorPtr sum(const TensorPtr& x) {
    double acc = 0.0;
    for (double v : x->values) acc += v;
    auto out = make_scalar(acc);
    if (track(x)) {
        out->requires_grad = true;
        Tape::active()->record([=]() {
            if (out->grad.empty()) return;
            auto& gx = x->grad_buffer();
            for (double& g : gx) g += out->grad[0];
        });
    }
    return out;
}

TensorPtr mean(const TensorPtr& x) {
    const double inv = 1.0 / static_cast<double>(x->numel());
    double acc = 0.0;
    for (double v : x->values) acc += v;
    auto out = make_scalar(acc * inv);
    if (track(x)) {
        out->requires_grad = true;
        Tape::active()->record([=]() {
            if (out->grad.empty()) return;
            auto& gx = x->grad_buffer();
            for (double& g : gx) g += out->grad[0] * inv;
        });
    }
    return out;
}

TensorPtr exp(const TensorPtr& x) {
    return unary_op(
        x, [](double v) { return std::exp(v); }, [](double, double out) { return out; });
}

TensorPtr log(const TensorPtr& x) {
    for (double v : x->values) {
        if (!(v > 0.0)) {
            throw std::domain_error("log: input must be strictly positive, got " +
                                    std::to_string(v));
        }
    }
    return unary_op(
        x, [](double v) { return std::log(v); }, [](double in, double) { return 1.0 / in; });
}

TensorPtr tanh(const TensorPtr& x) {
    return unary_op(
        x, [](double v) { return std::tanh(v); },
        [](double, double out) { return 1.0 - out * out; });
}

TensorPtr sigmoid(const TensorPtr& x) {
    return unary_op(
        x, [](double v) { return stable_sigmoid(v); },
        [](double, double out) { return out * (1.0 - out); });
}

TensorPtr softplus(const TensorPtr& x) {
    return unary_op(
        x, [](double v) { return stable_softplus(v); },
        [](double in, double) { return stable_sigmoid(in); });
}

TensorPtr square(const TensorPtr& x) {
    return unary_op(
        x, [](double v) { return v * v; }, [](double in, double) { return 2.0 * in; });
}

TensorPtr negate(const TensorPtr& x) {
    return unary_op(
        x, [](double v) { return -v; }, [](double, double) { return -1.0; });
}

TensorPtr scalar_mul(const TensorPtr& x, double c) {
    return unary_op(
        x, [c](double v) { return c * v; }, [c](double, double) { return c; });
}

TensorPtr reshape(const TensorPtr& x, std::vector<std::size_t> shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    if (shape.empty() || n != x->numel()) {
        throw std::invalid_argument("reshape: cannot view " + shape_str(x->shape) + " as " +
                                    shape_str(shape));
    }
    auto out = make_tensor(std::move(shape), x->values);
    if (track(x)) {
        out->requires_grad = true;
        Tape::active()->record([=]() {
            if (out->grad.empty()) return;
            accumulate(*x, out->grad);
        });
    }
    return out;
}

double grad_check(const std::function<TensorPtr(const TensorPtr&)>& fn,
                  const std::vector<double>& point, double step) {
    if (!(step > 0.0) || step > 1e-2) {
        throw std::invalid_argument("grad_check: step must lie in (0, 1e-2]");
    }

    std::vector<double> analytic;
    {
        Tape tape;
        auto leaf = make_vector(point, true);
        auto y = fn(leaf);
        if (!y || y->numel() != 1) {
            throw std::invalid_argument("grad_check: fn must return a scalar");
        }
        tape.backward(y);
        analytic = leaf->grad_buffer();
    }

    auto probe = [&](const std::vector<double>& p) {
        auto leaf = make_vector(p, false);
        auto y = fn(leaf);
        const double v = y->values[0];
        if (!std::isfinite(v)) {
            throw std::runtime_error("grad_check: fn returned a non-finite value while probing");
        }
        return v;
    };

    double worst = 0.0;
    std::vector<double> p = point;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double saved = p[i];
        p[i] = saved + step;
        const double fp = probe(p);
        p[i] = saved - step;
        const double fm = probe(p);
        p[i] = saved;
        const double numeric = (fp - fm) / (2.0 * step);
        const double denom = std::max({std::fabs(analytic[i]), std::fabs(numeric), 1e-8});
        worst = std::max(worst, std::fabs(analytic[i] - numeric) / denom);
    }
    return worst;
}

}  // namespace sisvae::ad
