#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace sisvae::ad {

// Dense fp64 tensor. Gradients live next to the values and accumulate
// additively; `grad` stays empty until a backward pass first touches it.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> values;
    bool requires_grad = false;
    std::vector<double> grad;

    std::size_t numel() const { return values.size(); }
    bool is_scalar() const { return values.size() == 1; }
    bool is_vector() const { return shape.size() == 1; }
    bool is_matrix() const { return shape.size() == 2; }
    std::size_t rows() const { return shape.size() == 2 ? shape[0] : 1; }
    std::size_t cols() const { return shape.empty() ? 1 : shape.back(); }

    bool has_grad() const { return !grad.empty(); }
    std::vector<double>& grad_buffer() {
        if (grad.empty()) grad.assign(values.size(), 0.0);
        return grad;
    }
    void clear_grad() { grad.clear(); }
};

using TensorPtr = std::shared_ptr<Tensor>;

std::string shape_str(const std::vector<std::size_t>& shape);

TensorPtr make_tensor(std::vector<std::size_t> shape, std::vector<double> values,
                      bool requires_grad = false);
TensorPtr make_vector(std::vector<double> values, bool requires_grad = false);
TensorPtr make_scalar(double value, bool requires_grad = false);
TensorPtr zeros(std::vector<std::size_t> shape, bool requires_grad = false);

// Define-by-run tape. Constructing a Tape makes it the active tape for the
// current thread; ops record themselves on it whenever an input tracks
// gradients. Destroying (or clearing) the tape drops the recorded closures
// and every intermediate they keep alive. A tape is confined to the thread
// that built it; independent tapes on other threads do not interact.
class Tape {
public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* active();

    void record(std::function<void()> step);

    // Seeds d(root)/d(root) = 1 and replays the recorded steps in exact
    // reverse execution order, accumulating into each tensor's grad.
    void backward(const TensorPtr& root);

    void clear();
    std::size_t num_records() const { return steps_.size(); }
    bool consumed() const { return consumed_; }

private:
    std::vector<std::function<void()>> steps_;
    bool consumed_ = false;
    Tape* prev_ = nullptr;
};

// Elementwise binary ops. Operands must have equal shapes, or one side is a
// scalar (numel 1), or the left is a matrix and the right a vector matching
// its column count (broadcast per row).
TensorPtr add(const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(const TensorPtr& a, const TensorPtr& b);

// matmul: (R x C) * (C) -> (R), or (R x C) * (C x P) -> (R x P)
TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);

// Concatenation / slicing along the last dimension.
TensorPtr concat_lastdim(const TensorPtr& a, const TensorPtr& b);
TensorPtr slice(const TensorPtr& x, std::size_t start, std::size_t stop);

// Full reductions to a scalar.
TensorPtr sum(const TensorPtr& x);
TensorPtr mean(const TensorPtr& x);

// Elementwise unaries. log requires strictly positive inputs; exp expects
// arguments below ~709 (the fp64 overflow edge).
TensorPtr exp(const TensorPtr& x);
TensorPtr log(const TensorPtr& x);
TensorPtr tanh(const TensorPtr& x);
TensorPtr sigmoid(const TensorPtr& x);
TensorPtr softplus(const TensorPtr& x);
TensorPtr square(const TensorPtr& x);
TensorPtr negate(const TensorPtr& x);
TensorPtr scalar_mul(const TensorPtr& x, double c);

// View with identical values under a new shape of the same size.
TensorPtr reshape(const TensorPtr& x, std::vector<std::size_t> shape);

inline TensorPtr operator+(const TensorPtr& a, const TensorPtr& b) { return add(a, b); }
inline TensorPtr operator-(const TensorPtr& a, const TensorPtr& b) { return sub(a, b); }
inline TensorPtr operator*(const TensorPtr& a, const TensorPtr& b) { return mul(a, b); }
inline TensorPtr operator*(double c, const TensorPtr& x) { return scalar_mul(x, c); }
inline TensorPtr operator-(const TensorPtr& x) { return negate(x); }

// Compares the autodiff gradient of fn at `point` against central finite
// differences with the given step. fn receives a flat leaf vector and must
// return a scalar. Returns the max over coordinates of
// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
double grad_check(const std::function<TensorPtr(const TensorPtr&)>& fn,
                  const std::vector<double>& point, double step);

}  // namespace sisvae::ad
