#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace matte {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major double-precision tensor. A Tensor is a cheap handle to
/// shared storage; values are treated as immutable once an operation has
/// produced them, so handles may be shared freely across threads. Gradient
/// buffers live in the same storage and are filled in by Tape::backward.
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return storage_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t numel() const;
    bool requires_grad() const;

    const std::vector<double>& values() const;
    double item() const;  // requires numel() == 1

    /// In-place access for leaf initialization and optimizer updates.
    /// Never call on a tensor that already participates in a live tape.
    std::vector<double>& mutable_values() const;

    bool has_grad() const;
    std::vector<double>& grad() const;  // lazily allocated, zero-filled
    void zero_grad() const;
    void accumulate_grad(std::span<const double> g) const;

    bool same_storage(const Tensor& other) const { return storage_ == other.storage_; }

private:
    struct Storage {
        Shape shape;
        std::size_t numel = 0;
        std::vector<double> values;
        std::vector<double> grad;  // empty until first touched
        bool requires_grad = false;
    };
    std::shared_ptr<Storage> storage_;
};

/// Define-by-run record of executed differentiable operations. backward()
/// replays the records in exact reverse execution order. One tape must only
/// be driven from a single thread; independent tapes are independent.
class Tape {
public:
    using BackwardFn = std::function<void()>;

    void record(BackwardFn fn) { records_.push_back(std::move(fn)); }
    std::size_t size() const { return records_.size(); }
    void clear() { records_.clear(); }

    /// Seeds d(output)/d(output) = 1 and propagates to every recorded input.
    /// `output` must be scalar (numel == 1).
    void backward(const Tensor& output);

private:
    std::vector<BackwardFn> records_;
};

enum class DropoutMode { Train, Eval };

// ---- differentiable operations -------------------------------------------
// Every op validates shapes, rejects non-finite results with
// std::domain_error, and records its backward pass on the tape whenever any
// input requires gradients.

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& x, double s);
Tensor relu(Tape& tape, const Tensor& x);
Tensor leaky_relu(Tape& tape, const Tensor& x, double negative_slope = 0.01);
Tensor abs_value(Tape& tape, const Tensor& x);
Tensor square(Tape& tape, const Tensor& x);
Tensor sum(Tape& tape, const Tensor& x);
Tensor mean(Tape& tape, const Tensor& x);
Tensor reshape(Tape& tape, const Tensor& x, Shape new_shape);
Tensor transpose(Tape& tape, const Tensor& x);  // [M,N] -> [N,M]
Tensor concat_channels(Tape& tape, const std::vector<Tensor>& parts);  // [c,H,W] along c
Tensor upsample_nearest2x(Tape& tape, const Tensor& x);
Tensor upsample_bilinear2x(Tape& tape, const Tensor& x);
Tensor avg_pool2x(Tape& tape, const Tensor& x);
Tensor max_pool2x(Tape& tape, const Tensor& x);

/// Cross-correlation (no kernel flip). input [C_in,H,W], weight
/// [C_out,C_in,kh,kw], optional bias [C_out].
Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& weight,
              const std::optional<Tensor>& bias, std::size_t stride, std::size_t padding);

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);

/// Row-stabilized softmax over the last axis of a [M,N] tensor.
Tensor row_softmax(Tape& tape, const Tensor& logits);

/// Multiplies row i of a [M,N] tensor by weights[i] (constant weights).
Tensor row_scale(Tape& tape, const Tensor& x, const std::vector<double>& weights);

/// Inverted dropout: train mode zeroes elements with probability `rate` and
/// scales survivors by 1/(1-rate); eval mode is the identity. Deterministic
/// under `seed`.
Tensor dropout(Tape& tape, const Tensor& x, double rate, DropoutMode mode, std::uint64_t seed);

// ---- gradient checking ----------------------------------------------------

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t worst_input = 0;
    std::size_t worst_coord = 0;
    double analytic_at_worst = 0.0;
    double numeric_at_worst = 0.0;
    std::size_t coords_checked = 0;
};

/// Compares tape gradients of the scalar function `f` against central
/// differences (f(x+h)-f(x-h))/2h per coordinate. Relative error uses the
/// denominator max(|analytic|, |numeric|, 1e-8).
GradCheckReport gradcheck(
    const std::function<Tensor(Tape&, const std::vector<Tensor>&)>& f,
    const std::vector<Tensor>& inputs, double h = 1e-6);

Tensor tensor_from_values(const Shape& shape, std::span<const double> values,
                          bool requires_grad = false);

}  // namespace matte
