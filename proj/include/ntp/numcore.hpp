#pragma once

// Dense float64 arrays and a tape-free reverse-mode autodiff graph.
//
// Every op takes `Var` handles by const reference and returns a fresh node;
// inputs are never mutated. A node records its parents and a backward
// closure only when at least one input requires a gradient, so inference
// builds no graph.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ntp/errors.hpp"

namespace ntp {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

class Array {
public:
    Array() = default;
    explicit Array(Shape shape, double fill = 0.0);
    Array(Shape shape, std::vector<double> data);

    static Array scalar(double v) { return Array({1}, {v}); }
    static Array vector(std::vector<double> v);
    static Array matrix(std::initializer_list<std::initializer_list<double>> rows);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const noexcept { return data_.size(); }
    /// Size of the last dimension.
    std::size_t cols() const { return shape_.empty() ? 0 : shape_.back(); }
    /// Product of all but the last dimension.
    std::size_t rows() const { return cols() == 0 ? 0 : data_.size() / cols(); }

    std::span<const double> data() const noexcept { return data_; }
    std::span<double> data() noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
    double item() const;

    Array reshaped(Shape s) const;
    bool all_finite() const noexcept;

    friend bool operator==(const Array& a, const Array& b) = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    Array value;
    Array grad;
    bool requires_grad = false;
    std::vector<Var> parents;
    std::function<void(Node&)> backward_fn;

    /// Accumulates `g` into grad, allocating zeros on first use.
    void accumulate(std::span<const double> g);
    Array& grad_buffer();
};

/// Leaf that participates in differentiation (a parameter).
Var param(Array value);
/// Leaf constant; receives no gradient.
Var constant(Array value);

/// Reverse pass from a scalar root. Gradients accumulate additively into
/// every reachable node that requires them.
void backward(const Var& root);

/// Clears grad on each node in `params`.
void zero_grad(std::span<const Var> params);

// ---- linear algebra ----

Var matmul(const Var& a, const Var& b);
/// a · bᵀ for 2-D a (M×K) and b (N×K).
Var matmul_nt(const Var& a, const Var& b);
/// Batched a[i] · b[i] for 3-D a (B×M×K) and b (B×K×N).
Var bmm(const Var& a, const Var& b);
/// Batched a[i] · b[i]ᵀ for 3-D a (B×M×K) and b (B×N×K).
Var bmm_nt(const Var& a, const Var& b);

// ---- elementwise ----

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var relu(const Var& a);
Var sin(const Var& a);
Var cos(const Var& a);
/// x + bias broadcast over rows; bias has length cols(x).
Var add_rowwise(const Var& x, const Var& bias);
/// x + rows of `table` repeated with period `period`: row r of x gets table
/// row (r mod period). Used for positional embeddings.
Var add_periodic_rows(const Var& x, const Var& table, std::size_t period);

// ---- reductions and losses ----

Var sum(const Var& a);
Var mean(const Var& a);
/// Mean of squared differences over entries where mask != 0. Masked-out
/// entries never touch the result or its gradient. Returns 0 when the mask
/// is empty.
Var masked_mse(const Var& pred, const Array& target, const Array& mask);

// ---- normalisation ----

inline constexpr double kLayerNormEps = 1e-5;
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = kLayerNormEps);
Var softmax_lastdim(const Var& x);
/// Softmax over the last dim of a (…×S×S) array where entry (i, j) with
/// j > i is excluded (probability exactly 0).
Var causal_softmax(const Var& x);

// ---- reindexing ----

/// (batch·seq)×d → (batch·heads)×seq×(d/heads)
Var split_heads(const Var& x, std::size_t batch, std::size_t seq, std::size_t heads);
/// Inverse of split_heads.
Var merge_heads(const Var& x, std::size_t batch, std::size_t seq, std::size_t heads);
Var concat_cols(const Var& a, const Var& b);
Var slice_cols(const Var& x, std::size_t start, std::size_t len);
/// Rows start, start+step, … of a 2-D array.
Var strided_rows(const Var& x, std::size_t start, std::size_t step);
/// Interleaves rows a0, b0, a1, b1, … ; a and b must have equal shape.
Var interleave_rows(const Var& a, const Var& b);
/// Row r is `replacement` where flags[r] is set, base row r otherwise.
Var substitute_rows(const Var& base, const Var& replacement, const std::vector<bool>& flags);

} // namespace ntp
