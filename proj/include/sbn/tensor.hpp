#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sbn/errors.hpp"

namespace sbn {

using Shape = std::vector<std::size_t>;
using Axes = std::vector<std::size_t>;
using Array = Eigen::ArrayXd;

std::size_t shape_size(const Shape& s);
std::string shape_str(const Shape& s);

namespace detail {

struct Node {
    Shape shape;
    Array value;
    Array grad;  // empty until backward reaches this node
    bool requires_grad = false;
    bool leaf = true;
    bool loss_consumed = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;
};

}  // namespace detail

/// Dense tensor with row-major 64-bit storage and reverse-mode autodiff.
///
/// A Tensor is a cheap handle onto a graph node; values are immutable after
/// construction. Graph-building free functions (add, mul, reduce_moments,
/// linear, ...) return new tensors wired to their inputs; backward() walks
/// the graph once and attaches gradients to every requires_grad leaf.
/// Tensors are safe to share read-only across threads; a graph must stay on
/// the thread that built it until backward completes.
class Tensor {
public:
    Tensor() = default;

    static Tensor constant(Shape shape, double fill = 0.0);
    static Tensor constant(Shape shape, Array values);
    static Tensor constant(Shape shape, std::initializer_list<double> values);
    static Tensor leaf(Shape shape, Array values, bool requires_grad = true);
    static Tensor leaf(Shape shape, std::initializer_list<double> values,
                       bool requires_grad = true);
    static Tensor scalar(double v);

    bool valid() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t ndim() const { return shape().size(); }
    std::size_t size() const;
    const Array& values() const;
    double value_at(std::size_t flat) const;
    double scalar_value() const;

    bool requires_grad() const;
    bool is_leaf() const;
    bool has_grad() const;
    /// Gradient accumulated by the most recent backward() reaching this leaf.
    Tensor grad() const;
    /// Same values, detached from the graph (constant).
    Tensor detach() const;

    bool all_finite() const;

    const detail::Node* node() const { return node_.get(); }

private:
    explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
    std::shared_ptr<detail::Node> node_;

    friend std::shared_ptr<detail::Node> node_of(const Tensor& t);
    friend Tensor wrap_node(std::shared_ptr<detail::Node> n);
};

enum class EwKind { Add, Sub, Mul, Div };

/// Elementwise binary op. b must match a's rank with every extent equal to
/// a's or 1 (extent-1 axes stretch). The result always has a's shape.
Tensor ew_binary(const Tensor& a, const Tensor& b, EwKind kind, double div_guard = 0.0);

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b);
Tensor operator/(const Tensor& a, const Tensor& b);

// elementwise with a scalar constant
Tensor scale(const Tensor& x, double c);
Tensor shift(const Tensor& x, double c);
Tensor neg(const Tensor& x);

Tensor sqrt(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);
/// Elementwise min(x, 0); the hinge building block.
Tensor min_zero(const Tensor& x);
Tensor square(const Tensor& x);

Tensor reshape(const Tensor& x, Shape target);

/// Sum over the given axes, keeping reduced axes as extent 1.
Tensor reduce_sum(const Tensor& x, const Axes& axes);
Tensor reduce_mean(const Tensor& x, const Axes& axes);
/// Mean and biased variance over the given axes (reduced axes kept as 1).
std::pair<Tensor, Tensor> reduce_moments(const Tensor& x, const Axes& axes);
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

/// (N,D) x (D,M) -> (N,M)
Tensor matmul(const Tensor& a, const Tensor& b);
/// x(N,D_in) * w(D_in,D_out) + b(D_out)
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
/// Per-position channel mix: x(N,C,H,W), w(C,C'), b(C') -> (N,C',H,W).
Tensor channel_linear(const Tensor& x, const Tensor& w, const Tensor& b);

/// Softmax over a rank-1 tensor.
Tensor softmax(const Tensor& logits);
/// Mean softmax cross-entropy of logits (N,K) against integer labels.
Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels);

/// Scalar tensor holding x[flat_index]; gradient scatters back.
Tensor element(const Tensor& x, std::size_t flat_index);
/// x scaled by a scalar tensor (both differentiable).
Tensor scale_by(const Tensor& x, const Tensor& s);

/// Leaf gradients of one backward pass, keyed by leaf identity.
class GradientMap {
public:
    bool contains(const Tensor& leaf) const;
    Tensor at(const Tensor& leaf) const;
    std::size_t size() const { return grads_.size(); }

private:
    std::unordered_map<const detail::Node*, Tensor> grads_;
    friend GradientMap backward(const Tensor& loss);
};

/// Reverse pass from a one-element loss. Every reachable requires_grad leaf
/// receives its total derivative; calling twice on the same loss throws
/// AlreadyConsumed.
GradientMap backward(const Tensor& loss);

/// Central-difference gradient of a deterministic scalar function.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                        double h);

/// Throws NonFiniteValue if any element is NaN or infinite.
void check_finite(const Tensor& t, const char* what = "tensor");

/// New leaf param - lr * grad (plain SGD; inputs untouched).
Tensor sgd_step(const Tensor& param, const Tensor& grad, double lr);

}  // namespace sbn
