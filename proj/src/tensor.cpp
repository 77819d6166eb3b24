#include "sbn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>
#include <unordered_set>

namespace sbn {

using detail::Node;

std::size_t shape_size(const Shape& s) {
    std::size_t n = 1;
    for (auto e : s) n *= e;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

namespace {

constexpr std::size_t kMaxRank = 4;

void validate_shape(const Shape& s) {
    if (s.empty() || s.size() > kMaxRank)
        throw InvalidShape("rank must be 1.." + std::to_string(kMaxRank) + ", got " +
                           shape_str(s));
    for (auto e : s)
        if (e == 0) throw InvalidShape("zero extent in " + shape_str(s));
}

std::vector<std::size_t> natural_strides(const Shape& s) {
    std::vector<std::size_t> st(s.size());
    std::size_t acc = 1;
    for (std::size_t i = s.size(); i-- > 0;) {
        st[i] = acc;
        acc *= s[i];
    }
    return st;
}

// Row-major walk over `full`, with `small` broadcast against it (extent-1
// axes of `small` stretch). Calls f(full_flat, small_flat).
template <class F>
void for_each_broadcast(const Shape& full, const Shape& small, F&& f) {
    const std::size_t nd = full.size();
    auto nat = natural_strides(small);
    std::vector<std::size_t> bstride(nd);
    for (std::size_t i = 0; i < nd; ++i) bstride[i] = (small[i] == 1 ? 0 : nat[i]);
    std::vector<std::size_t> idx(nd, 0);
    const std::size_t total = shape_size(full);
    std::size_t boff = 0;
    for (std::size_t flat = 0; flat < total; ++flat) {
        f(flat, boff);
        for (std::size_t ax = nd; ax-- > 0;) {
            ++idx[ax];
            boff += bstride[ax];
            if (idx[ax] < full[ax]) break;
            boff -= bstride[ax] * full[ax];
            idx[ax] = 0;
        }
    }
}

bool broadcastable_to(const Shape& b, const Shape& a) {
    if (b.size() != a.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (b[i] != a[i] && b[i] != 1) return false;
    return true;
}

std::shared_ptr<Node> make_leaf_node(Shape shape, Array values, bool requires_grad) {
    validate_shape(shape);
    if (static_cast<std::size_t>(values.size()) != shape_size(shape))
        throw InvalidShape("data length " + std::to_string(values.size()) +
                           " does not match " + shape_str(shape));
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    n->leaf = true;
    return n;
}

Array& grad_buffer(Node& n) {
    if (n.grad.size() == 0) n.grad = Array::Zero(n.value.size());
    return n.grad;
}

}  // namespace

std::shared_ptr<Node> node_of(const Tensor& t) {
    if (!t.valid()) throw InvalidArgument("empty tensor handle");
    return t.node_;
}

Tensor wrap_node(std::shared_ptr<Node> n) { return Tensor(std::move(n)); }

namespace {

Tensor make_op(const char* op, Shape shape, Array value,
               std::vector<std::shared_ptr<Node>> parents,
               std::function<void(Node&)> backprop) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->leaf = false;
    n->op = op;
    n->requires_grad = false;
    for (const auto& p : parents) n->requires_grad = n->requires_grad || p->requires_grad;
    n->parents = std::move(parents);
    if (n->requires_grad) n->backprop = std::move(backprop);
    return wrap_node(std::move(n));
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor handle

Tensor Tensor::constant(Shape shape, double fill) {
    validate_shape(shape);
    return wrap_node(make_leaf_node(shape, Array::Constant(shape_size(shape), fill), false));
}

Tensor Tensor::constant(Shape shape, Array values) {
    return wrap_node(make_leaf_node(std::move(shape), std::move(values), false));
}

Tensor Tensor::constant(Shape shape, std::initializer_list<double> values) {
    Array a(values.size());
    std::size_t i = 0;
    for (double v : values) a[i++] = v;
    return wrap_node(make_leaf_node(std::move(shape), std::move(a), false));
}

Tensor Tensor::leaf(Shape shape, Array values, bool requires_grad) {
    return wrap_node(make_leaf_node(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::leaf(Shape shape, std::initializer_list<double> values, bool requires_grad) {
    Array a(values.size());
    std::size_t i = 0;
    for (double v : values) a[i++] = v;
    return wrap_node(make_leaf_node(std::move(shape), std::move(a), requires_grad));
}

Tensor Tensor::scalar(double v) { return constant({1}, Array::Constant(1, v)); }

const Shape& Tensor::shape() const {
    if (!node_) throw InvalidArgument("empty tensor handle");
    return node_->shape;
}

std::size_t Tensor::size() const { return shape_size(shape()); }

const Array& Tensor::values() const {
    if (!node_) throw InvalidArgument("empty tensor handle");
    return node_->value;
}

double Tensor::value_at(std::size_t flat) const {
    if (flat >= size()) throw IndexOutOfRange("flat index " + std::to_string(flat));
    return node_->value[static_cast<Eigen::Index>(flat)];
}

double Tensor::scalar_value() const {
    if (size() != 1) throw InvalidArgument("scalar_value on tensor " + shape_str(shape()));
    return node_->value[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
bool Tensor::is_leaf() const { return node_ && node_->leaf; }
bool Tensor::has_grad() const { return node_ && node_->grad.size() > 0; }

Tensor Tensor::grad() const {
    if (!has_grad())
        throw GradientUnavailable("no gradient attached; run backward() first");
    return constant(node_->shape, node_->grad);
}

Tensor Tensor::detach() const {
    if (!node_) throw InvalidArgument("empty tensor handle");
    return constant(node_->shape, node_->value);
}

bool Tensor::all_finite() const { return values().isFinite().all(); }

void check_finite(const Tensor& t, const char* what) {
    if (!t.all_finite()) throw NonFiniteValue(std::string(what) + " contains NaN or Inf");
}

// ---------------------------------------------------------------------------
// Elementwise binary

Tensor ew_binary(const Tensor& a, const Tensor& b, EwKind kind, double div_guard) {
    const Shape& as = a.shape();
    const Shape& bs = b.shape();
    if (!broadcastable_to(bs, as))
        throw ShapeMismatch("cannot broadcast " + shape_str(bs) + " to " + shape_str(as));
    if (kind == EwKind::Div) {
        const Array& bv = b.values();
        for (Eigen::Index i = 0; i < bv.size(); ++i) {
            double v = bv[i];
            if (v == 0.0 || std::abs(v) < div_guard)
                throw DivisionDomain("divisor magnitude below guard at element " +
                                     std::to_string(i));
        }
    }

    const Array& av = a.values();
    const Array& bv = b.values();
    Array out(av.size());
    auto apply = [&](auto f) {
        if (as == bs) {
            for (Eigen::Index i = 0; i < av.size(); ++i) out[i] = f(av[i], bv[i]);
        } else {
            for_each_broadcast(as, bs, [&](std::size_t fa, std::size_t fb) {
                out[static_cast<Eigen::Index>(fa)] =
                    f(av[static_cast<Eigen::Index>(fa)], bv[static_cast<Eigen::Index>(fb)]);
            });
        }
    };
    switch (kind) {
        case EwKind::Add: apply([](double x, double y) { return x + y; }); break;
        case EwKind::Sub: apply([](double x, double y) { return x - y; }); break;
        case EwKind::Mul: apply([](double x, double y) { return x * y; }); break;
        case EwKind::Div: apply([](double x, double y) { return x / y; }); break;
    }

    const char* name = kind == EwKind::Add   ? "add"
                       : kind == EwKind::Sub ? "sub"
                       : kind == EwKind::Mul ? "mul"
                                             : "div";
    return make_op(name, as, std::move(out), {node_of(a), node_of(b)}, [kind](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        const Array& g = self.grad;
        const Array& av = pa.value;
        const Array& bv = pb.value;
        const Shape& as = pa.shape;
        const Shape& bs = pb.shape;

        auto push = [&](auto da, auto db) {
            Array* ga = pa.requires_grad ? &grad_buffer(pa) : nullptr;
            Array* gb = pb.requires_grad ? &grad_buffer(pb) : nullptr;
            for_each_broadcast(as, bs, [&](std::size_t fa, std::size_t fb) {
                auto ia = static_cast<Eigen::Index>(fa);
                auto ib = static_cast<Eigen::Index>(fb);
                if (ga) (*ga)[ia] += da(g[ia], av[ia], bv[ib]);
                if (gb) (*gb)[ib] += db(g[ia], av[ia], bv[ib]);
            });
        };
        switch (kind) {
            case EwKind::Add:
                push([](double g, double, double) { return g; },
                     [](double g, double, double) { return g; });
                break;
            case EwKind::Sub:
                push([](double g, double, double) { return g; },
                     [](double g, double, double) { return -g; });
                break;
            case EwKind::Mul:
                push([](double g, double, double y) { return g * y; },
                     [](double g, double x, double) { return g * x; });
                break;
            case EwKind::Div:
                push([](double g, double, double y) { return g / y; },
                     [](double g, double x, double y) { return -g * x / (y * y); });
                break;
        }
    });
}

Tensor operator+(const Tensor& a, const Tensor& b) { return ew_binary(a, b, EwKind::Add); }
Tensor operator-(const Tensor& a, const Tensor& b) { return ew_binary(a, b, EwKind::Sub); }
Tensor operator*(const Tensor& a, const Tensor& b) { return ew_binary(a, b, EwKind::Mul); }
Tensor operator/(const Tensor& a, const Tensor& b) { return ew_binary(a, b, EwKind::Div); }

// ---------------------------------------------------------------------------
// Elementwise unary

namespace {

template <class Fwd, class Bwd>
Tensor unary_op(const char* name, const Tensor& x, Fwd fwd, Bwd bwd) {
    Array out = fwd(x.values());
    return make_op(name, x.shape(), std::move(out), {node_of(x)}, [bwd](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        grad_buffer(p) += bwd(self.grad, p.value, self.value);
    });
}

}  // namespace

Tensor scale(const Tensor& x, double c) {
    return unary_op(
        "scale", x, [c](const Array& v) { return Array(v * c); },
        [c](const Array& g, const Array&, const Array&) { return Array(g * c); });
}

Tensor shift(const Tensor& x, double c) {
    return unary_op(
        "shift", x, [c](const Array& v) { return Array(v + c); },
        [](const Array& g, const Array&, const Array&) { return g; });
}

Tensor neg(const Tensor& x) { return scale(x, -1.0); }

Tensor sqrt(const Tensor& x) {
    return unary_op(
        "sqrt", x, [](const Array& v) { return Array(v.sqrt()); },
        [](const Array& g, const Array&, const Array& out) {
            return Array(g * 0.5 / out);
        });
}

Tensor exp(const Tensor& x) {
    return unary_op(
        "exp", x, [](const Array& v) { return Array(v.exp()); },
        [](const Array& g, const Array&, const Array& out) { return Array(g * out); });
}

Tensor log(const Tensor& x) {
    return unary_op(
        "log", x, [](const Array& v) { return Array(v.log()); },
        [](const Array& g, const Array& in, const Array&) { return Array(g / in); });
}

Tensor tanh(const Tensor& x) {
    return unary_op(
        "tanh", x, [](const Array& v) { return Array(v.tanh()); },
        [](const Array& g, const Array&, const Array& out) {
            return Array(g * (1.0 - out.square()));
        });
}

Tensor relu(const Tensor& x) {
    return unary_op(
        "relu", x, [](const Array& v) { return Array(v.max(0.0)); },
        [](const Array& g, const Array& in, const Array&) {
            return Array(g * (in > 0.0).cast<double>());
        });
}

Tensor min_zero(const Tensor& x) {
    return unary_op(
        "min_zero", x, [](const Array& v) { return Array(v.min(0.0)); },
        [](const Array& g, const Array& in, const Array&) {
            return Array(g * (in < 0.0).cast<double>());
        });
}

Tensor square(const Tensor& x) {
    return unary_op(
        "square", x, [](const Array& v) { return Array(v.square()); },
        [](const Array& g, const Array& in, const Array&) { return Array(g * 2.0 * in); });
}

Tensor reshape(const Tensor& x, Shape target) {
    validate_shape(target);
    if (shape_size(target) != x.size())
        throw ShapeMismatch("reshape " + shape_str(x.shape()) + " to " + shape_str(target));
    return make_op("reshape", std::move(target), x.values(), {node_of(x)}, [](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        grad_buffer(p) += self.grad;
    });
}

// ---------------------------------------------------------------------------
// Reductions

namespace {

Shape reduced_shape(const Shape& s, const Axes& axes) {
    if (axes.empty()) throw EmptyAxes("reduction needs at least one axis");
    Shape out = s;
    for (auto ax : axes) {
        if (ax >= s.size())
            throw AxisOutOfRange("axis " + std::to_string(ax) + " for " + shape_str(s));
        out[ax] = 1;
    }
    return out;
}

}  // namespace

Tensor reduce_sum(const Tensor& x, const Axes& axes) {
    Shape os = reduced_shape(x.shape(), axes);
    Array out = Array::Zero(shape_size(os));
    const Array& xv = x.values();
    for_each_broadcast(x.shape(), os, [&](std::size_t fx, std::size_t fo) {
        out[static_cast<Eigen::Index>(fo)] += xv[static_cast<Eigen::Index>(fx)];
    });
    return make_op("reduce_sum", os, std::move(out), {node_of(x)}, [](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        Array& gp = grad_buffer(p);
        const Array& g = self.grad;
        for_each_broadcast(p.shape, self.shape, [&](std::size_t fx, std::size_t fo) {
            gp[static_cast<Eigen::Index>(fx)] += g[static_cast<Eigen::Index>(fo)];
        });
    });
}

Tensor reduce_mean(const Tensor& x, const Axes& axes) {
    Tensor s = reduce_sum(x, axes);
    double count = static_cast<double>(x.size()) / static_cast<double>(s.size());
    return scale(s, 1.0 / count);
}

std::pair<Tensor, Tensor> reduce_moments(const Tensor& x, const Axes& axes) {
    Tensor mean = reduce_mean(x, axes);
    Tensor centered = x - mean;
    Tensor var = reduce_mean(centered * centered, axes);
    return {mean, var};
}

namespace {

Axes all_axes(const Tensor& x) {
    Axes axes(x.ndim());
    for (std::size_t i = 0; i < axes.size(); ++i) axes[i] = i;
    return axes;
}

}  // namespace

Tensor sum_all(const Tensor& x) { return reshape(reduce_sum(x, all_axes(x)), {1}); }
Tensor mean_all(const Tensor& x) { return scale(sum_all(x), 1.0 / static_cast<double>(x.size())); }

// ---------------------------------------------------------------------------
// Linear algebra

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using MapConstMat = Eigen::Map<const RowMat>;

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2)
        throw ShapeMismatch("matmul needs rank-2 operands, got " + shape_str(a.shape()) +
                            " and " + shape_str(b.shape()));
    const auto n = static_cast<Eigen::Index>(a.shape()[0]);
    const auto d = static_cast<Eigen::Index>(a.shape()[1]);
    const auto m = static_cast<Eigen::Index>(b.shape()[1]);
    if (b.shape()[0] != a.shape()[1])
        throw ShapeMismatch("inner extents differ: " + shape_str(a.shape()) + " x " +
                            shape_str(b.shape()));
    MapConstMat A(a.values().data(), n, d);
    MapConstMat B(b.values().data(), d, m);
    RowMat C = A * B;
    Array out = Eigen::Map<Array>(C.data(), n * m);
    return make_op("matmul", {a.shape()[0], b.shape()[1]}, std::move(out),
                   {node_of(a), node_of(b)}, [n, d, m](Node& self) {
                       Node& pa = *self.parents[0];
                       Node& pb = *self.parents[1];
                       MapConstMat A(pa.value.data(), n, d);
                       MapConstMat B(pb.value.data(), d, m);
                       MapConstMat G(self.grad.data(), n, m);
                       if (pa.requires_grad) {
                           MapMat GA(grad_buffer(pa).data(), n, d);
                           GA += G * B.transpose();
                       }
                       if (pb.requires_grad) {
                           MapMat GB(grad_buffer(pb).data(), d, m);
                           GB += A.transpose() * G;
                       }
                   });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (b.ndim() != 1)
        throw ShapeMismatch("bias must be rank 1, got " + shape_str(b.shape()));
    if (w.ndim() != 2 || b.shape()[0] != w.shape()[1])
        throw ShapeMismatch("bias extent does not match weight columns");
    Tensor y = matmul(x, w);
    return y + reshape(b, {1, b.shape()[0]});
}

Tensor channel_linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.ndim() != 4) throw ShapeMismatch("channel_linear input must be rank 4");
    if (w.ndim() != 2 || b.ndim() != 1 || b.shape()[0] != w.shape()[1])
        throw ShapeMismatch("channel_linear weight/bias shapes inconsistent");
    const std::size_t N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    if (w.shape()[0] != C)
        throw ChannelMismatch("weight rows " + std::to_string(w.shape()[0]) +
                              " != channels " + std::to_string(C));
    const std::size_t Cp = w.shape()[1];
    const auto P = static_cast<Eigen::Index>(H * W);

    Array out(N * Cp * H * W);
    MapConstMat Wm(w.values().data(), static_cast<Eigen::Index>(C),
                   static_cast<Eigen::Index>(Cp));
    for (std::size_t nidx = 0; nidx < N; ++nidx) {
        MapConstMat Xn(x.values().data() + nidx * C * H * W, static_cast<Eigen::Index>(C), P);
        MapMat Yn(out.data() + nidx * Cp * H * W, static_cast<Eigen::Index>(Cp), P);
        Yn = Wm.transpose() * Xn;
        for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(Cp); ++c)
            Yn.row(c).array() += b.values()[c];
    }
    return make_op("channel_linear", {N, Cp, H, W}, std::move(out),
                   {node_of(x), node_of(w), node_of(b)}, [N, C, Cp, P](Node& self) {
                       Node& px = *self.parents[0];
                       Node& pw = *self.parents[1];
                       Node& pb = *self.parents[2];
                       MapConstMat Wm(pw.value.data(), static_cast<Eigen::Index>(C),
                                      static_cast<Eigen::Index>(Cp));
                       for (std::size_t nidx = 0; nidx < N; ++nidx) {
                           MapConstMat Gn(self.grad.data() + nidx * Cp * P,
                                          static_cast<Eigen::Index>(Cp), P);
                           MapConstMat Xn(px.value.data() + nidx * C * P,
                                          static_cast<Eigen::Index>(C), P);
                           if (px.requires_grad) {
                               MapMat GX(grad_buffer(px).data() + nidx * C * P,
                                         static_cast<Eigen::Index>(C), P);
                               GX += Wm * Gn;
                           }
                           if (pw.requires_grad) {
                               MapMat GW(grad_buffer(pw).data(), static_cast<Eigen::Index>(C),
                                         static_cast<Eigen::Index>(Cp));
                               GW += Xn * Gn.transpose();
                           }
                           if (pb.requires_grad) {
                               Eigen::Map<Eigen::VectorXd> GB(grad_buffer(pb).data(),
                                                              static_cast<Eigen::Index>(Cp));
                               GB += Gn.rowwise().sum();
                           }
                       }
                   });
}

// ---------------------------------------------------------------------------
// Softmax family

Tensor softmax(const Tensor& logits) {
    if (logits.ndim() != 1)
        throw ShapeMismatch("softmax expects rank 1, got " + shape_str(logits.shape()));
    const Array& v = logits.values();
    Array s = (v - v.maxCoeff()).exp();
    s /= s.sum();
    return make_op("softmax", logits.shape(), std::move(s), {node_of(logits)},
                   [](Node& self) {
                       Node& p = *self.parents[0];
                       if (!p.requires_grad) return;
                       const Array& s = self.value;
                       const Array& g = self.grad;
                       double dot = (g * s).sum();
                       grad_buffer(p) += s * (g - dot);
                   });
}

Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels) {
    if (logits.ndim() != 2)
        throw ShapeMismatch("logits must be rank 2, got " + shape_str(logits.shape()));
    const std::size_t N = logits.shape()[0], K = logits.shape()[1];
    if (labels.empty()) throw EmptyBatch("no labels");
    if (labels.size() != N)
        throw ShapeMismatch("label count " + std::to_string(labels.size()) +
                            " != batch " + std::to_string(N));
    for (auto y : labels)
        if (y >= K) throw LabelOutOfRange("label " + std::to_string(y) + " for K=" +
                                          std::to_string(K));

    const Array& v = logits.values();
    Array probs(N * K);
    double loss = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
        auto row = v.segment(static_cast<Eigen::Index>(n * K), static_cast<Eigen::Index>(K));
        double mx = row.maxCoeff();
        Array e = (row - mx).exp();
        double sum = e.sum();
        probs.segment(static_cast<Eigen::Index>(n * K), static_cast<Eigen::Index>(K)) =
            e / sum;
        double lse = mx + std::log(sum);
        loss += lse - v[static_cast<Eigen::Index>(n * K + labels[n])];
    }
    loss /= static_cast<double>(N);

    return make_op("softmax_ce", {1}, Array::Constant(1, loss), {node_of(logits)},
                   [probs = std::move(probs), labels, N, K](Node& self) {
                       Node& p = *self.parents[0];
                       if (!p.requires_grad) return;
                       Array& gp = grad_buffer(p);
                       const double g = self.grad[0] / static_cast<double>(N);
                       for (std::size_t n = 0; n < N; ++n)
                           for (std::size_t k = 0; k < K; ++k) {
                               auto i = static_cast<Eigen::Index>(n * K + k);
                               gp[i] += g * (probs[i] - (labels[n] == k ? 1.0 : 0.0));
                           }
                   });
}

Tensor element(const Tensor& x, std::size_t flat_index) {
    if (flat_index >= x.size())
        throw IndexOutOfRange("element " + std::to_string(flat_index) + " of " +
                              shape_str(x.shape()));
    Array out = Array::Constant(1, x.values()[static_cast<Eigen::Index>(flat_index)]);
    return make_op("element", {1}, std::move(out), {node_of(x)}, [flat_index](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        grad_buffer(p)[static_cast<Eigen::Index>(flat_index)] += self.grad[0];
    });
}

Tensor scale_by(const Tensor& x, const Tensor& s) {
    if (s.size() != 1)
        throw ShapeMismatch("scale_by factor must have one element, got " +
                            shape_str(s.shape()));
    Array out = x.values() * s.values()[0];
    return make_op("scale_by", x.shape(), std::move(out), {node_of(x), node_of(s)},
                   [](Node& self) {
                       Node& px = *self.parents[0];
                       Node& ps = *self.parents[1];
                       double sv = ps.value[0];
                       if (px.requires_grad) grad_buffer(px) += self.grad * sv;
                       if (ps.requires_grad)
                           grad_buffer(ps)[0] += (self.grad * px.value).sum();
                   });
}

// ---------------------------------------------------------------------------
// Backward

bool GradientMap::contains(const Tensor& leaf) const {
    return grads_.count(leaf.node()) > 0;
}

Tensor GradientMap::at(const Tensor& leaf) const {
    auto it = grads_.find(leaf.node());
    if (it == grads_.end())
        throw GradientUnavailable("tensor is not a requires_grad leaf of this graph");
    return it->second;
}

GradientMap backward(const Tensor& loss) {
    if (!loss.valid()) throw InvalidArgument("empty tensor handle");
    if (loss.size() != 1)
        throw NonScalarLoss("loss has " + std::to_string(loss.size()) + " elements");
    auto root = node_of(loss);
    if (root->loss_consumed)
        throw AlreadyConsumed("backward already ran for this loss");
    root->loss_consumed = true;

    // iterative postorder: parents appear before their consumers
    std::vector<Node*> order;
    std::unordered_set<const Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [n, ci] = stack.back();
        if (ci < n->parents.size()) {
            Node* p = n->parents[ci++].get();
            if (visited.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    for (Node* n : order) n->grad.resize(0);
    root->grad = Array::Constant(1, 1.0);

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (!n->requires_grad || n->grad.size() == 0) continue;
        if (n->backprop) n->backprop(*n);
    }

    GradientMap gm;
    for (Node* n : order) {
        if (!n->leaf || !n->requires_grad) continue;
        grad_buffer(*n);
        gm.grads_.emplace(n, Tensor::constant(n->shape, n->grad));
    }
    return gm;
}

// ---------------------------------------------------------------------------
// Finite differences

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                        double h) {
    if (!(h > 0.0)) throw InvalidArgument("finite_diff_grad: step must be positive");
    const Tensor base = x.detach();
    double f0 = f(base);
    double f1 = f(base);
    if (std::memcmp(&f0, &f1, sizeof(double)) != 0)
        throw NonDeterministicFunction("two evaluations at the same point disagree");

    Array g(x.size());
    Array work = x.values();
    for (Eigen::Index i = 0; i < work.size(); ++i) {
        double orig = work[i];
        work[i] = orig + h;
        double fp = f(Tensor::constant(x.shape(), work));
        work[i] = orig - h;
        double fm = f(Tensor::constant(x.shape(), work));
        work[i] = orig;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return Tensor::constant(x.shape(), std::move(g));
}

Tensor sgd_step(const Tensor& param, const Tensor& grad, double lr) {
    if (param.shape() != grad.shape())
        throw ShapeMismatch("sgd_step: gradient shape " + shape_str(grad.shape()) +
                            " != parameter shape " + shape_str(param.shape()));
    if (lr == 0.0) return param;
    return Tensor::leaf(param.shape(), param.values() - lr * grad.values(),
                        param.requires_grad());
}

}  // namespace sbn
