#include "sbn/supernet.hpp"

#include <cmath>

namespace sbn {

const char* norm_variant_name(NormVariant v) {
    switch (v) {
        case NormVariant::NoneAffine: return "none-affine";
        case NormVariant::Affine: return "affine";
        case NormVariant::Ccbn: return "ccbn";
        case NormVariant::Sabn: return "sabn";
    }
    return "?";
}

NormVariant norm_variant_from_name(const std::string& name) {
    if (name == "none-affine") return NormVariant::NoneAffine;
    if (name == "affine") return NormVariant::Affine;
    if (name == "ccbn") return NormVariant::Ccbn;
    if (name == "sabn") return NormVariant::Sabn;
    throw InvalidArgument("unknown norm variant: " + name);
}

std::vector<Tensor*> Supernet::weight_params() {
    std::vector<Tensor*> out;
    for (auto& edge : layers)
        for (auto& op : edge.ops) {
            if (!op.parameterized()) continue;
            out.push_back(&op.weight);
            out.push_back(&op.bias);
            if (op.sandwich) {
                out.push_back(&op.sandwich->gamma);
                out.push_back(&op.sandwich->beta);
            }
            if (op.bank)
                for (auto& e : op.bank->entries) {
                    out.push_back(&e.gamma);
                    out.push_back(&e.beta);
                }
        }
    out.push_back(&head_w);
    out.push_back(&head_b);
    return out;
}

std::vector<Tensor*> Supernet::arch_params() {
    std::vector<Tensor*> out;
    for (auto& edge : layers) out.push_back(&edge.alpha);
    return out;
}

std::size_t Supernet::norm_param_count() const {
    std::size_t count = 0;
    auto add = [&count](const Tensor& t) {
        if (t.requires_grad()) count += t.size();
    };
    for (const auto& edge : layers)
        for (const auto& op : edge.ops) {
            if (op.sandwich) {
                add(op.sandwich->gamma);
                add(op.sandwich->beta);
            }
            if (op.bank)
                for (const auto& e : op.bank->entries) {
                    add(e.gamma);
                    add(e.beta);
                }
        }
    return count;
}

Supernet build_supernet(std::size_t n_layers, std::size_t dim, std::size_t classes,
                        const std::vector<OpKind>& op_set, Rng& rng) {
    if (n_layers < 1) throw InvalidArgument("supernet needs at least one layer");
    if (op_set.size() < 2) throw InvalidArgument("mixed edge needs at least two ops");
    Supernet net;
    net.dim = dim;
    net.n_classes = classes;
    for (std::size_t l = 0; l < n_layers; ++l) {
        MixedEdge edge;
        for (OpKind kind : op_set) {
            CandidateOp op;
            op.kind = kind;
            if (kind == OpKind::AffineSmall) {
                Array w(dim), b = Array::Zero(dim);
                for (auto& v : w) v = 1.0 + 0.1 * rng.gaussian();
                op.weight = Tensor::leaf({dim}, std::move(w));
                op.bias = Tensor::leaf({dim}, std::move(b));
            } else if (kind == OpKind::AffineLarge) {
                double s = 1.0 / std::sqrt(static_cast<double>(dim));
                Array w(dim * dim), b = Array::Zero(dim);
                for (auto& v : w) v = s * rng.gaussian();
                op.weight = Tensor::leaf({dim, dim}, std::move(w));
                op.bias = Tensor::leaf({dim}, std::move(b));
            }
            edge.ops.push_back(std::move(op));
        }
        edge.alpha = Tensor::leaf({op_set.size()}, Array::Zero(op_set.size()));
        net.layers.push_back(std::move(edge));
    }
    double s = 1.0 / std::sqrt(static_cast<double>(dim));
    Array hw(dim * classes), hb = Array::Zero(classes);
    for (auto& v : hw) v = s * rng.gaussian();
    net.head_w = Tensor::leaf({dim, classes}, std::move(hw));
    net.head_b = Tensor::leaf({classes}, std::move(hb));
    return net;
}

void attach_norm_variant(Supernet& net, NormVariant variant) {
    if (net.attached) throw AlreadyAttached("norm variant already installed");
    const bool conditional =
        variant == NormVariant::Ccbn || variant == NormVariant::Sabn;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        MixedEdge& edge = net.layers[l];
        edge.conditional = conditional && l > 0;
        std::size_t bank_size =
            edge.conditional ? net.layers[l - 1].n_ops() : 1;
        for (auto& op : edge.ops) {
            if (!op.parameterized()) continue;
            bool trainable = variant != NormVariant::NoneAffine;
            op.bank = ConditionalAffineBank::identity(bank_size, net.dim, trainable);
            if (variant == NormVariant::Sabn)
                op.sandwich = ChannelAffine::identity(net.dim, /*trainable=*/true);
            op.stats = BranchStats::init(1, net.dim, 0.1, StatsMode::BatchStats,
                                         /*track_running=*/false);
        }
    }
    net.variant = variant;
    net.attached = true;
}

namespace {

Array stable_softmax(const Array& v) {
    Array s = (v - v.maxCoeff()).exp();
    s /= s.sum();
    return s;
}

Tensor op_forward(CandidateOp& op, const Tensor& x, std::size_t cond_idx, NormEps eps) {
    switch (op.kind) {
        case OpKind::Zero: return Tensor::constant(x.shape(), 0.0);
        case OpKind::Skip: return x;
        default: break;
    }
    if (!op.bank || !op.stats)
        throw NormNotAttached("attach a norm variant before running the supernet");
    std::size_t d = x.shape()[1];
    Tensor pre = op.kind == OpKind::AffineSmall
                     ? x * reshape(op.weight, {1, d}) + reshape(op.bias, {1, d})
                     : linear(x, op.weight, op.bias);
    Tensor normed = op.sandwich
                        ? sabn_forward(pre, cond_idx, *op.sandwich, *op.bank, *op.stats, eps)
                        : ccbn_forward(pre, cond_idx, *op.bank, *op.stats, eps);
    return relu(normed);
}

}  // namespace

std::size_t sample_condition_index(const Tensor& alpha_prev, Rng& rng) {
    if (alpha_prev.ndim() != 1)
        throw ShapeMismatch("architecture parameters must be rank 1");
    if (!alpha_prev.all_finite())
        throw NonFiniteAlpha("architecture parameters contain NaN or Inf");
    Array probs = stable_softmax(alpha_prev.values());
    return rng.categorical(std::span<const double>(probs.data(),
                                                   static_cast<std::size_t>(probs.size())));
}

Tensor mixed_forward(MixedEdge& edge, const Tensor& x,
                     std::optional<std::size_t> cond_idx, NormEps eps) {
    if (edge.n_ops() < 2) throw InvalidArgument("mixed edge needs at least two ops");
    if (edge.conditional && !cond_idx)
        throw MissingConditionIndex("conditional edge forward without an index");
    std::size_t idx = cond_idx.value_or(0);
    Tensor weights = softmax(edge.alpha);
    Tensor out;
    for (std::size_t j = 0; j < edge.n_ops(); ++j) {
        Tensor term = scale_by(op_forward(edge.ops[j], x, idx, eps), element(weights, j));
        out = out.valid() ? out + term : term;
    }
    return out;
}

ForwardResult supernet_forward(Supernet& net, const Tensor& x, Rng& rng) {
    ForwardResult res;
    Tensor h = x;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        std::size_t idx = 0;
        if (net.layers[l].conditional)
            idx = sample_condition_index(net.layers[l - 1].alpha, rng);
        res.cond_indices.push_back(idx);
        h = mixed_forward(net.layers[l], h,
                          net.layers[l].conditional ? std::optional<std::size_t>(idx)
                                                    : std::nullopt);
    }
    res.logits = linear(h, net.head_w, net.head_b);
    return res;
}

StepLosses alternate_step(Supernet& net, const Batch& train, const Batch& val,
                          double lr_w, double lr_alpha, Rng& rng) {
    if (train.labels.empty() || val.labels.empty())
        throw EmptyBatch("alternate_step needs non-empty batches");
    StepLosses losses;

    ForwardResult ft = supernet_forward(net, train.x, rng);
    Tensor l_train = softmax_cross_entropy(ft.logits, train.labels);
    losses.train_loss = l_train.scalar_value();
    GradientMap gw = backward(l_train);
    if (lr_w != 0.0)
        for (Tensor* p : net.weight_params())
            if (gw.contains(*p)) *p = sgd_step(*p, gw.at(*p), lr_w);

    ForwardResult fv = supernet_forward(net, val.x, rng);
    Tensor l_val = softmax_cross_entropy(fv.logits, val.labels);
    losses.val_loss = l_val.scalar_value();
    GradientMap ga = backward(l_val);
    if (lr_alpha != 0.0)
        for (Tensor* a : net.arch_params())
            if (ga.contains(*a)) *a = sgd_step(*a, ga.at(*a), lr_alpha);

    return losses;
}

std::vector<std::size_t> derive_architecture(const Supernet& net) {
    std::vector<std::size_t> arch;
    arch.reserve(net.layers.size());
    for (const auto& edge : net.layers) {
        if (!edge.alpha.all_finite())
            throw NonFiniteAlpha("architecture parameters contain NaN or Inf");
        const Array& a = edge.alpha.values();
        std::size_t best = 0;
        for (Eigen::Index i = 1; i < a.size(); ++i)
            if (a[i] > a[static_cast<Eigen::Index>(best)])
                best = static_cast<std::size_t>(i);
        arch.push_back(best);
    }
    return arch;
}

}  // namespace sbn
