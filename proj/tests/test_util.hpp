#pragma once

#include <functional>
#include <vector>

#include "sbn/rng.hpp"
#include "sbn/tensor.hpp"

namespace sbn::test {

inline Tensor random_tensor(Rng& rng, Shape shape, double lo = -2.0, double hi = 2.0,
                            bool requires_grad = false) {
    Array v(shape_size(shape));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return Tensor::leaf(std::move(shape), std::move(v), requires_grad);
}

/// max over elements of |a - b| / max(1, |a|)
inline double max_rel_err(const Array& analytic, const Array& numeric) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < analytic.size(); ++i) {
        double denom = std::max(1.0, std::abs(analytic[i]));
        worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
    }
    return worst;
}

/// Checks the reverse-mode gradients of `build` against central differences
/// for every leaf. `build` must be pure: it is re-evaluated many times with
/// one leaf swapped for a perturbed constant.
inline double gradcheck(
    const std::function<Tensor(const std::vector<Tensor>&)>& build,
    std::vector<Tensor> leaves, double h = 1e-6) {
    Tensor loss = build(leaves);
    GradientMap gm = backward(loss);
    double worst = 0.0;
    for (std::size_t i = 0; i < leaves.size(); ++i) {
        if (!leaves[i].requires_grad()) continue;
        auto f = [&](const Tensor& probe) {
            std::vector<Tensor> swapped = leaves;
            swapped[i] = probe;
            return build(swapped).scalar_value();
        };
        Tensor numeric = finite_diff_grad(f, leaves[i], h);
        Array analytic = gm.contains(leaves[i])
                             ? gm.at(leaves[i]).values()
                             : Array(Array::Zero(static_cast<Eigen::Index>(leaves[i].size())));
        worst = std::max(worst, max_rel_err(analytic, numeric.values()));
    }
    return worst;
}

/// Materializes b tiled up to `target` (which b must broadcast to).
inline Tensor tile_to(const Tensor& b, const Shape& target) {
    Array out(shape_size(target));
    const Shape& bs = b.shape();
    std::vector<std::size_t> idx(target.size(), 0);
    for (std::size_t flat = 0; flat < out.size(); ++flat) {
        std::size_t boff = 0, stride = 1;
        for (std::size_t ax = target.size(); ax-- > 0;) {
            std::size_t bi = bs[ax] == 1 ? 0 : idx[ax];
            boff += bi * stride;
            stride *= bs[ax];
        }
        out[static_cast<Eigen::Index>(flat)] = b.values()[static_cast<Eigen::Index>(boff)];
        for (std::size_t ax = target.size(); ax-- > 0;) {
            if (++idx[ax] < target[ax]) break;
            idx[ax] = 0;
        }
    }
    return Tensor::constant(target, std::move(out));
}

}  // namespace sbn::test
