#include "sbn/losses.hpp"

#include <cmath>

namespace sbn {

namespace {

void check_batch_1d(const Tensor& t, const char* what) {
    if (t.ndim() != 1)
        throw ShapeMismatch(std::string(what) + " must be rank 1, got " +
                            shape_str(t.shape()));
    if (t.size() == 0) throw EmptyBatch(what);
}

}  // namespace

Tensor hinge_d_loss(const Tensor& d_real, const Tensor& d_fake) {
    check_batch_1d(d_real, "d_real");
    check_batch_1d(d_fake, "d_fake");
    if (d_real.size() != d_fake.size())
        throw ShapeMismatch("real/fake batch sizes differ");
    Tensor real_term = mean_all(min_zero(shift(d_real, -1.0)));
    Tensor fake_term = mean_all(min_zero(neg(shift(d_fake, 1.0))));
    return neg(real_term + fake_term);
}

Tensor hinge_g_loss(const Tensor& d_fake) {
    check_batch_1d(d_fake, "d_fake");
    return neg(mean_all(d_fake));
}

AdvPropLoss advprop_loss(const Tensor& logits_clean, const Tensor& logits_adv,
                         const std::vector<std::size_t>& labels) {
    if (logits_clean.shape() != logits_adv.shape())
        throw ShapeMismatch("clean/adv logits shapes differ");
    Tensor clean_term = softmax_cross_entropy(logits_clean, labels);
    Tensor adv_term = softmax_cross_entropy(logits_adv, labels);
    return {clean_term + adv_term, clean_term, adv_term};
}

void PgdConfig::validate() const {
    if (epsilon < 0.0) throw InvalidArgument("pgd epsilon must be >= 0");
    if (!(step_size > 0.0)) throw InvalidArgument("pgd step size must be positive");
    if (iters < 1) throw InvalidArgument("pgd needs at least one iteration");
    if (!(clamp_lo < clamp_hi)) throw InvalidArgument("pgd clamp range is empty");
}

Tensor pgd_attack(const LogitsFn& model, const Tensor& x,
                  const std::vector<std::size_t>& labels, const PgdConfig& cfg, Rng& rng) {
    cfg.validate();
    const Array& x0 = x.values();
    if ((x0 < cfg.clamp_lo).any() || (x0 > cfg.clamp_hi).any())
        throw InvalidArgument("attack input outside the clamp range");

    auto project = [&](Array& v) {
        v = v.max(x0 - cfg.epsilon).min(x0 + cfg.epsilon);
        v = v.max(cfg.clamp_lo).min(cfg.clamp_hi);
    };

    Array adv(x0.size());
    for (Eigen::Index i = 0; i < adv.size(); ++i)
        adv[i] = x0[i] + rng.uniform(-cfg.epsilon, cfg.epsilon);
    project(adv);

    for (std::size_t it = 0; it < cfg.iters; ++it) {
        Tensor point = Tensor::leaf(x.shape(), adv, /*requires_grad=*/true);
        Tensor loss = softmax_cross_entropy(model(point), labels);
        GradientMap grads = backward(loss);
        const Array g = grads.at(point).values();
        if (!g.isFinite().all())
            throw NonFiniteGradient("attack gradient contains NaN or Inf");
        adv += cfg.step_size * g.sign();
        project(adv);
    }
    return Tensor::constant(x.shape(), std::move(adv));
}

Tensor content_loss(const Tensor& f_out, const Tensor& f_target) {
    if (f_out.shape() != f_target.shape())
        throw ShapeMismatch("content feature shapes differ");
    return mean_all(square(f_out - f_target));
}

Tensor style_loss(const std::vector<Tensor>& feats_out,
                  const std::vector<Tensor>& feats_style, NormEps eps) {
    if (feats_out.size() != feats_style.size() || feats_out.empty())
        throw ShapeMismatch("style loss needs matching non-empty feature lists");
    Tensor total = Tensor::scalar(0.0);
    for (std::size_t l = 0; l < feats_out.size(); ++l) {
        auto [mu_o, sig_o] = instance_moments(feats_out[l], eps);
        auto [mu_s, sig_s] = instance_moments(feats_style[l], eps);
        if (mu_o.shape() != mu_s.shape())
            throw ShapeMismatch("style feature shapes differ at layer " + std::to_string(l));
        total = total + mean_all(square(mu_o - mu_s)) + mean_all(square(sig_o - sig_s));
    }
    return total;
}

}  // namespace sbn
