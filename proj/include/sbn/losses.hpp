#pragma once

#include <functional>
#include <vector>

#include "sbn/norm.hpp"
#include "sbn/rng.hpp"
#include "sbn/tensor.hpp"

namespace sbn {

/// L_D = -mean(min(0, -1 + d_real)) - mean(min(0, -1 - d_fake)); always >= 0.
Tensor hinge_d_loss(const Tensor& d_real, const Tensor& d_fake);

/// L_G = -mean(d_fake).
Tensor hinge_g_loss(const Tensor& d_fake);

struct AdvPropLoss {
    Tensor total;       // clean_term + adv_term
    Tensor clean_term;  // CE(logits_clean, labels)
    Tensor adv_term;    // CE(logits_adv, labels)
};

/// Two-branch training objective: mean cross-entropy on the clean batch plus
/// mean cross-entropy on the adversarial batch.
AdvPropLoss advprop_loss(const Tensor& logits_clean, const Tensor& logits_adv,
                         const std::vector<std::size_t>& labels);

/// l-inf projected gradient ascent configuration. epsilon == 0 degenerates
/// to the identity attack.
struct PgdConfig {
    double epsilon = 8.0 / 255.0;
    double step_size = 2.0 / 255.0;
    std::size_t iters = 10;
    double clamp_lo = 0.0;
    double clamp_hi = 1.0;

    void validate() const;
};

using LogitsFn = std::function<Tensor(const Tensor&)>;

/// Iterated sign-gradient ascent on cross-entropy, projected onto the
/// epsilon ball around the input and the clamp range after every step.
/// Starts from a uniform random point inside the ball.
Tensor pgd_attack(const LogitsFn& model, const Tensor& x,
                  const std::vector<std::size_t>& labels, const PgdConfig& cfg, Rng& rng);

/// Mean squared error between feature maps.
Tensor content_loss(const Tensor& f_out, const Tensor& f_target);

/// Sum over layers of MSE(instance means) + MSE(instance stds).
Tensor style_loss(const std::vector<Tensor>& feats_out,
                  const std::vector<Tensor>& feats_style, NormEps eps = {});

}  // namespace sbn
