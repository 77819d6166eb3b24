#pragma once

#include <Eigen/Core>
#include <functional>
#include <vector>

#include "sbn/errors.hpp"

namespace sbn {

/// Averaged pairwise cosine similarity: (1/(N(N-1))) sum_{i != j} cos(v_i, v_j).
double pairwise_cosine(const std::vector<Eigen::VectorXd>& vectors);

/// Population standard deviation of the l2 norms of the given vectors.
double grad_norm_std(const std::vector<Eigen::VectorXd>& vectors);

/// s_0 = x_0; s_t = decay * s_{t-1} + (1 - decay) * x_t.
std::vector<double> ema_smooth(const std::vector<double>& series, double decay);

/// Supplies the flattened stage-parameter gradient for one (latent, class)
/// pair. The caller wires the generator and loss inside the probe.
using ClassGradProbe = std::function<Eigen::VectorXd(std::size_t latent_idx,
                                                     std::size_t class_idx)>;

/// Inter-class gradient similarity at one network stage: for each of the
/// n_latents latent draws, the pairwise cosine over the n_classes per-class
/// gradients, averaged over latents.
double inter_class_grad_similarity(std::size_t n_latents, std::size_t n_classes,
                                   const ClassGradProbe& probe);

}  // namespace sbn
