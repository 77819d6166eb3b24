#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "sbn/tensor.hpp"

namespace sbn {

/// Epsilon added inside the square root of every normalization denominator.
struct NormEps {
    double eps = 1e-5;
    NormEps() = default;
    NormEps(double e) : eps(e) {
        if (!(e > 0.0)) throw InvalidArgument("eps must be positive");
    }
};

/// Per-channel scale and shift. The unit of every affine layer, including
/// the shared sandwich affine.
struct ChannelAffine {
    Tensor gamma;  // (C)
    Tensor beta;   // (C)

    static ChannelAffine identity(std::size_t channels, bool trainable = true);
    static ChannelAffine from_values(Array gamma, Array beta, bool trainable = true);

    std::size_t channels() const { return gamma.shape()[0]; }
    bool is_identity() const;
};

/// Indexed family of ChannelAffine records, one per class / branch / op.
struct ConditionalAffineBank {
    std::vector<ChannelAffine> entries;

    static ConditionalAffineBank identity(std::size_t classes, std::size_t channels,
                                          bool trainable = true);

    std::size_t classes() const { return entries.size(); }
    std::size_t channels() const;
    const ChannelAffine& at(std::size_t class_idx) const;
};

enum class StatsMode { BatchStats, RunningStats };

/// Per-branch normalization statistics. In BatchStats mode forwards
/// normalize with current-batch moments (and fold them into the running
/// estimates when track_running is set); in RunningStats mode the stored
/// estimates are used as constants and never touched. An update tagged
/// branch i changes only index i.
struct BranchStats {
    std::vector<Array> running_mean;  // per branch, each (C)
    std::vector<Array> running_var;   // per branch, each (C), entries >= 0
    double momentum = 0.1;
    StatsMode mode = StatsMode::BatchStats;
    bool track_running = true;

    static BranchStats init(std::size_t branches, std::size_t channels,
                            double momentum = 0.1,
                            StatsMode mode = StatsMode::BatchStats,
                            bool track_running = true);

    std::size_t branches() const { return running_mean.size(); }
    std::size_t channels() const;
    void update(std::size_t branch, const Array& batch_mean, const Array& batch_var);
};

// Every forward accepts (N,C,H,W) or (N,C) input; 2-D input is treated as
// (N,C,1,1) and the output keeps the input rank. All forwards are built
// from differentiable graph ops.

/// h = gamma * (x - mu) / sqrt(var + eps) + beta, moments over (N,H,W).
Tensor bn_forward(const Tensor& x, const ChannelAffine& affine, BranchStats& stats,
                  NormEps eps = {});

/// Shared statistics, class-indexed affine.
Tensor ccbn_forward(const Tensor& x, std::size_t class_idx,
                    const ConditionalAffineBank& bank, BranchStats& stats,
                    NormEps eps = {});

/// h = gamma_i * (gamma_sa * xhat + beta_sa) + beta_i.
Tensor sabn_forward(const Tensor& x, std::size_t class_idx, const ChannelAffine& sandwich,
                    const ConditionalAffineBank& bank, BranchStats& stats,
                    NormEps eps = {});

/// Folds the sandwich affine into each bank entry:
/// gamma'_i = gamma_i * gamma_sa, beta'_i = gamma_i * beta_sa + beta_i,
/// so sabn_forward(x,i,s,b) == ccbn_forward(x,i,merge_sandwich(s,b)).
ConditionalAffineBank merge_sandwich(const ChannelAffine& sandwich,
                                     const ConditionalAffineBank& bank);

/// Two parallel normalizers with branch-specific statistics and affines.
/// Branch 0 is the adversarial branch, branch 1 the clean branch.
Tensor auxbn_forward(const Tensor& x, std::size_t branch, BranchStats& stats,
                     const ConditionalAffineBank& affines, NormEps eps = {});

/// AuxBN with a shared sandwich affine between normalization and the
/// branch affine.
Tensor sa_auxbn_forward(const Tensor& x, std::size_t branch, BranchStats& stats,
                        const ChannelAffine& sandwich, const ConditionalAffineBank& bank,
                        NormEps eps = {});

/// Per-(sample,channel) mean and std over the spatial axes; both (N,C).
/// sigma is sqrt(var + eps).
std::pair<Tensor, Tensor> instance_moments(const Tensor& x, NormEps eps = {});

/// h = sigma(style) * (x - mu(x)) / sigma(x) + mu(style); instance moments
/// on both inputs. Style batch must match content's or be 1.
Tensor adain_forward(const Tensor& content, const Tensor& style, NormEps eps = {});

/// h = sigma(style) * (gamma_sa * xhat + beta_sa) + mu(style).
Tensor saadain_forward(const Tensor& content, const Tensor& style,
                       const ChannelAffine& sandwich, NormEps eps = {});

/// Checkpoint roles for the parameter records (SBNT directory layout).
std::vector<std::pair<std::string, Tensor>> checkpoint_roles(
    const ChannelAffine& sandwich, const ConditionalAffineBank& bank,
    const BranchStats& stats);

}  // namespace sbn
