#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "sbn/rng.hpp"
#include "sbn/tensor.hpp"

namespace sbn {

/// Deterministic gaussian-mixture description; identical seed means
/// identical dataset bytes.
struct MixtureSpec {
    std::size_t classes = 0;
    std::size_t dim = 0;
    std::vector<Eigen::VectorXd> means;  // one per class, pairwise distinct
    std::vector<double> scales;          // per-class isotropic stddev
    std::uint64_t seed = 0;

    void validate() const;
};

struct LabeledDataset {
    Tensor features;  // (N, D)
    std::vector<std::size_t> labels;

    std::size_t size() const { return labels.size(); }
};

/// n_per_class * K labeled samples, grouped by class, reproducible from the
/// spec seed alone.
LabeledDataset gaussian_mixture(const MixtureSpec& spec, std::size_t n_per_class);

/// Per-channel targets the texture generator aims for.
struct ChannelTargets {
    Eigen::ArrayXd mean;    // (C), in [0.4, 0.6]
    Eigen::ArrayXd stddev;  // (C), in [0.05, 0.1]
};

ChannelTargets texture_patch_targets(std::uint64_t seed, std::size_t channels);

/// Procedural sinusoid+noise patches (n,C,H,W), values clamped to [0,1],
/// with per-channel mean/std close to texture_patch_targets(seed, C).
Tensor texture_patches(std::uint64_t seed, std::size_t n, std::size_t C, std::size_t H,
                       std::size_t W);

/// Deterministic permutation of [0, n) for one (seed, epoch) pair.
std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed,
                                          std::size_t epoch);

/// SBNT features plus a JSON label sidecar.
void save_dataset(const std::string& dir, const LabeledDataset& ds);
LabeledDataset load_dataset(const std::string& dir);

}  // namespace sbn
