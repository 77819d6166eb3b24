#pragma once

#include <optional>
#include <vector>

#include "sbn/norm.hpp"
#include "sbn/rng.hpp"
#include "sbn/tensor.hpp"

namespace sbn {

enum class NormVariant { NoneAffine, Affine, Ccbn, Sabn };

const char* norm_variant_name(NormVariant v);
NormVariant norm_variant_from_name(const std::string& name);

enum class OpKind { Zero, Skip, AffineSmall, AffineLarge };

/// One candidate path of a mixed edge. Zero and Skip carry no parameters
/// and no normalization; the affine ops run input -> affine -> norm -> relu.
/// AffineSmall is a per-feature scale/shift, AffineLarge a full linear map.
struct CandidateOp {
    OpKind kind = OpKind::Zero;
    Tensor weight;  // AffineSmall: (D); AffineLarge: (D,D)
    Tensor bias;    // (D)
    std::optional<ChannelAffine> sandwich;
    std::optional<ConditionalAffineBank> bank;
    std::optional<BranchStats> stats;

    bool parameterized() const {
        return kind == OpKind::AffineSmall || kind == OpKind::AffineLarge;
    }
};

/// All candidate ops of one layer plus their architecture parameters.
struct MixedEdge {
    std::vector<CandidateOp> ops;
    Tensor alpha;  // (n_ops), trainable
    bool conditional = false;

    std::size_t n_ops() const { return ops.size(); }
};

/// Linear chain of mixed edges with a linear classifier head. The first
/// layer has no predecessor, so its normalization stays unconditional
/// (single-entry bank) under every variant.
struct Supernet {
    std::vector<MixedEdge> layers;
    Tensor head_w;  // (D, classes)
    Tensor head_b;  // (classes)
    std::size_t dim = 0;
    std::size_t n_classes = 0;
    NormVariant variant = NormVariant::NoneAffine;
    bool attached = false;

    std::vector<Tensor*> weight_params();
    std::vector<Tensor*> arch_params();
    /// Trainable scalars inside normalization affines (sandwich + banks).
    std::size_t norm_param_count() const;
};

Supernet build_supernet(std::size_t n_layers, std::size_t dim, std::size_t classes,
                        const std::vector<OpKind>& op_set, Rng& rng);

/// Installs the variant's normalization parameters on every parameterized
/// op. Bank size is 1 on the first layer and the previous layer's op count
/// under ccbn/sabn. Throws AlreadyAttached on a second call.
void attach_norm_variant(Supernet& net, NormVariant variant);

/// i ~ softmax(alpha_prev); deterministic given the rng state.
std::size_t sample_condition_index(const Tensor& alpha_prev, Rng& rng);

/// Softmax(alpha)-weighted sum of all op outputs. cond_idx must be present
/// exactly when the edge is conditional.
Tensor mixed_forward(MixedEdge& edge, const Tensor& x,
                     std::optional<std::size_t> cond_idx, NormEps eps = {});

struct ForwardResult {
    Tensor logits;
    std::vector<std::size_t> cond_indices;  // one per layer (0 when unconditional)
};

/// Full chain forward; conditional indices are resampled once per layer per
/// forward pass from the previous layer's architecture parameters.
ForwardResult supernet_forward(Supernet& net, const Tensor& x, Rng& rng);

struct StepLosses {
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct Batch {
    Tensor x;
    std::vector<std::size_t> labels;
};

/// First-order alternation: one SGD step on the weights over the train
/// batch (alpha frozen), then one SGD step on alpha over the val batch
/// (weights frozen).
StepLosses alternate_step(Supernet& net, const Batch& train, const Batch& val,
                          double lr_w, double lr_alpha, Rng& rng);

/// Per-edge argmax over alpha; ties break to the lowest index.
std::vector<std::size_t> derive_architecture(const Supernet& net);

}  // namespace sbn
