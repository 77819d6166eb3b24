#include "sbn/norm.hpp"

#include <cmath>

namespace sbn {

ChannelAffine ChannelAffine::identity(std::size_t channels, bool trainable) {
    return from_values(Array::Ones(channels), Array::Zero(channels), trainable);
}

ChannelAffine ChannelAffine::from_values(Array gamma, Array beta, bool trainable) {
    if (gamma.size() != beta.size())
        throw ChannelMismatch("gamma and beta extents differ");
    std::size_t c = static_cast<std::size_t>(gamma.size());
    return {Tensor::leaf({c}, std::move(gamma), trainable),
            Tensor::leaf({c}, std::move(beta), trainable)};
}

bool ChannelAffine::is_identity() const {
    return (gamma.values() == 1.0).all() && (beta.values() == 0.0).all();
}

ConditionalAffineBank ConditionalAffineBank::identity(std::size_t classes,
                                                      std::size_t channels,
                                                      bool trainable) {
    if (classes == 0) throw InvalidArgument("bank needs at least one entry");
    ConditionalAffineBank bank;
    bank.entries.reserve(classes);
    for (std::size_t i = 0; i < classes; ++i)
        bank.entries.push_back(ChannelAffine::identity(channels, trainable));
    return bank;
}

std::size_t ConditionalAffineBank::channels() const {
    if (entries.empty()) throw InvalidArgument("empty bank");
    return entries.front().channels();
}

const ChannelAffine& ConditionalAffineBank::at(std::size_t class_idx) const {
    if (class_idx >= entries.size())
        throw IndexOutOfRange("class " + std::to_string(class_idx) + " of " +
                              std::to_string(entries.size()));
    return entries[class_idx];
}

BranchStats BranchStats::init(std::size_t branches, std::size_t channels, double momentum,
                              StatsMode mode, bool track_running) {
    if (branches == 0) throw InvalidArgument("need at least one branch");
    if (!(momentum > 0.0 && momentum <= 1.0))
        throw InvalidArgument("momentum must be in (0,1]");
    BranchStats s;
    s.running_mean.assign(branches, Array::Zero(channels));
    s.running_var.assign(branches, Array::Ones(channels));
    s.momentum = momentum;
    s.mode = mode;
    s.track_running = track_running;
    return s;
}

std::size_t BranchStats::channels() const {
    if (running_mean.empty()) throw InvalidArgument("empty stats");
    return static_cast<std::size_t>(running_mean.front().size());
}

void BranchStats::update(std::size_t branch, const Array& batch_mean,
                         const Array& batch_var) {
    if (branch >= branches())
        throw IndexOutOfRange("branch " + std::to_string(branch));
    running_mean[branch] = (1.0 - momentum) * running_mean[branch] + momentum * batch_mean;
    running_var[branch] = (1.0 - momentum) * running_var[branch] + momentum * batch_var;
}

namespace {

// 2-D inputs run as (N,C,1,1).
Tensor as_nchw(const Tensor& x) {
    if (x.ndim() == 4) return x;
    if (x.ndim() == 2) return reshape(x, {x.shape()[0], x.shape()[1], 1, 1});
    throw ShapeMismatch("normalization input must be rank 2 or 4, got " +
                        shape_str(x.shape()));
}

Tensor restore_rank(const Tensor& h, const Shape& original) {
    return h.shape() == original ? h : reshape(h, original);
}

// (C) -> (1,C,1,1) for broadcasting against feature maps.
Tensor chan(const Tensor& v) { return reshape(v, {1, v.shape()[0], 1, 1}); }

void check_channels(std::size_t feature_c, std::size_t param_c, const char* what) {
    if (feature_c != param_c)
        throw ChannelMismatch(std::string(what) + ": expected " + std::to_string(feature_c) +
                              " channels, got " + std::to_string(param_c));
}

// Normalized input for one branch. Batch mode differentiates through the
// moments and folds them into the running estimates; running mode treats the
// stored estimates as constants.
Tensor normalize_branch(const Tensor& x4, BranchStats& stats, std::size_t branch,
                        double eps) {
    if (branch >= stats.branches())
        throw IndexOutOfRange("branch " + std::to_string(branch) + " of " +
                              std::to_string(stats.branches()));
    check_channels(x4.shape()[1], stats.channels(), "stats");

    Tensor mean, var;
    if (stats.mode == StatsMode::BatchStats) {
        std::tie(mean, var) = reduce_moments(x4, {0, 2, 3});
        if (stats.track_running) stats.update(branch, mean.values(), var.values());
    } else {
        std::size_t c = x4.shape()[1];
        mean = reshape(Tensor::constant({c}, stats.running_mean[branch]), {1, c, 1, 1});
        var = reshape(Tensor::constant({c}, stats.running_var[branch]), {1, c, 1, 1});
    }
    return (x4 - mean) / sqrt(shift(var, eps));
}

Tensor apply_affine(const Tensor& xhat, const ChannelAffine& affine) {
    return xhat * chan(affine.gamma) + chan(affine.beta);
}

Tensor apply_sandwich_affine(const Tensor& xhat, const ChannelAffine& sandwich,
                             const ChannelAffine& affine) {
    Tensor mid = xhat * chan(sandwich.gamma) + chan(sandwich.beta);
    return mid * chan(affine.gamma) + chan(affine.beta);
}

}  // namespace

Tensor bn_forward(const Tensor& x, const ChannelAffine& affine, BranchStats& stats,
                  NormEps eps) {
    if (stats.branches() != 1)
        throw InvalidArgument("bn_forward expects single-branch statistics");
    Tensor x4 = as_nchw(x);
    check_channels(x4.shape()[1], affine.channels(), "affine");
    Tensor xhat = normalize_branch(x4, stats, 0, eps.eps);
    return restore_rank(apply_affine(xhat, affine), x.shape());
}

Tensor ccbn_forward(const Tensor& x, std::size_t class_idx,
                    const ConditionalAffineBank& bank, BranchStats& stats, NormEps eps) {
    if (stats.branches() != 1)
        throw InvalidArgument("ccbn_forward expects single-branch statistics");
    Tensor x4 = as_nchw(x);
    check_channels(x4.shape()[1], bank.channels(), "bank");
    const ChannelAffine& affine = bank.at(class_idx);
    Tensor xhat = normalize_branch(x4, stats, 0, eps.eps);
    return restore_rank(apply_affine(xhat, affine), x.shape());
}

Tensor sabn_forward(const Tensor& x, std::size_t class_idx, const ChannelAffine& sandwich,
                    const ConditionalAffineBank& bank, BranchStats& stats, NormEps eps) {
    if (stats.branches() != 1)
        throw InvalidArgument("sabn_forward expects single-branch statistics");
    Tensor x4 = as_nchw(x);
    check_channels(x4.shape()[1], bank.channels(), "bank");
    check_channels(bank.channels(), sandwich.channels(), "sandwich");
    const ChannelAffine& affine = bank.at(class_idx);
    Tensor xhat = normalize_branch(x4, stats, 0, eps.eps);
    return restore_rank(apply_sandwich_affine(xhat, sandwich, affine), x.shape());
}

ConditionalAffineBank merge_sandwich(const ChannelAffine& sandwich,
                                     const ConditionalAffineBank& bank) {
    check_channels(bank.channels(), sandwich.channels(), "sandwich");
    ConditionalAffineBank merged;
    merged.entries.reserve(bank.classes());
    const Array& gs = sandwich.gamma.values();
    const Array& bs = sandwich.beta.values();
    for (const auto& e : bank.entries) {
        Array g = e.gamma.values() * gs;
        Array b = e.gamma.values() * bs + e.beta.values();
        merged.entries.push_back(ChannelAffine::from_values(std::move(g), std::move(b),
                                                            /*trainable=*/false));
    }
    return merged;
}

Tensor auxbn_forward(const Tensor& x, std::size_t branch, BranchStats& stats,
                     const ConditionalAffineBank& affines, NormEps eps) {
    if (stats.branches() != 2 || affines.classes() != 2)
        throw InvalidArgument("auxbn_forward expects two branches");
    Tensor x4 = as_nchw(x);
    check_channels(x4.shape()[1], affines.channels(), "affines");
    const ChannelAffine& affine = affines.at(branch);
    Tensor xhat = normalize_branch(x4, stats, branch, eps.eps);
    return restore_rank(apply_affine(xhat, affine), x.shape());
}

Tensor sa_auxbn_forward(const Tensor& x, std::size_t branch, BranchStats& stats,
                        const ChannelAffine& sandwich, const ConditionalAffineBank& bank,
                        NormEps eps) {
    if (stats.branches() != 2 || bank.classes() != 2)
        throw InvalidArgument("sa_auxbn_forward expects two branches");
    Tensor x4 = as_nchw(x);
    check_channels(x4.shape()[1], bank.channels(), "bank");
    check_channels(bank.channels(), sandwich.channels(), "sandwich");
    const ChannelAffine& affine = bank.at(branch);
    Tensor xhat = normalize_branch(x4, stats, branch, eps.eps);
    return restore_rank(apply_sandwich_affine(xhat, sandwich, affine), x.shape());
}

std::pair<Tensor, Tensor> instance_moments(const Tensor& x, NormEps eps) {
    Tensor x4 = as_nchw(x);
    auto [mean, var] = reduce_moments(x4, {2, 3});
    std::size_t n = x4.shape()[0], c = x4.shape()[1];
    Tensor mu = reshape(mean, {n, c});
    Tensor sigma = reshape(sqrt(shift(var, eps.eps)), {n, c});
    return {mu, sigma};
}

namespace {

// instance stats reshaped for broadcasting over (N,C,H,W)
std::pair<Tensor, Tensor> instance_moments_nc11(const Tensor& x4, double eps) {
    auto [mean, var] = reduce_moments(x4, {2, 3});
    return {mean, sqrt(shift(var, eps))};
}

void check_style_batch(const Tensor& content4, const Tensor& style4) {
    check_channels(content4.shape()[1], style4.shape()[1], "style");
    std::size_t nc = content4.shape()[0], ns = style4.shape()[0];
    if (ns != nc && ns != 1)
        throw ShapeMismatch("style batch " + std::to_string(ns) +
                            " incompatible with content batch " + std::to_string(nc));
}

}  // namespace

Tensor adain_forward(const Tensor& content, const Tensor& style, NormEps eps) {
    Tensor c4 = as_nchw(content);
    Tensor s4 = as_nchw(style);
    check_style_batch(c4, s4);
    auto [mu_c, sig_c] = instance_moments_nc11(c4, eps.eps);
    auto [mu_s, sig_s] = instance_moments_nc11(s4, eps.eps);
    Tensor xhat = (c4 - mu_c) / sig_c;
    return restore_rank(xhat * sig_s + mu_s, content.shape());
}

Tensor saadain_forward(const Tensor& content, const Tensor& style,
                       const ChannelAffine& sandwich, NormEps eps) {
    Tensor c4 = as_nchw(content);
    Tensor s4 = as_nchw(style);
    check_style_batch(c4, s4);
    check_channels(c4.shape()[1], sandwich.channels(), "sandwich");
    auto [mu_c, sig_c] = instance_moments_nc11(c4, eps.eps);
    auto [mu_s, sig_s] = instance_moments_nc11(s4, eps.eps);
    Tensor xhat = (c4 - mu_c) / sig_c;
    Tensor mid = xhat * chan(sandwich.gamma) + chan(sandwich.beta);
    return restore_rank(mid * sig_s + mu_s, content.shape());
}

std::vector<std::pair<std::string, Tensor>> checkpoint_roles(
    const ChannelAffine& sandwich, const ConditionalAffineBank& bank,
    const BranchStats& stats) {
    std::vector<std::pair<std::string, Tensor>> roles;
    roles.emplace_back("sandwich.gamma", sandwich.gamma);
    roles.emplace_back("sandwich.beta", sandwich.beta);
    for (std::size_t i = 0; i < bank.classes(); ++i) {
        roles.emplace_back("bank." + std::to_string(i) + ".gamma", bank.entries[i].gamma);
        roles.emplace_back("bank." + std::to_string(i) + ".beta", bank.entries[i].beta);
    }
    for (std::size_t b = 0; b < stats.branches(); ++b) {
        std::size_t c = stats.channels();
        roles.emplace_back("stats." + std::to_string(b) + ".mean",
                           Tensor::constant({c}, stats.running_mean[b]));
        roles.emplace_back("stats." + std::to_string(b) + ".var",
                           Tensor::constant({c}, stats.running_var[b]));
    }
    return roles;
}

}  // namespace sbn
