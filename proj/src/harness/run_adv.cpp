#include <cmath>
#include <filesystem>

#include "sbn/harness.hpp"

namespace sbn {

namespace {

constexpr std::size_t kDim = 16;
constexpr std::size_t kHidden = 32;
constexpr double kMeanBase = 0.5;
constexpr double kMeanSpread = 0.22;
constexpr double kScale = 0.1;

// Orthogonal +-1 sign patterns (Hadamard rows 1,2,4,8,...) keep the class
// means well separated inside [0,1]^dim.
Eigen::VectorXd class_mean(std::size_t k, std::size_t dim) {
    std::size_t row = std::size_t{1} << k;
    Eigen::VectorXd m(static_cast<Eigen::Index>(dim));
    for (std::size_t d = 0; d < dim; ++d) {
        int bits = __builtin_popcountll(row & d);
        m[static_cast<Eigen::Index>(d)] =
            kMeanBase + kMeanSpread * (bits % 2 == 0 ? 1.0 : -1.0);
    }
    return m;
}

LabeledDataset clipped_mixture(std::uint64_t seed, std::size_t classes,
                               std::size_t n_per_class, double lo, double hi) {
    MixtureSpec spec;
    spec.classes = classes;
    spec.dim = kDim;
    for (std::size_t k = 0; k < classes; ++k) spec.means.push_back(class_mean(k, kDim));
    spec.scales = std::vector<double>(classes, kScale);
    spec.seed = seed;
    LabeledDataset ds = gaussian_mixture(spec, n_per_class);
    Array clipped = ds.features.values().max(lo).min(hi);
    return {Tensor::constant(ds.features.shape(), std::move(clipped)), ds.labels};
}

struct AdvModel {
    Tensor w0, b0, w1, b1;
    std::string variant;
    ChannelAffine single;              // bn
    ChannelAffine sandwich;            // sa_auxbn
    ConditionalAffineBank branch_affines;  // auxbn / sa_auxbn (K=2)
    BranchStats stats;

    static AdvModel build(Rng& rng, const std::string& variant, std::size_t classes) {
        auto weight = [&rng](std::size_t rows, std::size_t cols) {
            Array w(rows * cols);
            double s = 1.0 / std::sqrt(static_cast<double>(rows));
            for (auto& v : w) v = s * rng.gaussian();
            return Tensor::leaf({rows, cols}, std::move(w));
        };
        AdvModel m{weight(kDim, kHidden),
                   Tensor::leaf({kHidden}, Array::Zero(kHidden)),
                   weight(kHidden, classes),
                   Tensor::leaf({classes}, Array::Zero(classes)),
                   variant,
                   ChannelAffine::identity(kHidden),
                   ChannelAffine::identity(kHidden),
                   ConditionalAffineBank::identity(2, kHidden),
                   variant == "bn" ? BranchStats::init(1, kHidden)
                                   : BranchStats::init(2, kHidden)};
        return m;
    }

    void set_eval(bool eval) {
        stats.mode = eval ? StatsMode::RunningStats : StatsMode::BatchStats;
    }

    // branch: 0 adversarial, 1 clean (ignored by the single-norm baseline)
    Tensor forward(const Tensor& x, std::size_t branch) {
        Tensor h = linear(x, w0, b0);
        if (variant == "bn")
            h = bn_forward(h, single, stats);
        else if (variant == "auxbn")
            h = auxbn_forward(h, branch, stats, branch_affines);
        else
            h = sa_auxbn_forward(h, branch, stats, sandwich, branch_affines);
        return linear(relu(h), w1, b1);
    }

    std::vector<Tensor*> params() {
        std::vector<Tensor*> out = {&w0, &b0, &w1, &b1};
        if (variant == "bn") {
            out.push_back(&single.gamma);
            out.push_back(&single.beta);
        } else {
            if (variant == "sa_auxbn") {
                out.push_back(&sandwich.gamma);
                out.push_back(&sandwich.beta);
            }
            for (auto& e : branch_affines.entries) {
                out.push_back(&e.gamma);
                out.push_back(&e.beta);
            }
        }
        return out;
    }
};

double accuracy(const Tensor& logits, const std::vector<std::size_t>& labels) {
    std::size_t k = logits.shape()[1];
    std::size_t correct = 0;
    for (std::size_t n = 0; n < labels.size(); ++n) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < k; ++j)
            if (logits.value_at(n * k + j) > logits.value_at(n * k + best)) best = j;
        if (best == labels[n]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(labels.size());
}

struct BranchEval {
    double sa;
    double ra;
};

BranchEval eval_branch(AdvModel& model, std::size_t branch, const LabeledDataset& test,
                       const PgdConfig& pgd, std::size_t iters, Rng& rng) {
    model.set_eval(true);
    BranchEval out{};
    out.sa = accuracy(model.forward(test.features, branch), test.labels);
    PgdConfig eval_cfg = pgd;
    eval_cfg.iters = std::max<std::size_t>(1, iters);
    Tensor adv = pgd_attack(
        [&](const Tensor& p) { return model.forward(p, branch); }, test.features,
        test.labels, eval_cfg, rng);
    out.ra = accuracy(model.forward(adv, branch), test.labels);
    model.set_eval(false);
    return out;
}

Batch take(const LabeledDataset& ds, const std::vector<std::size_t>& order,
           std::size_t begin, std::size_t count) {
    std::size_t dim = ds.features.shape()[1];
    Array data(count * dim);
    std::vector<std::size_t> labels(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::size_t src = order[begin + i];
        labels[i] = ds.labels[src];
        for (std::size_t d = 0; d < dim; ++d)
            data[i * dim + d] = ds.features.value_at(src * dim + d);
    }
    return {Tensor::constant({count, dim}, std::move(data)), std::move(labels)};
}

}  // namespace

AdvSeedResult run_adv_seed(const ExperimentConfig& cfg, std::uint64_t seed,
                           const std::string& out_dir) {
    namespace fs = std::filesystem;
    MetricsWriter mw((fs::path(out_dir) / ("metrics_seed" + std::to_string(seed) + ".jsonl"))
                         .string());
    LabeledDataset train = clipped_mixture(mix_seed(seed, 1), cfg.classes, 128,
                                           cfg.pgd.clamp_lo, cfg.pgd.clamp_hi);
    LabeledDataset test = clipped_mixture(mix_seed(seed, 2), cfg.classes,
                                          (cfg.eval_size + cfg.classes - 1) / cfg.classes,
                                          cfg.pgd.clamp_lo, cfg.pgd.clamp_hi);

    Rng rng(mix_seed(seed, 3));
    AdvModel model = AdvModel::build(rng, cfg.variant, cfg.classes);

    AdvSeedResult result;
    {
        // untrained baseline for the training-effect bound
        Rng fresh_rng(mix_seed(seed, 9));
        AdvModel fresh = AdvModel::build(fresh_rng, cfg.variant, cfg.classes);
        result.ra_untrained =
            eval_branch(fresh, 0, test, cfg.pgd, cfg.eval_pgd_iters, fresh_rng).ra;
    }

    const std::size_t n = train.size();
    const std::size_t batches = std::max<std::size_t>(1, n / cfg.batch_size);
    std::vector<std::size_t> order;
    for (std::size_t t = 1; t <= cfg.steps; ++t) {
        std::size_t b = (t - 1) % batches;
        if (b == 0) order = shuffled_indices(n, mix_seed(seed, 30), (t - 1) / batches);
        Batch batch = take(train, order, b * cfg.batch_size,
                           std::min(cfg.batch_size, n - b * cfg.batch_size));

        model.set_eval(true);  // attack against frozen statistics
        Tensor x_adv = pgd_attack(
            [&](const Tensor& p) { return model.forward(p, 0); }, batch.x, batch.labels,
            cfg.pgd, rng);
        model.set_eval(false);

        AdvPropLoss loss = advprop_loss(model.forward(batch.x, 1),
                                        model.forward(x_adv, 0), batch.labels);
        check_finite(loss.total, "advprop loss");
        GradientMap gm = backward(loss.total);
        for (Tensor* p : model.params())
            if (gm.contains(*p)) *p = sgd_step(*p, gm.at(*p), cfg.lr);

        mw.write(cfg.experiment, cfg.variant, seed, t,
                 {{"total_loss", loss.total.scalar_value()},
                  {"clean_loss", loss.clean_term.scalar_value()},
                  {"adv_loss", loss.adv_term.scalar_value()}});
    }

    BranchEval adv_eval = eval_branch(model, 0, test, cfg.pgd, cfg.eval_pgd_iters, rng);
    BranchEval clean_eval =
        model.variant == "bn" ? adv_eval
                              : eval_branch(model, 1, test, cfg.pgd, cfg.eval_pgd_iters, rng);
    result.sa_adv_branch = adv_eval.sa;
    result.ra_adv_branch = adv_eval.ra;
    result.sa_clean_branch = clean_eval.sa;
    result.ra_clean_branch = clean_eval.ra;

    if (cfg.steps > 0)
        mw.write(cfg.experiment, cfg.variant, seed, cfg.steps,
                 {{"sa.b0", result.sa_adv_branch},
                  {"ra.b0", result.ra_adv_branch},
                  {"sa.b1", result.sa_clean_branch},
                  {"ra.b1", result.ra_clean_branch},
                  {"ra_untrained", result.ra_untrained}});
    return result;
}

}  // namespace sbn
