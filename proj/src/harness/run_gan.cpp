#include <cmath>
#include <filesystem>

#include "sbn/diagnostics.hpp"
#include "sbn/harness.hpp"

namespace sbn {

namespace {

constexpr std::size_t kDataDim = 2;
constexpr std::size_t kHidden = 16;
constexpr double kMixtureRadius = 4.0;
constexpr double kMixtureScale = 0.4;

Eigen::Vector2d class_mean(std::size_t k, std::size_t classes) {
    double angle = 2.0 * M_PI * static_cast<double>(k) / static_cast<double>(classes);
    return {kMixtureRadius * std::cos(angle), kMixtureRadius * std::sin(angle)};
}

Tensor real_batch(Rng& rng, std::size_t n, std::size_t k, std::size_t classes) {
    Array data(n * kDataDim);
    Eigen::Vector2d mean = class_mean(k, classes);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t d = 0; d < kDataDim; ++d)
            data[i * kDataDim + d] = mean[static_cast<Eigen::Index>(d)] +
                                     kMixtureScale * rng.gaussian();
    return Tensor::constant({n, kDataDim}, std::move(data));
}

Tensor gaussian_batch(Rng& rng, std::size_t n, std::size_t d) {
    Array data(n * d);
    for (auto& v : data) v = rng.gaussian();
    return Tensor::constant({n, d}, std::move(data));
}

Tensor init_weight(Rng& rng, std::size_t rows, std::size_t cols) {
    Array w(rows * cols);
    double s = 1.0 / std::sqrt(static_cast<double>(rows));
    for (auto& v : w) v = s * rng.gaussian();
    return Tensor::leaf({rows, cols}, std::move(w));
}

// Class-conditioned generator: two norm stages between three linear maps.
struct Generator {
    Tensor w0, b0, w1, b1, w2, b2;
    ChannelAffine sandwich0, sandwich1;  // identity and frozen for ccbn
    ConditionalAffineBank bank0, bank1;
    BranchStats stats0, stats1;
    bool sandwiched = false;

    static Generator build(Rng& rng, std::size_t latent, std::size_t classes,
                           bool sandwiched) {
        Generator g{init_weight(rng, latent, kHidden),
                    Tensor::leaf({kHidden}, Array::Zero(kHidden)),
                    init_weight(rng, kHidden, kHidden),
                    Tensor::leaf({kHidden}, Array::Zero(kHidden)),
                    init_weight(rng, kHidden, kDataDim),
                    Tensor::leaf({kDataDim}, Array::Zero(kDataDim)),
                    ChannelAffine::identity(kHidden, sandwiched),
                    ChannelAffine::identity(kHidden, sandwiched),
                    ConditionalAffineBank::identity(classes, kHidden),
                    ConditionalAffineBank::identity(classes, kHidden),
                    BranchStats::init(1, kHidden),
                    BranchStats::init(1, kHidden),
                    sandwiched};
        return g;
    }

    void set_eval(bool eval) {
        stats0.mode = eval ? StatsMode::RunningStats : StatsMode::BatchStats;
        stats1.mode = stats0.mode;
    }

    Tensor forward(const Tensor& z, std::size_t class_idx) {
        Tensor h = linear(z, w0, b0);
        h = sandwiched ? sabn_forward(h, class_idx, sandwich0, bank0, stats0)
                       : ccbn_forward(h, class_idx, bank0, stats0);
        h = relu(h);
        h = linear(h, w1, b1);
        h = sandwiched ? sabn_forward(h, class_idx, sandwich1, bank1, stats1)
                       : ccbn_forward(h, class_idx, bank1, stats1);
        h = relu(h);
        return linear(h, w2, b2);
    }

    Tensor stage_weight(std::size_t stage) const { return stage == 0 ? w0 : w1; }

    std::vector<Tensor*> params() {
        std::vector<Tensor*> out = {&w0, &b0, &w1, &b1, &w2, &b2};
        if (sandwiched) {
            out.push_back(&sandwich0.gamma);
            out.push_back(&sandwich0.beta);
            out.push_back(&sandwich1.gamma);
            out.push_back(&sandwich1.beta);
        }
        for (auto* bank : {&bank0, &bank1})
            for (auto& e : bank->entries) {
                out.push_back(&e.gamma);
                out.push_back(&e.beta);
            }
        return out;
    }
};

// Shared trunk with one scoring head per class.
struct Discriminator {
    Tensor w0, b0, w1, b1;
    std::vector<Tensor> head_w;  // per class (kHidden)
    std::vector<Tensor> head_b;  // per class (1)

    static Discriminator build(Rng& rng, std::size_t classes) {
        Discriminator d{init_weight(rng, kDataDim, kHidden),
                        Tensor::leaf({kHidden}, Array::Zero(kHidden)),
                        init_weight(rng, kHidden, kHidden),
                        Tensor::leaf({kHidden}, Array::Zero(kHidden)),
                        {},
                        {}};
        for (std::size_t k = 0; k < classes; ++k) {
            Array hw(kHidden);
            double s = 1.0 / std::sqrt(static_cast<double>(kHidden));
            for (auto& v : hw) v = s * rng.gaussian();
            d.head_w.push_back(Tensor::leaf({kHidden, 1}, std::move(hw)));
            d.head_b.push_back(Tensor::leaf({1}, Array::Zero(1)));
        }
        return d;
    }

    Tensor forward(const Tensor& x, std::size_t class_idx) {
        Tensor h = relu(linear(x, w0, b0));
        h = relu(linear(h, w1, b1));
        Tensor score = matmul(h, head_w[class_idx]);
        return reshape(score, {x.shape()[0]}) + head_b[class_idx];
    }

    std::vector<Tensor*> params() {
        std::vector<Tensor*> out = {&w0, &b0, &w1, &b1};
        for (auto& t : head_w) out.push_back(&t);
        for (auto& t : head_b) out.push_back(&t);
        return out;
    }
};

void sgd_update(std::vector<Tensor*> params, const GradientMap& gm, double lr) {
    for (Tensor* p : params)
        if (gm.contains(*p)) *p = sgd_step(*p, gm.at(*p), lr);
}

}  // namespace

GanSeedResult run_gan_seed(const ExperimentConfig& cfg, std::uint64_t seed,
                           const std::string& out_dir) {
    namespace fs = std::filesystem;
    MetricsWriter mw((fs::path(out_dir) / ("metrics_seed" + std::to_string(seed) + ".jsonl"))
                         .string());
    Rng rng(mix_seed(seed, 0));
    const bool sandwiched = cfg.variant == "sabn";
    Generator gen = Generator::build(rng, cfg.latent_dim, cfg.classes, sandwiched);
    Discriminator dis = Discriminator::build(rng, cfg.classes);

    GanSeedResult result;
    for (std::size_t t = 1; t <= cfg.steps; ++t) {
        std::size_t y = rng.uniform_index(cfg.classes);
        Tensor real = real_batch(rng, cfg.batch_size, y, cfg.classes);
        Tensor z = gaussian_batch(rng, cfg.batch_size, cfg.latent_dim);

        Tensor fake = gen.forward(z, y);
        Tensor l_d = hinge_d_loss(dis.forward(real, y), dis.forward(fake.detach(), y));
        check_finite(l_d, "discriminator loss");
        sgd_update(dis.params(), backward(l_d), cfg.lr);

        Tensor z2 = gaussian_batch(rng, cfg.batch_size, cfg.latent_dim);
        Tensor l_g = hinge_g_loss(dis.forward(gen.forward(z2, y), y));
        check_finite(l_g, "generator loss");
        sgd_update(gen.params(), backward(l_g), cfg.lr);

        result.l_d.push_back(l_d.scalar_value());
        result.l_g.push_back(l_g.scalar_value());
        mw.write(cfg.experiment, cfg.variant, seed, t,
                 {{"l_g", l_g.scalar_value()}, {"l_d", l_d.scalar_value()}});

        if (t % cfg.diag_every == 0) {
            gen.set_eval(true);
            const std::size_t m = 4;
            std::vector<Tensor> latents;
            for (std::size_t i = 0; i < m; ++i)
                latents.push_back(gaussian_batch(rng, 1, cfg.latent_dim));
            for (std::size_t stage = 0; stage < 2; ++stage) {
                std::vector<std::vector<Eigen::VectorXd>> per_latent(m);
                auto probe = [&](std::size_t i, std::size_t j) {
                    Tensor sample = gen.forward(latents[i], j);
                    GradientMap gm = backward(hinge_g_loss(dis.forward(sample, j)));
                    Tensor gw = gm.at(gen.stage_weight(stage));
                    return Eigen::VectorXd(
                        Eigen::Map<const Eigen::VectorXd>(gw.values().data(),
                                                          gw.values().size()));
                };
                double g_inter =
                    inter_class_grad_similarity(m, cfg.classes, probe);
                std::vector<Eigen::VectorXd> class_grads;
                for (std::size_t j = 0; j < cfg.classes; ++j)
                    class_grads.push_back(probe(0, j));
                double dispersion = grad_norm_std(class_grads);
                mw.write(cfg.experiment, cfg.variant, seed, t,
                         {{"g_inter", g_inter}, {"grad_norm_std", dispersion}}, stage);
            }
            gen.set_eval(false);
        }
    }

    // end-of-run mode recovery: distance of generated class means to targets
    gen.set_eval(true);
    std::vector<std::pair<std::string, double>> fields;
    for (std::size_t k = 0; k < cfg.classes; ++k) {
        Tensor z = gaussian_batch(rng, 256, cfg.latent_dim);
        Tensor samples = gen.forward(z, k);
        Eigen::Vector2d mean = Eigen::Vector2d::Zero();
        for (std::size_t i = 0; i < 256; ++i) {
            mean[0] += samples.value_at(i * 2);
            mean[1] += samples.value_at(i * 2 + 1);
        }
        mean /= 256.0;
        double dist = (mean - class_mean(k, cfg.classes)).norm();
        result.mode_dist.push_back(dist);
        fields.emplace_back("mode_dist.c" + std::to_string(k), dist);
    }
    gen.set_eval(false);
    if (cfg.steps > 0)
        mw.write(cfg.experiment, cfg.variant, seed, cfg.steps, fields);
    return result;
}

}  // namespace sbn
