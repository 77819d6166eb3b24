#include <cmath>
#include <filesystem>

#include "sbn/harness.hpp"

namespace sbn {

namespace {

constexpr std::size_t kDim = 8;
constexpr std::size_t kClasses = 2;
constexpr double kBlobOffset = 2.0;
constexpr double kBlobScale = 0.5;

Batch slice(const LabeledDataset& ds, const std::vector<std::size_t>& order,
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

PlantedTask planted_xor_task(std::uint64_t seed, std::size_t n_train, std::size_t n_val,
                             std::size_t dim) {
    if (dim < 2) throw InvalidArgument("planted task needs at least two feature dims");
    auto blob = [&](double sx, double sy) {
        Eigen::VectorXd m = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
        m[0] = sx * kBlobOffset;
        m[1] = sy * kBlobOffset;
        return m;
    };
    // components 0,1 agree in sign (class 0); components 2,3 disagree (class 1)
    MixtureSpec spec;
    spec.classes = 4;
    spec.dim = dim;
    spec.means = {blob(1, 1), blob(-1, -1), blob(1, -1), blob(-1, 1)};
    spec.scales = std::vector<double>(4, kBlobScale);

    auto make = [&](std::uint64_t stream, std::size_t total) {
        spec.seed = mix_seed(seed, stream);
        LabeledDataset comps = gaussian_mixture(spec, (total + 3) / 4);
        for (auto& label : comps.labels) label = label / 2;  // 4 components -> 2 classes
        return comps;
    };
    return {make(11, n_train), make(12, n_val)};
}

NasSeedResult run_nas_seed(const ExperimentConfig& cfg, std::uint64_t seed,
                           const std::string& out_dir) {
    namespace fs = std::filesystem;
    MetricsWriter mw((fs::path(out_dir) / ("metrics_seed" + std::to_string(seed) + ".jsonl"))
                         .string());
    PlantedTask task = planted_xor_task(seed, 256, 256, kDim);
    Rng build_rng(mix_seed(seed, 3));
    Supernet net = build_supernet(3, kDim, kClasses,
                                  {OpKind::Zero, OpKind::Skip, OpKind::AffineSmall,
                                   OpKind::AffineLarge},
                                  build_rng);
    attach_norm_variant(net, norm_variant_from_name(cfg.variant));

    NasSeedResult result;
    result.norm_param_count = net.norm_param_count();

    auto snapshot_alpha = [&net]() {
        std::vector<std::vector<double>> snap;
        for (const auto& edge : net.layers)
            snap.emplace_back(edge.alpha.values().data(),
                              edge.alpha.values().data() + edge.alpha.size());
        return snap;
    };
    auto arch_fields = [](const std::vector<std::size_t>& arch,
                          std::vector<std::pair<std::string, double>> base) {
        for (std::size_t l = 0; l < arch.size(); ++l)
            base.emplace_back("arch.e" + std::to_string(l),
                              static_cast<double>(arch[l]));
        return base;
    };

    std::vector<std::size_t> arch0 = derive_architecture(net);
    result.derived_per_epoch.push_back(arch0);
    {
        auto alpha = snapshot_alpha();
        mw.write(cfg.experiment, cfg.variant, seed, 0, arch_fields(arch0, {}),
                 std::nullopt, &arch0, &alpha);
    }

    Rng step_rng(mix_seed(seed, 4));
    const std::size_t n = task.train.size();
    const std::size_t batches = std::max<std::size_t>(1, n / cfg.batch_size);
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        auto train_order = shuffled_indices(n, mix_seed(seed, 20), epoch);
        auto val_order = shuffled_indices(task.val.size(), mix_seed(seed, 21), epoch);
        double train_acc = 0.0, val_acc = 0.0;
        for (std::size_t b = 0; b < batches; ++b) {
            Batch train_b = slice(task.train, train_order, b * cfg.batch_size,
                                  std::min(cfg.batch_size, n - b * cfg.batch_size));
            Batch val_b = slice(task.val, val_order, b * cfg.batch_size,
                                std::min(cfg.batch_size, task.val.size() -
                                                             b * cfg.batch_size));
            StepLosses losses =
                alternate_step(net, train_b, val_b, cfg.lr_w, cfg.lr_alpha, step_rng);
            if (!std::isfinite(losses.train_loss) || !std::isfinite(losses.val_loss))
                throw NonFiniteValue("nas loss diverged");
            train_acc += losses.train_loss;
            val_acc += losses.val_loss;
        }
        double train_loss = train_acc / static_cast<double>(batches);
        double val_loss = val_acc / static_cast<double>(batches);
        std::vector<std::size_t> arch = derive_architecture(net);
        result.derived_per_epoch.push_back(arch);
        result.train_loss.push_back(train_loss);
        result.val_loss.push_back(val_loss);
        auto alpha = snapshot_alpha();
        mw.write(cfg.experiment, cfg.variant, seed, epoch,
                 arch_fields(arch, {{"train_loss", train_loss}, {"val_loss", val_loss}}),
                 std::nullopt, &arch, &alpha);
    }
    return result;
}

}  // namespace sbn
