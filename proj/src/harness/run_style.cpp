#include <cmath>
#include <filesystem>

#include "sbn/harness.hpp"

namespace sbn {

namespace {

constexpr std::size_t kChannels = 4;
constexpr std::size_t kFeat = 8;
constexpr std::size_t kSpatial = 8;

Tensor channel_weight(Rng& rng, std::size_t rows, std::size_t cols, bool trainable) {
    Array w(rows * cols);
    double s = 1.0 / std::sqrt(static_cast<double>(rows));
    for (auto& v : w) v = s * rng.gaussian();
    return Tensor::leaf({rows, cols}, std::move(w), trainable);
}

struct StyleModel {
    // frozen random encoder, trainable decoder
    Tensor ew0, eb0, ew1, eb1;
    Tensor dw0, db0, dw1, db1;
    ChannelAffine sandwich;
    bool sandwiched = false;

    static StyleModel build(Rng& rng, bool sandwiched, bool identity_sandwich) {
        StyleModel m{channel_weight(rng, kChannels, kFeat, false),
                     Tensor::leaf({kFeat}, Array::Zero(kFeat), false),
                     channel_weight(rng, kFeat, kFeat, false),
                     Tensor::leaf({kFeat}, Array::Zero(kFeat), false),
                     channel_weight(rng, kFeat, kFeat, true),
                     Tensor::leaf({kFeat}, Array::Zero(kFeat)),
                     channel_weight(rng, kFeat, kChannels, true),
                     Tensor::leaf({kChannels}, Array::Zero(kChannels)),
                     ChannelAffine::identity(kFeat,
                                             sandwiched && !identity_sandwich),
                     sandwiched};
        return m;
    }

    std::pair<Tensor, Tensor> encode(const Tensor& img) const {
        Tensor f1 = relu(channel_linear(img, ew0, eb0));
        Tensor f2 = channel_linear(f1, ew1, eb1);
        return {f1, f2};
    }

    Tensor transfer(const Tensor& content_feat, const Tensor& style_feat) {
        return sandwiched ? saadain_forward(content_feat, style_feat, sandwich)
                          : adain_forward(content_feat, style_feat);
    }

    Tensor decode(const Tensor& feat) const {
        Tensor d = relu(channel_linear(feat, dw0, db0));
        return channel_linear(d, dw1, db1);
    }

    std::vector<Tensor*> params() {
        std::vector<Tensor*> out = {&dw0, &db0, &dw1, &db1};
        if (sandwiched && sandwich.gamma.requires_grad()) {
            out.push_back(&sandwich.gamma);
            out.push_back(&sandwich.beta);
        }
        return out;
    }
};

struct LossPair {
    double content;
    double style;
};

LossPair eval_losses(StyleModel& model, const Tensor& content, const Tensor& style,
                     Tensor* total_out = nullptr) {
    auto [c1, c2] = model.encode(content);
    auto [s1, s2] = model.encode(style);
    Tensor target = model.transfer(c2, s2);
    Tensor img = model.decode(target);
    auto [g1, g2] = model.encode(img);
    Tensor c_loss = content_loss(g2, target);
    Tensor s_loss = style_loss({g1, g2}, {s1, s2});
    if (total_out) *total_out = c_loss + s_loss;
    return {c_loss.scalar_value(), s_loss.scalar_value()};
}

}  // namespace

StyleSeedResult run_style_seed(const ExperimentConfig& cfg, std::uint64_t seed,
                               const std::string& out_dir) {
    namespace fs = std::filesystem;
    MetricsWriter mw((fs::path(out_dir) / ("metrics_seed" + std::to_string(seed) + ".jsonl"))
                         .string());
    Rng model_rng(mix_seed(seed, 5));
    StyleModel model =
        StyleModel::build(model_rng, cfg.variant == "saadain", cfg.identity_sandwich);

    const Tensor val_content =
        texture_patches(mix_seed(seed, 1000001), 8, kChannels, kSpatial, kSpatial);
    const Tensor val_style =
        texture_patches(mix_seed(seed, 1000002), 8, kChannels, kSpatial, kSpatial);

    StyleSeedResult result;
    auto record = [&](std::size_t step, const LossPair& train, const LossPair& val) {
        result.content_train.push_back(train.content);
        result.style_train.push_back(train.style);
        result.content_val.push_back(val.content);
        result.style_val.push_back(val.style);
        mw.write(cfg.experiment, cfg.variant, seed, step,
                 {{"content_train", train.content},
                  {"style_train", train.style},
                  {"content_val", val.content},
                  {"style_val", val.style}});
    };

    {
        Tensor c0 = texture_patches(mix_seed(seed, 0), cfg.batch_size, kChannels,
                                    kSpatial, kSpatial);
        Tensor s0 = texture_patches(mix_seed(seed, 1), cfg.batch_size, kChannels,
                                    kSpatial, kSpatial);
        record(0, eval_losses(model, c0, s0), eval_losses(model, val_content, val_style));
    }

    for (std::size_t t = 1; t <= cfg.steps; ++t) {
        Tensor content = texture_patches(mix_seed(seed, 2 * t), cfg.batch_size, kChannels,
                                         kSpatial, kSpatial);
        Tensor style = texture_patches(mix_seed(seed, 2 * t + 1), cfg.batch_size,
                                       kChannels, kSpatial, kSpatial);
        Tensor total;
        LossPair train = eval_losses(model, content, style, &total);
        check_finite(total, "style objective");
        GradientMap gm = backward(total);
        for (Tensor* p : model.params())
            if (gm.contains(*p)) *p = sgd_step(*p, gm.at(*p), cfg.lr);
        record(t, train, eval_losses(model, val_content, val_style));
    }
    return result;
}

}  // namespace sbn
