#include "sbn/datasynth.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "sbn/tensor_io.hpp"

namespace sbn {

void MixtureSpec::validate() const {
    if (classes < 2) throw DegenerateSpec("need at least two classes");
    if (dim < 1) throw DegenerateSpec("feature dim must be positive");
    if (means.size() != classes || scales.size() != classes)
        throw DegenerateSpec("means/scales must list one entry per class");
    for (std::size_t k = 0; k < classes; ++k) {
        if (static_cast<std::size_t>(means[k].size()) != dim)
            throw DegenerateSpec("mean " + std::to_string(k) + " has wrong dimension");
        if (!(scales[k] > 0.0)) throw DegenerateSpec("scales must be positive");
    }
    for (std::size_t a = 0; a < classes; ++a)
        for (std::size_t b = a + 1; b < classes; ++b)
            if (means[a] == means[b])
                throw DegenerateSpec("class means " + std::to_string(a) + " and " +
                                     std::to_string(b) + " coincide");
}

LabeledDataset gaussian_mixture(const MixtureSpec& spec, std::size_t n_per_class) {
    spec.validate();
    if (n_per_class < 1) throw DegenerateSpec("n_per_class must be positive");
    const std::size_t total = n_per_class * spec.classes;
    Array data(total * spec.dim);
    std::vector<std::size_t> labels(total);
    Rng rng(spec.seed);
    std::size_t row = 0;
    for (std::size_t k = 0; k < spec.classes; ++k) {
        for (std::size_t i = 0; i < n_per_class; ++i, ++row) {
            labels[row] = k;
            for (std::size_t d = 0; d < spec.dim; ++d)
                data[row * spec.dim + d] =
                    spec.means[k][static_cast<Eigen::Index>(d)] +
                    spec.scales[k] * rng.gaussian();
        }
    }
    return {Tensor::constant({total, spec.dim}, std::move(data)), std::move(labels)};
}

ChannelTargets texture_patch_targets(std::uint64_t seed, std::size_t channels) {
    Rng rng(mix_seed(seed, 1));
    ChannelTargets t;
    t.mean.resize(channels);
    t.stddev.resize(channels);
    for (std::size_t c = 0; c < channels; ++c) {
        t.mean[c] = rng.uniform(0.4, 0.6);
        t.stddev[c] = rng.uniform(0.05, 0.1);
    }
    return t;
}

Tensor texture_patches(std::uint64_t seed, std::size_t n, std::size_t C, std::size_t H,
                       std::size_t W) {
    if (n < 1 || C < 1 || H < 1 || W < 1)
        throw InvalidArgument("texture patch extents must be positive");
    ChannelTargets targets = texture_patch_targets(seed, C);
    Rng rng(mix_seed(seed, 2));
    Array data(n * C * H * W);
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t c = 0; c < C; ++c) {
            // integer cycle counts keep the sinusoid mean exactly zero on the grid
            double kx = 1.0 + static_cast<double>(rng.uniform_index(3));
            double ky = 1.0 + static_cast<double>(rng.uniform_index(3));
            double phase = rng.uniform(0.0, 2.0 * M_PI);
            double amp = targets.stddev[c] * std::sqrt(2.0 * 0.8);
            double noise = targets.stddev[c] * std::sqrt(0.2);
            for (std::size_t i = 0; i < H; ++i)
                for (std::size_t j = 0; j < W; ++j) {
                    double arg = 2.0 * M_PI * (kx * static_cast<double>(i) / H +
                                               ky * static_cast<double>(j) / W) +
                                 phase;
                    double v = targets.mean[c] + amp * std::sin(arg) +
                               noise * rng.gaussian();
                    data[((s * C + c) * H + i) * W + j] = std::min(1.0, std::max(0.0, v));
                }
        }
    return Tensor::constant({n, C, H, W}, std::move(data));
}

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed,
                                          std::size_t epoch) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    Rng rng(mix_seed(seed, epoch));
    for (std::size_t i = n; i > 1; --i) {
        std::size_t j = rng.uniform_index(i);
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

void save_dataset(const std::string& dir, const LabeledDataset& ds) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    write_tensor((fs::path(dir) / "features.sbnt").string(), ds.features);
    nlohmann::ordered_json side;
    side["labels"] = ds.labels;
    std::ofstream os(fs::path(dir) / "labels.json");
    os << side.dump() << "\n";
}

LabeledDataset load_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    Tensor features = read_tensor((fs::path(dir) / "features.sbnt").string());
    std::ifstream is(fs::path(dir) / "labels.json");
    if (!is) throw CorruptTensorFile("missing labels.json in " + dir);
    nlohmann::json side = nlohmann::json::parse(is, nullptr, false);
    if (side.is_discarded() || !side.contains("labels"))
        throw CorruptTensorFile("bad labels.json in " + dir);
    return {features, side["labels"].get<std::vector<std::size_t>>()};
}

}  // namespace sbn
