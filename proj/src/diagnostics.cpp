#include "sbn/diagnostics.hpp"

#include <cmath>

namespace sbn {

double pairwise_cosine(const std::vector<Eigen::VectorXd>& vectors) {
    const std::size_t n = vectors.size();
    if (n < 2) throw TooFewVectors("pairwise cosine needs at least two vectors");
    std::vector<double> norms(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (vectors[i].size() != vectors[0].size())
            throw ShapeMismatch("gradient vectors have different lengths");
        norms[i] = vectors[i].norm();
        if (norms[i] == 0.0)
            throw ZeroNormVector("vector " + std::to_string(i) + " has zero norm");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            acc += vectors[i].dot(vectors[j]) / (norms[i] * norms[j]);
        }
    return acc / (static_cast<double>(n) * static_cast<double>(n - 1));
}

double grad_norm_std(const std::vector<Eigen::VectorXd>& vectors) {
    const std::size_t n = vectors.size();
    if (n < 2) throw TooFewVectors("norm dispersion needs at least two vectors");
    std::vector<double> norms(n);
    for (std::size_t i = 0; i < n; ++i) norms[i] = vectors[i].norm();
    double mean = 0.0;
    for (double v : norms) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : norms) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    return std::sqrt(var);
}

std::vector<double> ema_smooth(const std::vector<double>& series, double decay) {
    if (series.empty()) throw EmptySeries("nothing to smooth");
    if (!(decay > 0.0 && decay < 1.0)) throw InvalidArgument("decay must be in (0,1)");
    std::vector<double> out(series.size());
    out[0] = series[0];
    for (std::size_t t = 1; t < series.size(); ++t)
        out[t] = decay * out[t - 1] + (1.0 - decay) * series[t];
    return out;
}

double inter_class_grad_similarity(std::size_t n_latents, std::size_t n_classes,
                                   const ClassGradProbe& probe) {
    if (n_latents < 1) throw InvalidArgument("need at least one latent");
    if (n_classes < 2) throw TooFewVectors("need at least two classes");
    double acc = 0.0;
    for (std::size_t i = 0; i < n_latents; ++i) {
        std::vector<Eigen::VectorXd> grads;
        grads.reserve(n_classes);
        for (std::size_t j = 0; j < n_classes; ++j) grads.push_back(probe(i, j));
        acc += pairwise_cosine(grads);
    }
    return acc / static_cast<double>(n_latents);
}

}  // namespace sbn
