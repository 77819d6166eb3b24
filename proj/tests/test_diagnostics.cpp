#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sbn/diagnostics.hpp"
#include "sbn/rng.hpp"
#include "sbn/tensor.hpp"

using namespace sbn;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out[i++] = x;
    return out;
}

Eigen::VectorXd random_vec(Rng& rng, int n) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = rng.uniform(-2, 2);
    return v;
}

}  // namespace

TEST_CASE("pairwise cosine exact poles") {
    Eigen::VectorXd v = vec({3.0, 4.0});  // norm exactly 5
    CHECK(pairwise_cosine({v, v, v, v}) == 1.0);
    CHECK(pairwise_cosine({v, -v}) == -1.0);

    CHECK_THROWS_AS(pairwise_cosine({v}), TooFewVectors);
    CHECK_THROWS_AS(pairwise_cosine({v, vec({0.0, 0.0})}), ZeroNormVector);
    CHECK_THROWS_AS(pairwise_cosine({v, vec({1.0, 2.0, 3.0})}), ShapeMismatch);
}

TEST_CASE("pairwise cosine matches a double-loop oracle") {
    Rng rng(41);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Eigen::VectorXd> vs = {random_vec(rng, 8), random_vec(rng, 8),
                                           random_vec(rng, 8)};
        double expect = 0.0;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                if (i == j) continue;
                expect += vs[i].dot(vs[j]) / (vs[i].norm() * vs[j].norm());
            }
        expect /= 6.0;
        CHECK(std::abs(pairwise_cosine(vs) - expect) < 1e-12);
    }
}

TEST_CASE("pairwise cosine invariances") {
    Rng rng(42);
    std::vector<Eigen::VectorXd> vs = {random_vec(rng, 6), random_vec(rng, 6),
                                       random_vec(rng, 6), random_vec(rng, 6)};
    double base = pairwise_cosine(vs);

    std::vector<Eigen::VectorXd> permuted = {vs[2], vs[0], vs[3], vs[1]};
    CHECK(pairwise_cosine(permuted) == doctest::Approx(base).epsilon(1e-14));

    std::vector<Eigen::VectorXd> rescaled = vs;
    rescaled[1] *= 37.5;
    rescaled[3] *= 0.001;
    CHECK(pairwise_cosine(rescaled) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("grad norm dispersion") {
    Eigen::VectorXd a = vec({3.0, 0.0});
    Eigen::VectorXd b = vec({0.0, 3.0});
    CHECK(grad_norm_std({a, b}) == 0.0);

    CHECK(grad_norm_std({vec({3.0, 0.0}), vec({0.0, 5.0})}) == doctest::Approx(1.0));
    CHECK_THROWS_AS(grad_norm_std({a}), TooFewVectors);

    Rng rng(43);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Eigen::VectorXd> vs;
        for (int i = 0; i < 5; ++i) vs.push_back(random_vec(rng, 7));
        double mean = 0.0;
        for (auto& v : vs) mean += v.norm();
        mean /= 5.0;
        double var = 0.0;
        for (auto& v : vs) var += (v.norm() - mean) * (v.norm() - mean);
        var /= 5.0;
        CHECK(std::abs(grad_norm_std(vs) - std::sqrt(var)) < 1e-12);
    }
}

TEST_CASE("grad norm dispersion is rotation invariant") {
    Rng rng(44);
    std::vector<Eigen::VectorXd> vs;
    for (int i = 0; i < 4; ++i) vs.push_back(random_vec(rng, 5));
    double base = grad_norm_std(vs);

    // Householder reflection H = I - 2uu^T, an exact isometry
    Eigen::VectorXd u = random_vec(rng, 5).normalized();
    std::vector<Eigen::VectorXd> rotated;
    for (auto& v : vs) rotated.push_back(v - 2.0 * u * (u.dot(v)));
    CHECK(grad_norm_std(rotated) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("ema smoothing") {
    std::vector<double> constant(7, 3.25);
    CHECK(ema_smooth(constant, 0.9) == constant);

    std::vector<double> series = {0.0, 1.0};
    auto out = ema_smooth(series, 0.9);
    CHECK(out[0] == doctest::Approx(0.0));
    CHECK(out[1] == doctest::Approx(0.1));

    // decay -> 0 limit: output follows the input from t=1 on
    auto tight = ema_smooth({5.0, -1.0, 2.0}, 1e-12);
    CHECK(tight[1] == doctest::Approx(-1.0));
    CHECK(tight[2] == doctest::Approx(2.0));

    CHECK_THROWS_AS(ema_smooth({}, 0.9), EmptySeries);
    CHECK_THROWS_AS(ema_smooth({1.0}, 0.0), InvalidArgument);
    CHECK_THROWS_AS(ema_smooth({1.0}, 1.0), InvalidArgument);

    Rng rng(45);
    std::vector<double> noisy;
    for (int i = 0; i < 50; ++i) noisy.push_back(rng.uniform(-4, 9));
    auto smoothed = ema_smooth(noisy, 0.9);
    double lo = *std::min_element(noisy.begin(), noisy.end());
    double hi = *std::max_element(noisy.begin(), noisy.end());
    for (double v : smoothed) {
        CHECK(v >= lo);
        CHECK(v <= hi);
    }
}

TEST_CASE("inter-class similarity of a class-blind generator is one") {
    // every class produces the same gradient vector
    Rng rng(46);
    Eigen::VectorXd shared = random_vec(rng, 10);
    double g = inter_class_grad_similarity(
        4, 3, [&](std::size_t, std::size_t) { return shared; });
    CHECK(std::abs(g - 1.0) < 1e-6);
}

TEST_CASE("antisymmetric two-class toy gives minus one") {
    // linear generator, loss sign flips with the class: grads are +/- z
    Tensor w = Tensor::leaf({2}, {1.0, 1.0});
    auto probe = [&](std::size_t, std::size_t class_idx) {
        Tensor z = Tensor::constant({2}, {3.0, 4.0});
        Tensor fake = w * z;
        Tensor loss = class_idx == 0 ? sum_all(fake) : neg(sum_all(fake));
        GradientMap gm = backward(loss);
        Eigen::VectorXd g(2);
        g[0] = gm.at(w).value_at(0);
        g[1] = gm.at(w).value_at(1);
        return g;
    };
    CHECK(inter_class_grad_similarity(1, 2, probe) == -1.0);
}

TEST_CASE("inter-class similarity ignores positive per-class rescaling") {
    Rng rng(47);
    std::vector<Eigen::VectorXd> per_class = {random_vec(rng, 6), random_vec(rng, 6),
                                              random_vec(rng, 6)};
    auto plain = [&](std::size_t, std::size_t j) { return per_class[j]; };
    auto scaled = [&](std::size_t, std::size_t j) {
        return Eigen::VectorXd(per_class[j] * (j == 1 ? 123.0 : 1.0));
    };
    CHECK(inter_class_grad_similarity(2, 3, plain) ==
          doctest::Approx(inter_class_grad_similarity(2, 3, scaled)).epsilon(1e-12));
    CHECK_THROWS_AS(inter_class_grad_similarity(2, 1, plain), TooFewVectors);
}
