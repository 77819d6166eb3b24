#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "sbn/norm.hpp"
#include "sbn/tensor.hpp"
#include "sbn/tensor_io.hpp"
#include "test_util.hpp"

using namespace sbn;
using sbn::test::gradcheck;
using sbn::test::max_rel_err;
using sbn::test::random_tensor;
using sbn::test::tile_to;

TEST_CASE("shape validation") {
    CHECK_THROWS_AS(Tensor::constant({0}, 0.0), InvalidShape);
    CHECK_THROWS_AS(Tensor::constant({2, 0, 3}, 0.0), InvalidShape);
    CHECK_THROWS_AS(Tensor::constant({1, 1, 1, 1, 1}, 0.0), InvalidShape);
    CHECK_THROWS_AS(Tensor::leaf({3}, {1.0, 2.0}), InvalidShape);
    CHECK(Tensor::constant({2, 3}, 0.0).size() == 6);
}

TEST_CASE("elementwise add and broadcast") {
    Tensor a = Tensor::constant({2}, {1.0, 2.0});
    Tensor b = Tensor::constant({2}, {3.0, 4.0});
    Tensor c = a + b;
    CHECK(c.value_at(0) == 4.0);
    CHECK(c.value_at(1) == 6.0);

    Tensor m = Tensor::constant({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor row = Tensor::constant({1, 3}, {10, 100, 1000});
    Tensor scaled = m * row;
    CHECK(scaled.value_at(0) == 10.0);
    CHECK(scaled.value_at(4) == 500.0);
    CHECK(scaled.value_at(5) == 6000.0);

    CHECK_THROWS_AS(ew_binary(m, Tensor::constant({2, 2}, 0.0), EwKind::Add), ShapeMismatch);
    CHECK_THROWS_AS(ew_binary(m, Tensor::constant({3}, 0.0), EwKind::Add), ShapeMismatch);
}

TEST_CASE("division domain guard") {
    Tensor a = Tensor::constant({2}, {1.0, 1.0});
    CHECK_THROWS_AS(a / Tensor::constant({2}, {1.0, 0.0}), DivisionDomain);
    CHECK_NOTHROW(a / Tensor::constant({2}, {1.0, 1e-300}));
    CHECK_THROWS_AS(ew_binary(a, Tensor::constant({2}, {1.0, 1e-9}), EwKind::Div, 1e-6),
                    DivisionDomain);
}

TEST_CASE("division gradient matches finite differences") {
    Rng rng(7);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor a = random_tensor(rng, {2, 3}, -2.0, 2.0, true);
        Tensor b = random_tensor(rng, {1, 3}, 0.5, 2.0, true);
        double err = gradcheck(
            [](const std::vector<Tensor>& in) { return sum_all(in[0] / in[1]); }, {a, b});
        CHECK(err < 1e-5);
    }
}

TEST_CASE("broadcast equals materialized tile") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        Shape full = {2, 3, 2, 2};
        Shape small = full;
        for (auto& e : small)
            if (rng.uniform() < 0.5) e = 1;
        Tensor a = random_tensor(rng, full);
        Tensor b = random_tensor(rng, small);
        Tensor tiled = tile_to(b, full);
        for (auto kind : {EwKind::Add, EwKind::Sub, EwKind::Mul}) {
            Tensor lhs = ew_binary(a, b, kind);
            Tensor rhs = ew_binary(a, tiled, kind);
            CHECK((lhs.values() == rhs.values()).all());
        }
    }
}

TEST_CASE("reduce_moments basics") {
    Tensor c = Tensor::constant({3, 4}, 5.0);
    auto [m, v] = reduce_moments(c, {0, 1});
    CHECK(m.value_at(0) == doctest::Approx(5.0));
    CHECK(v.value_at(0) == doctest::Approx(0.0));

    // hand-expanded oracle over axis 0
    Tensor x = Tensor::constant({2, 2}, {1, 3, 5, 7});
    auto [mean, var] = reduce_moments(x, {0});
    CHECK(mean.shape() == Shape{1, 2});
    CHECK(mean.value_at(0) == doctest::Approx(3.0));
    CHECK(mean.value_at(1) == doctest::Approx(5.0));
    CHECK(var.value_at(0) == doctest::Approx(4.0));
    CHECK(var.value_at(1) == doctest::Approx(4.0));

    // single-element reduction
    Tensor one = Tensor::constant({1, 3}, {2, 4, 8});
    auto [m1, v1] = reduce_moments(one, {0});
    CHECK(m1.value_at(1) == 4.0);
    CHECK(v1.value_at(1) == 0.0);

    CHECK_THROWS_AS(reduce_sum(x, {}), EmptyAxes);
    CHECK_THROWS_AS(reduce_sum(x, {2}), AxisOutOfRange);
}

TEST_CASE("moment shift properties") {
    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor x = random_tensor(rng, {3, 4, 2, 2});
        auto [m0, v0] = reduce_moments(x, {0, 2, 3});
        auto [m1, v1] = reduce_moments(shift(x, 2.5), {0, 2, 3});
        for (std::size_t i = 0; i < m0.size(); ++i) {
            CHECK(std::abs(m1.value_at(i) - m0.value_at(i) - 2.5) < 1e-10);
            CHECK(std::abs(v1.value_at(i) - v0.value_at(i)) < 1e-10);
        }
    }
}

TEST_CASE("linear layer") {
    Tensor eye = Tensor::constant({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    Tensor zero_b = Tensor::constant({3}, 0.0);
    Tensor x = Tensor::constant({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor y = linear(x, eye, zero_b);
    CHECK((y.values() == x.values()).all());

    Tensor tiny = linear(Tensor::constant({1, 1}, {2.0}), Tensor::constant({1, 1}, {3.0}),
                         Tensor::constant({1}, {1.0}));
    CHECK(tiny.value_at(0) == 7.0);

    CHECK_THROWS_AS(linear(x, Tensor::constant({2, 3}, 0.0), zero_b), ShapeMismatch);

    Rng rng(5);
    Tensor xr = random_tensor(rng, {4, 3}, -1, 1, true);
    Tensor w = random_tensor(rng, {3, 2}, -1, 1, true);
    Tensor b = random_tensor(rng, {2}, -1, 1, true);
    double err = gradcheck(
        [](const std::vector<Tensor>& in) { return sum_all(linear(in[0], in[1], in[2])); },
        {xr, w, b});
    CHECK(err < 1e-5);
}

TEST_CASE("backward basics") {
    Tensor x = Tensor::leaf({2, 2}, {1, 2, 3, 4});
    GradientMap gm = backward(sum_all(x));
    CHECK((gm.at(x).values() == 1.0).all());

    Tensor y = Tensor::leaf({3}, {1, -2, 3});
    GradientMap gm2 = backward(sum_all(y * y));
    CHECK(gm2.at(y).values()[0] == doctest::Approx(2.0));
    CHECK(gm2.at(y).values()[1] == doctest::Approx(-4.0));
    CHECK(gm2.at(y).values()[2] == doctest::Approx(6.0));
}

TEST_CASE("backward accumulates over reused tensors") {
    Tensor x = Tensor::leaf({4}, {1, 2, 3, 4});
    GradientMap gm = backward(sum_all(x + x));
    CHECK((gm.at(x).values() == 2.0).all());
}

TEST_CASE("backward error paths") {
    Tensor x = Tensor::leaf({2}, {1, 2});
    CHECK_THROWS_AS(backward(x), NonScalarLoss);
    Tensor loss = sum_all(x);
    backward(loss);
    CHECK_THROWS_AS(backward(loss), AlreadyConsumed);
}

TEST_CASE("finite_diff_grad basics") {
    Tensor x = Tensor::constant({3}, {1, 2, 3});
    Tensor g = finite_diff_grad([](const Tensor& t) { return sum_all(t).scalar_value(); },
                                x, 1e-6);
    CHECK(max_rel_err(Array::Ones(3), g.values()) < 1e-9);

    Tensor p = Tensor::constant({1}, {3.0});
    Tensor g2 = finite_diff_grad(
        [](const Tensor& t) { return t.value_at(0) * t.value_at(0); }, p, 1e-6);
    CHECK(std::abs(g2.value_at(0) - 6.0) < 1e-6);

    CHECK_THROWS_AS(finite_diff_grad([](const Tensor&) { return 0.0; }, x, 0.0),
                    InvalidArgument);
    int calls = 0;
    CHECK_THROWS_AS(finite_diff_grad(
                        [&calls](const Tensor&) { return static_cast<double>(calls++); },
                        x, 1e-6),
                    NonDeterministicFunction);
}

TEST_CASE("finite differences agree with backward on a BN input") {
    Rng rng(17);
    Tensor x = random_tensor(rng, {3, 2, 2, 2}, -1.5, 1.5, true);
    auto build = [](const Tensor& probe) {
        ChannelAffine affine = ChannelAffine::from_values(
            Array::Constant(2, 1.3), Array::Constant(2, -0.2), false);
        BranchStats stats = BranchStats::init(1, 2, 0.1, StatsMode::BatchStats, false);
        return sum_all(square(bn_forward(probe, affine, stats)));
    };
    Tensor loss = build(x);
    GradientMap gm = backward(loss);
    Tensor numeric = finite_diff_grad(
        [&](const Tensor& t) { return build(t).scalar_value(); }, x, 1e-6);
    CHECK(max_rel_err(gm.at(x).values(), numeric.values()) < 1e-4);
}

TEST_CASE("gradient fidelity across the op set, 20 seeds") {
    for (int seed = 0; seed < 20; ++seed) {
        Rng rng(100 + seed);
        Tensor a = random_tensor(rng, {2, 3}, -2, 2, true);
        Tensor b = random_tensor(rng, {1, 3}, 0.5, 2.0, true);
        Tensor w = random_tensor(rng, {3, 4}, -1, 1, true);
        Tensor bias = random_tensor(rng, {4}, -1, 1, true);
        Tensor c4 = random_tensor(rng, {2, 3, 2, 2}, -2, 2, true);
        Tensor cw = random_tensor(rng, {3, 2}, -1, 1, true);
        Tensor cb = random_tensor(rng, {2}, -1, 1, true);
        Tensor al = random_tensor(rng, {5}, -1, 1, true);

        struct Case {
            const char* name;
            std::function<Tensor(const std::vector<Tensor>&)> build;
            std::vector<Tensor> leaves;
        };
        std::vector<Case> cases = {
            {"add", [](const std::vector<Tensor>& in) { return sum_all(in[0] + in[1]); },
             {a, b}},
            {"sub", [](const std::vector<Tensor>& in) { return sum_all(in[0] - in[1]); },
             {a, b}},
            {"mul",
             [](const std::vector<Tensor>& in) { return sum_all(square(in[0] * in[1])); },
             {a, b}},
            {"div", [](const std::vector<Tensor>& in) { return sum_all(in[0] / in[1]); },
             {a, b}},
            {"moments",
             [](const std::vector<Tensor>& in) {
                 auto [m, v] = reduce_moments(in[0], {0, 2, 3});
                 return sum_all(m) + sum_all(square(v));
             },
             {c4}},
            {"linear",
             [](const std::vector<Tensor>& in) {
                 return mean_all(tanh(linear(in[0], in[1], in[2])));
             },
             {a, w, bias}},
            {"channel_linear",
             [](const std::vector<Tensor>& in) {
                 return mean_all(square(channel_linear(in[0], in[1], in[2])));
             },
             {c4, cw, cb}},
            {"unaries",
             [](const std::vector<Tensor>& in) {
                 return sum_all(sqrt(shift(square(in[0]), 0.5))) + sum_all(relu(in[0])) +
                        sum_all(min_zero(in[0])) + sum_all(exp(scale(in[0], 0.3)));
             },
             {a}},
            {"softmax",
             [](const std::vector<Tensor>& in) {
                 return sum_all(square(softmax(in[0])));
             },
             {al}},
            {"softmax_ce",
             [](const std::vector<Tensor>& in) {
                 return softmax_cross_entropy(in[0], {1, 0});
             },
             {random_tensor(rng, {2, 3}, -2, 2, true)}},
            {"element_scale_by",
             [](const std::vector<Tensor>& in) {
                 return sum_all(scale_by(in[0], element(in[1], 2)));
             },
             {a, al}},
        };
        for (auto& c : cases) {
            INFO(c.name << " seed " << seed);
            CHECK(gradcheck(c.build, c.leaves) < 1e-4);
        }
    }
}

TEST_CASE("softmax cross entropy values and errors") {
    Tensor uniform = Tensor::constant({2, 2}, 0.0);
    Tensor ce = softmax_cross_entropy(uniform, {0, 1});
    CHECK(ce.scalar_value() == doctest::Approx(std::log(2.0)));
    CHECK_THROWS_AS(softmax_cross_entropy(uniform, {0, 2}), LabelOutOfRange);
    CHECK_THROWS_AS(softmax_cross_entropy(uniform, {0}), ShapeMismatch);
}

TEST_CASE("tensor file round trip is bit exact") {
    Rng rng(23);
    Tensor t = random_tensor(rng, {2, 3, 1, 2});
    std::string path = (std::filesystem::temp_directory_path() / "sbn_t.sbnt").string();
    write_tensor(path, t);
    Tensor back = read_tensor(path);
    CHECK(back.shape() == t.shape());
    for (std::size_t i = 0; i < t.size(); ++i) {
        double x = t.value_at(i), y = back.value_at(i);
        CHECK(std::memcmp(&x, &y, sizeof(double)) == 0);
    }

    // corrupt header
    {
        std::ofstream os(path, std::ios::binary);
        os << "BAD!";
    }
    CHECK_THROWS_AS(read_tensor(path), CorruptTensorFile);
    std::filesystem::remove(path);
}

TEST_CASE("tensor directory checkpoint") {
    Rng rng(29);
    Tensor g = random_tensor(rng, {3});
    Tensor b = random_tensor(rng, {3});
    auto dir = (std::filesystem::temp_directory_path() / "sbn_ckpt").string();
    save_tensor_dir(dir, {{"gamma", g}, {"beta", b}});
    auto roles = load_tensor_dir(dir);
    REQUIRE(roles.size() == 2);
    CHECK(roles[0].first == "gamma");
    CHECK((roles[0].second.values() == g.values()).all());
    CHECK((roles[1].second.values() == b.values()).all());
    std::filesystem::remove_all(dir);
}

TEST_CASE("finiteness checking") {
    Tensor ok = Tensor::constant({2}, {1.0, 2.0});
    CHECK_NOTHROW(check_finite(ok));
    Tensor bad = Tensor::constant({2}, {1.0, std::numeric_limits<double>::quiet_NaN()});
    CHECK(!bad.all_finite());
    CHECK_THROWS_AS(check_finite(bad), NonFiniteValue);
}
