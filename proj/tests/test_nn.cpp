#include "detpo/nn.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

using namespace detpo;

namespace {

MlpNet random_net(GaussianRng& rng, std::vector<int> sizes, HiddenActivation hidden,
                  OutputActivation out, double scale = 1.0) {
    MlpNet net(std::move(sizes), hidden, out, scale);
    net.init_uniform(rng);
    return net;
}

double loss_of(const MlpNet& net, const std::vector<double>& input,
               const std::vector<double>& output_grad) {
    // linear functional sum_o g_o * y_o(x); its gradient w.r.t. anything is
    // exactly what backward() should return
    const std::vector<double> y = net.forward(input);
    double s = 0.0;
    for (std::size_t o = 0; o < y.size(); ++o) s += output_grad[o] * y[o];
    return s;
}

}  // namespace

TEST_CASE("zero network maps everything to zero") {
    MlpNet net({2, 4, 1}, HiddenActivation::relu, OutputActivation::linear);
    const std::vector<double> y = net.forward({0.3, -1.7});
    CHECK(y.size() == 1);
    CHECK(y[0] == 0.0);
}

TEST_CASE("one-layer identity passes values through") {
    MlpNet net({1, 1}, HiddenActivation::relu, OutputActivation::linear);
    net.weights()[0][0] = 1.0;
    net.bump_stamp();
    CHECK(net.forward({0.5})[0] == 0.5);
}

TEST_CASE("scaled_tanh output saturates at the scale") {
    MlpNet net({1, 1}, HiddenActivation::relu, OutputActivation::scaled_tanh, 5.0);
    net.weights()[0][0] = 1.0;
    net.bump_stamp();
    CHECK(net.forward({100.0})[0] == Catch::Approx(5.0).margin(1e-12));
    CHECK(net.forward({-100.0})[0] == Catch::Approx(-5.0).margin(1e-12));
    CHECK(std::abs(net.forward({0.7})[0]) < 5.0);
}

TEST_CASE("width mismatches are rejected") {
    MlpNet net({2, 3, 1}, HiddenActivation::relu, OutputActivation::linear);
    CHECK_THROWS_AS(net.forward({1.0}), std::invalid_argument);
    ForwardTape tape;
    net.forward({1.0, 2.0}, tape);
    GradientSet g;
    CHECK_THROWS_AS(net.backward(tape, {1.0, 1.0}, g), std::invalid_argument);
}

TEST_CASE("stale tapes are rejected after the net mutates") {
    GaussianRng rng(1);
    MlpNet net = random_net(rng, {2, 3, 1}, HiddenActivation::tanh_, OutputActivation::linear);
    ForwardTape tape;
    net.forward({0.1, 0.2}, tape);
    MlpNet src = net;
    soft_update(net, src, 0.5);  // mutation bumps the stamp
    GradientSet g;
    CHECK_THROWS_AS(net.backward(tape, {1.0}, g), std::logic_error);
}

TEST_CASE("zero output gradient produces a zero GradientSet") {
    GaussianRng rng(2);
    MlpNet net = random_net(rng, {3, 5, 2}, HiddenActivation::relu, OutputActivation::linear);
    ForwardTape tape;
    net.forward({0.1, -0.4, 0.9}, tape);
    GradientSet g;
    net.backward(tape, {0.0, 0.0}, g);
    for (const auto& layer : g.dw)
        for (double v : layer) CHECK(v == 0.0);
    for (double v : g.dinput) CHECK(v == 0.0);
}

TEST_CASE("input gradient of a linear single layer equals the weight row") {
    MlpNet net({3, 1}, HiddenActivation::relu, OutputActivation::linear);
    net.weights()[0] = {0.5, -1.25, 2.0};
    net.bump_stamp();
    ForwardTape tape;
    net.forward({1.0, 2.0, 3.0}, tape);
    GradientSet g;
    net.backward(tape, {1.0}, g);
    CHECK(g.dinput[0] == 0.5);
    CHECK(g.dinput[1] == -1.25);
    CHECK(g.dinput[2] == 2.0);
}

TEST_CASE("reverse-mode gradients match central finite differences") {
    // 100 random small nets; checks every parameter and the input gradient
    GaussianRng rng(42);
    const double h = 1e-5;
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const int in = 1 + static_cast<int>(rng.uniform01() * 4);
        const int hid = 2 + static_cast<int>(rng.uniform01() * 6);
        const int out = 1 + static_cast<int>(rng.uniform01() * 3);
        const HiddenActivation ha =
            trial % 2 == 0 ? HiddenActivation::relu : HiddenActivation::tanh_;
        const OutputActivation oa =
            trial % 3 == 0 ? OutputActivation::scaled_tanh : OutputActivation::linear;
        MlpNet net = random_net(rng, {in, hid, hid, out}, ha, oa, 2.0);

        std::vector<double> input(in), output_grad(out);
        for (double& v : input) v = rng.standard_normal();
        for (double& v : output_grad) v = rng.standard_normal();

        ForwardTape tape;
        net.forward(input, tape);
        GradientSet g;
        net.backward(tape, output_grad, g);

        for (int l = 0; l < net.layers(); ++l) {
            auto check_param = [&](std::vector<double>& arr, const std::vector<double>& grad) {
                for (std::size_t i = 0; i < arr.size(); ++i) {
                    const double saved = arr[i];
                    arr[i] = saved + h;
                    const double up = loss_of(net, input, output_grad);
                    arr[i] = saved - h;
                    const double dn = loss_of(net, input, output_grad);
                    arr[i] = saved;
                    const double fd = (up - dn) / (2 * h);
                    const double err =
                        std::abs(fd - grad[i]) / std::max({1.0, std::abs(fd), std::abs(grad[i])});
                    worst = std::max(worst, err);
                }
            };
            check_param(net.weights()[l], g.dw[l]);
            check_param(net.biases()[l], g.db[l]);
        }
        for (int i = 0; i < in; ++i) {
            std::vector<double> shifted = input;
            shifted[i] = input[i] + h;
            const double up = loss_of(net, shifted, output_grad);
            shifted[i] = input[i] - h;
            const double dn = loss_of(net, shifted, output_grad);
            const double fd = (up - dn) / (2 * h);
            const double err = std::abs(fd - g.dinput[i]) /
                               std::max({1.0, std::abs(fd), std::abs(g.dinput[i])});
            worst = std::max(worst, err);
        }
    }
    CHECK(worst <= 1e-4);
}

TEST_CASE("forward is a pure function of net and input") {
    GaussianRng rng(7);
    MlpNet net = random_net(rng, {2, 8, 1}, HiddenActivation::relu, OutputActivation::linear);
    const std::vector<double> a = net.forward({0.2, -0.3});
    const std::vector<double> b = net.forward({0.2, -0.3});
    CHECK(a == b);
}

TEST_CASE("adam: zero gradients leave parameters unchanged") {
    GaussianRng rng(9);
    MlpNet net = random_net(rng, {2, 4, 1}, HiddenActivation::relu, OutputActivation::linear);
    const MlpNet before = net;
    AdamState opt(net, 1e-2);
    ForwardTape tape;
    net.forward({0.1, 0.1}, tape);
    GradientSet g;
    net.backward(tape, {0.0}, g);
    adam_step(net, g, opt);
    for (int l = 0; l < net.layers(); ++l)
        CHECK(net.weights()[l] == before.weights()[l]);
}

TEST_CASE("adam: bias-corrected first step moves by about lr in the gradient direction") {
    MlpNet net({1, 1}, HiddenActivation::relu, OutputActivation::linear);
    net.weights()[0][0] = 2.0;
    net.bump_stamp();
    AdamState opt(net, 1e-2);
    GradientSet g;
    g.dw = {{3.7}};  // constant positive gradient
    g.db = {{0.0}};
    g.dinput = {0.0};
    adam_step(net, g, opt);
    CHECK(net.weights()[0][0] == Catch::Approx(2.0 - 1e-2).epsilon(1e-4));
    CHECK(opt.step_count() == 1);
}

TEST_CASE("adam minimizes a scalar quadratic to 1e-3 within 5000 steps") {
    MlpNet net({1, 1}, HiddenActivation::relu, OutputActivation::linear);
    net.weights()[0][0] = 0.0;
    net.bump_stamp();
    AdamState opt(net, 1e-2);
    GradientSet g;
    g.db = {{0.0}};
    g.dinput = {0.0};
    for (int i = 0; i < 5000; ++i) {
        const double w = net.weights()[0][0];
        g.dw = {{2.0 * (w - 3.0)}};  // d/dw (w-3)^2
        adam_step(net, g, opt);
    }
    CHECK(net.weights()[0][0] == Catch::Approx(3.0).margin(1e-3));
}

TEST_CASE("adam rejects non-finite gradients and leaves parameters intact") {
    GaussianRng rng(11);
    MlpNet net = random_net(rng, {2, 3, 1}, HiddenActivation::relu, OutputActivation::linear);
    const MlpNet before = net;
    AdamState opt(net, 1e-3);
    GradientSet g;
    g.dw.resize(net.layers());
    g.db.resize(net.layers());
    for (int l = 0; l < net.layers(); ++l) {
        g.dw[l].assign(net.weights()[l].size(), 0.0);
        g.db[l].assign(net.biases()[l].size(), 0.0);
    }
    g.dw[1][0] = std::nan("");
    CHECK_THROWS_AS(adam_step(net, g, opt), divergence_error);
    for (int l = 0; l < net.layers(); ++l)
        CHECK(net.weights()[l] == before.weights()[l]);
}

TEST_CASE("soft_update blends and converges") {
    SECTION("tau = 1 copies the source exactly") {
        GaussianRng rng(13);
        MlpNet src = random_net(rng, {2, 4, 1}, HiddenActivation::relu, OutputActivation::linear);
        MlpNet tgt = random_net(rng, {2, 4, 1}, HiddenActivation::relu, OutputActivation::linear);
        soft_update(tgt, src, 1.0);
        for (int l = 0; l < src.layers(); ++l) {
            CHECK(tgt.weights()[l] == src.weights()[l]);
            CHECK(tgt.biases()[l] == src.biases()[l]);
        }
    }
    SECTION("tau = 0.5 scalar midpoint") {
        MlpNet src({1, 1}, HiddenActivation::relu, OutputActivation::linear);
        MlpNet tgt({1, 1}, HiddenActivation::relu, OutputActivation::linear);
        src.weights()[0][0] = 2.0;
        src.bump_stamp();
        soft_update(tgt, src, 0.5);
        CHECK(tgt.weights()[0][0] == 1.0);
    }
    SECTION("repeated updates converge geometrically to the source") {
        GaussianRng rng(17);
        MlpNet src = random_net(rng, {2, 4, 1}, HiddenActivation::relu, OutputActivation::linear);
        MlpNet tgt = random_net(rng, {2, 4, 1}, HiddenActivation::relu, OutputActivation::linear);
        double prev_gap = 1e300;
        for (int it = 0; it < 50; ++it) {
            soft_update(tgt, src, 0.2);
            double gap = 0.0;
            for (int l = 0; l < src.layers(); ++l)
                for (std::size_t i = 0; i < src.weights()[l].size(); ++i)
                    gap = std::max(gap, std::abs(src.weights()[l][i] - tgt.weights()[l][i]));
            CHECK(gap <= 0.8 * prev_gap + 1e-15);
            prev_gap = gap;
        }
        CHECK(prev_gap < 1e-4);
    }
    SECTION("incongruent nets are rejected") {
        MlpNet a({2, 4, 1}, HiddenActivation::relu, OutputActivation::linear);
        MlpNet b({2, 5, 1}, HiddenActivation::relu, OutputActivation::linear);
        CHECK_THROWS_AS(soft_update(a, b, 0.5), std::invalid_argument);
    }
    SECTION("blend is a convex combination per parameter") {
        GaussianRng rng(19);
        MlpNet src = random_net(rng, {3, 6, 2}, HiddenActivation::tanh_, OutputActivation::linear);
        MlpNet tgt = random_net(rng, {3, 6, 2}, HiddenActivation::tanh_, OutputActivation::linear);
        MlpNet before = tgt;
        soft_update(tgt, src, 0.3);
        CHECK(tgt.finite());
        for (int l = 0; l < src.layers(); ++l)
            for (std::size_t i = 0; i < src.weights()[l].size(); ++i) {
                const double lo = std::min(before.weights()[l][i], src.weights()[l][i]);
                const double hi = std::max(before.weights()[l][i], src.weights()[l][i]);
                CHECK(tgt.weights()[l][i] >= lo - 1e-15);
                CHECK(tgt.weights()[l][i] <= hi + 1e-15);
            }
    }
}

TEST_CASE("checkpoint round-trip is bit-exact") {
    GaussianRng rng(23);
    MlpNet net = random_net(rng, {3, 64, 64, 1}, HiddenActivation::relu,
                            OutputActivation::scaled_tanh, 8.0);
    std::ostringstream out;
    save_net(net, out);
    std::istringstream in(out.str());
    const MlpNet loaded = load_net(in);
    CHECK(loaded.layer_sizes() == net.layer_sizes());
    CHECK(loaded.hidden_activation() == net.hidden_activation());
    CHECK(loaded.output_activation() == net.output_activation());
    CHECK(loaded.output_scale() == net.output_scale());
    for (int l = 0; l < net.layers(); ++l) {
        CHECK(loaded.weights()[l] == net.weights()[l]);
        CHECK(loaded.biases()[l] == net.biases()[l]);
    }
}

TEST_CASE("corrupt checkpoints are rejected") {
    std::istringstream bad("mlp 2\n");
    CHECK_THROWS_AS(load_net(bad), std::runtime_error);
    std::istringstream truncated("mlp 1\nsizes 2 1\nhidden relu\noutput linear 1\nlayer 0\n0.5\n");
    CHECK_THROWS_AS(load_net(truncated), std::runtime_error);
}
