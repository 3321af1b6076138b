#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "ssvtcn/gradcheck.hpp"
#include "ssvtcn/mat.hpp"
#include "ssvtcn/tcn.hpp"

using namespace ssvtcn;

namespace {

TensorPtr column(std::vector<double> v) {
    const std::size_t n = v.size();
    return Tensor::make({n, 1}, std::move(v), false);
}

Mat random_window(std::size_t rows, std::size_t cols, Rng& rng) {
    Mat m(rows, cols);
    for (auto& v : m.data) {
        v = rng.uniform(-2.0, 2.0);
    }
    return m;
}

}  // namespace

TEST_CASE("causal dilated convolution") {
    SECTION("width-1 unit kernel is the identity") {
        Conv1dLayer layer(1, 1, 1, 1);
        layer.kernel->values = {1.0};
        auto out = causal_dilated_conv(column({0.5, -2.0, 3.0}), layer);
        CHECK(out->values == std::vector<double>{0.5, -2.0, 3.0});
    }

    SECTION("two-tap kernel, dilation 1") {
        Conv1dLayer layer(2, 1, 1, 1);
        layer.kernel->values = {1.0, 1.0};
        auto out = causal_dilated_conv(column({1.0, 2.0, 3.0, 4.0}), layer);
        CHECK(out->values == std::vector<double>{1.0, 3.0, 5.0, 7.0});
    }

    SECTION("two-tap kernel, dilation 2 skips one step back") {
        Conv1dLayer layer(2, 1, 1, 2);
        layer.kernel->values = {1.0, 1.0};
        auto out = causal_dilated_conv(column({1.0, 2.0, 3.0, 4.0}), layer);
        CHECK(out->values == std::vector<double>{1.0, 2.0, 4.0, 6.0});
    }

    SECTION("channel mismatch is an error") {
        Conv1dLayer layer(2, 3, 1, 1);
        CHECK_THROWS_AS(causal_dilated_conv(column({1.0, 2.0}), layer), shape_error);
    }

    SECTION("output length always equals input length") {
        Rng rng(5);
        for (std::size_t w : {1u, 2u, 3u, 5u}) {
            for (std::size_t d : {1u, 2u, 4u, 16u}) {
                Conv1dLayer layer(w, 2, 3, d);
                layer.init(rng.split("l"));
                Mat win = random_window(7, 2, rng);
                auto out = causal_dilated_conv(constant(win), layer);
                REQUIRE(out->shape == std::vector<std::size_t>{7, 3});
            }
        }
    }

    SECTION("gradients match finite differences") {
        Rng rng(21);
        Conv1dLayer layer(3, 2, 2, 2);
        layer.init(rng.split("init"));
        Mat win = random_window(6, 2, rng);

        auto loss_value = [&](const std::vector<double>& kernel,
                              const std::vector<double>& bias) {
            Conv1dLayer probe(3, 2, 2, 2);
            probe.kernel->values = kernel;
            probe.bias->values = bias;
            NoGradGuard off;
            auto out = causal_dilated_conv(constant(win), probe);
            double s = 0.0;
            for (std::size_t i = 0; i < out->values.size(); ++i) {
                s += out->values[i] * out->values[i];
            }
            return s;
        };

        auto out = causal_dilated_conv(constant(win), layer);
        sum(mul(out, out))->backward();
        auto fd_k = finite_diff_grad(
            [&](const std::vector<double>& k) { return loss_value(k, layer.bias->values); },
            layer.kernel->values, 1e-5);
        auto fd_b = finite_diff_grad(
            [&](const std::vector<double>& b) { return loss_value(layer.kernel->values, b); },
            layer.bias->values, 1e-5);
        CHECK(max_rel_error(layer.kernel->grad, fd_k) < 1e-4);
        CHECK(max_rel_error(layer.bias->grad, fd_b) < 1e-4);
    }
}

TEST_CASE("residual block") {
    SECTION("zero weights pass a non-negative input through") {
        ResidualBlock block(2, 2, 3, 1);  // all parameters start at zero
        Mat win(4, 2);
        for (std::size_t i = 0; i < win.data.size(); ++i) {
            win.data[i] = static_cast<double>(i) * 0.25;
        }
        auto out = block.forward(constant(win));
        CHECK(out->values == win.data);
    }

    SECTION("single timestep with hand-set 1x1 kernels") {
        // conv1: y = 2x + 1, conv2: y = -x + 0.5, skip: identity (C_in == C_out)
        ResidualBlock block(1, 1, 1, 1);
        block.conv1.kernel->values = {2.0};
        block.conv1.bias->values = {1.0};
        block.conv2.kernel->values = {-1.0};
        block.conv2.bias->values = {0.5};
        const double x = 0.8;
        auto out = block.forward(column({x}));
        const double inner = -std::max(0.0, 2.0 * x + 1.0) + 0.5;
        const double expect = std::max(0.0, x + inner);
        CHECK(out->values[0] == Catch::Approx(expect).margin(1e-15));
    }

    SECTION("perturbing timestep t leaves all earlier outputs unchanged") {
        Rng rng(3);
        ResidualBlock block(3, 5, 3, 2);
        block.init(rng.split("block"));
        Mat base = random_window(8, 3, rng);
        auto ref = block.forward(constant(base));
        for (std::size_t t = 1; t < 8; ++t) {
            Mat poked = base;
            poked.at(t, 1) += 5.0;
            auto out = block.forward(constant(poked));
            for (std::size_t s = 0; s < t; ++s) {
                for (std::size_t c = 0; c < 5; ++c) {
                    REQUIRE(out->values[s * 5 + c] == ref->values[s * 5 + c]);
                }
            }
        }
    }
}

TEST_CASE("tcn forward") {
    TcnConfig cfg{.levels = 3, .channels = 4, .kernel = 3, .input_dim = 2, .classes = 4};

    SECTION("zero classifier head gives uniform probabilities") {
        Tcn net(cfg, Rng(17));
        std::fill(net.head_weight()->values.begin(), net.head_weight()->values.end(), 0.0);
        std::fill(net.head_bias()->values.begin(), net.head_bias()->values.end(), 0.0);
        Rng rng(2);
        Mat win = random_window(8, 2, rng);
        TcnOutput out = net.forward(constant(win));
        for (double v : out.logits->values) {
            CHECK(v == 0.0);
        }
        for (double p : softmax(out.logits)->values) {
            CHECK(p == Catch::Approx(0.25).margin(1e-15));
        }
    }

    SECTION("hidden sequence keeps the window length, embedding is the last row") {
        Tcn net(cfg, Rng(17));
        Rng rng(4);
        Mat win = random_window(10, 2, rng);
        TcnOutput out = net.forward(constant(win));
        REQUIRE(out.hidden_sequence->shape == std::vector<std::size_t>{10, 4});
        REQUIRE(out.embedding->shape == std::vector<std::size_t>{4});
        for (std::size_t c = 0; c < 4; ++c) {
            CHECK(out.embedding->values[c] == out.hidden_sequence->values[9 * 4 + c]);
        }
    }

    SECTION("wrong feature dimension names the expected width") {
        Tcn net(cfg, Rng(17));
        Rng rng(4);
        Mat win = random_window(8, 3, rng);
        CHECK_THROWS_WITH(net.forward(constant(win)), Catch::Matchers::ContainsSubstring("2"));
    }

    SECTION("full-network causality at the last timestep") {
        for (std::size_t levels : {1u, 4u}) {
            TcnConfig c = cfg;
            c.levels = levels;
            Tcn net(c, Rng(31));
            Rng rng(6);
            Mat base = random_window(12, 2, rng);
            auto ref = net.forward(constant(base));
            Mat poked = base;
            poked.at(11, 0) += 3.0;
            poked.at(11, 1) -= 2.0;
            auto out = net.forward(constant(poked));
            for (std::size_t s = 0; s + 1 < 12; ++s) {
                for (std::size_t ch = 0; ch < c.channels; ++ch) {
                    REQUIRE(out.hidden_sequence->values[s * c.channels + ch] ==
                            ref.hidden_sequence->values[s * c.channels + ch]);
                }
            }
        }
    }

    SECTION("identical seed and input give identical outputs") {
        Tcn a(cfg, Rng(123));
        Tcn b(cfg, Rng(123));
        Rng rng(8);
        Mat win = random_window(8, 2, rng);
        auto oa = a.forward(constant(win));
        auto ob = b.forward(constant(win));
        CHECK(oa.logits->values == ob.logits->values);
        CHECK(oa.hidden_sequence->values == ob.hidden_sequence->values);
    }
}

TEST_CASE("receptive field closed form") {
    CHECK(receptive_field({.levels = 1, .channels = 1, .kernel = 2}) == 3);
    CHECK(receptive_field({.levels = 1, .channels = 1, .kernel = 1}) == 1);
    CHECK(receptive_field({.levels = 8, .channels = 8, .kernel = 3}) == 1021);
}

TEST_CASE("every block parameter passes the finite-difference check") {
    TcnConfig cfg{.levels = 2, .channels = 3, .kernel = 2, .input_dim = 2, .classes = 4};
    Tcn net(cfg, Rng(77));
    Rng rng(9);
    Mat win = random_window(6, 2, rng);

    auto loss = [&]() {
        TcnOutput out = net.forward(constant(win));
        auto p = softmax(out.logits);
        return add(scale(log_clamped(select(p, 2)), -1.0), sum(mul(out.embedding, out.embedding)));
    };

    std::vector<std::pair<std::string, TensorPtr>> params;
    net.collect_parameters(params);
    REQUIRE(params.size() == 2 * 2 + 2 + 2 + 2);  // conv pairs + block0 skip + head

    auto value = loss();
    value->backward();
    for (auto& [name, p] : params) {
        auto fd = finite_diff_grad(
            [&](const std::vector<double>& v) {
                std::vector<double> saved = p->values;
                p->values = v;
                NoGradGuard off;
                const double out = loss()->item();
                p->values = saved;
                return out;
            },
            p->values, 1e-5);
        INFO(name);
        CHECK(max_rel_error(p->grad, fd) < 1e-4);
    }
}
