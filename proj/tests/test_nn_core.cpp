#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "ssvtcn/adam.hpp"
#include "ssvtcn/gradcheck.hpp"
#include "ssvtcn/rng.hpp"
#include "ssvtcn/tensor.hpp"

using namespace ssvtcn;

namespace {

std::vector<double> random_values(std::size_t n, Rng& rng, double lo = -2.0, double hi = 2.0) {
    std::vector<double> v(n);
    for (auto& x : v) {
        x = rng.uniform(lo, hi);
        // keep relu kinks away from the sample point
        if (std::fabs(x) < 1e-3) {
            x = 1e-3;
        }
    }
    return v;
}

}  // namespace

TEST_CASE("relu forward and backward") {
    auto x = Tensor::vec({-1.0, 0.0, 2.0});
    auto y = relu(x);
    CHECK(y->values == std::vector<double>{0.0, 0.0, 2.0});

    auto neg = Tensor::vec({-3.0, -0.5, -1e-9});
    for (double v : relu(neg)->values) {
        CHECK(v == 0.0);
    }

    auto p = Tensor::vec({-1.0, 2.0}, true);
    sum(relu(p))->backward();
    auto fd = finite_diff_grad(
        [](const std::vector<double>& v) {
            double s = 0.0;
            for (double e : v) {
                s += std::max(0.0, e);
            }
            return s;
        },
        {-1.0, 2.0}, 1e-5);
    CHECK(max_rel_error(p->grad, fd) < 1e-6);
    CHECK(p->grad == std::vector<double>{0.0, 1.0});
}

TEST_CASE("softmax values and invariants") {
    auto flat = softmax(Tensor::vec({0.0, 0.0, 0.0, 0.0}));
    for (double v : flat->values) {
        CHECK(v == Catch::Approx(0.25).margin(1e-15));
    }

    auto skew = softmax(Tensor::vec({0.0, std::log(3.0)}));
    CHECK(skew->values[0] == Catch::Approx(0.25).margin(1e-12));
    CHECK(skew->values[1] == Catch::Approx(0.75).margin(1e-12));

    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t m = 2 + rng.below(6);
        std::vector<double> logits = random_values(m, rng, -5.0, 5.0);
        auto p = softmax(Tensor::vec(logits));
        double total = 0.0;
        for (double v : p->values) {
            CHECK(v >= 0.0);
            total += v;
        }
        CHECK(std::fabs(total - 1.0) < 1e-12);

        const double shift = rng.uniform(-10.0, 10.0);
        std::vector<double> shifted = logits;
        for (double& v : shifted) {
            v += shift;
        }
        auto q = softmax(Tensor::vec(shifted));
        for (std::size_t i = 0; i < m; ++i) {
            CHECK(std::fabs(p->values[i] - q->values[i]) < 1e-12);
        }
    }

    const double inf = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(softmax(Tensor::vec({1.0, inf})), error);
    CHECK_THROWS_AS(softmax(Tensor::vec({std::nan(""), 0.0})), error);
}

TEST_CASE("adam step") {
    AdamConfig cfg{.lr = 0.1, .beta1 = 0.9, .beta2 = 0.999, .eps = 1e-8};

    SECTION("zero gradient leaves parameters unchanged") {
        std::vector<double> params = {1.0, -2.0};
        AdamState state(2);
        adam_step(params, {0.0, 0.0}, state, cfg);
        CHECK(params == std::vector<double>{1.0, -2.0});
        CHECK(state.step_count == 1);
    }

    SECTION("first step bias correction") {
        // g = 1 at t = 1: m_hat = v_hat = 1, so the update is lr / (1 + eps).
        std::vector<double> params = {0.0};
        AdamState state(1);
        adam_step(params, {1.0}, state, cfg);
        CHECK(state.first_moment[0] == Catch::Approx(0.1));
        CHECK(state.second_moment[0] == Catch::Approx(0.001));
        CHECK(params[0] == Catch::Approx(-cfg.lr / (1.0 + cfg.eps)).epsilon(1e-12));
    }

    SECTION("constant gradient does not grow the step") {
        std::vector<double> params = {0.0};
        AdamState state(1);
        adam_step(params, {0.7}, state, cfg);
        const double step1 = std::fabs(params[0]);
        const double before = params[0];
        adam_step(params, {0.7}, state, cfg);
        const double step2 = std::fabs(params[0] - before);
        CHECK(step2 <= step1 * (1.0 + 1e-6));
        CHECK(state.step_count == 2);
    }

    SECTION("shape mismatch is an error") {
        std::vector<double> params = {0.0};
        AdamState state(2);
        CHECK_THROWS_AS(adam_step(params, {1.0}, state, cfg), shape_error);
    }
}

TEST_CASE("backward on simple graphs") {
    SECTION("sum gives all-ones") {
        auto x = Tensor::vec({3.0, -1.0, 0.5}, true);
        sum(x)->backward();
        CHECK(x->grad == std::vector<double>{1.0, 1.0, 1.0});
    }

    SECTION("sum of squares") {
        auto x = Tensor::vec({1.0, 2.0}, true);
        sum(mul(x, x))->backward();
        CHECK(x->grad[0] == Catch::Approx(2.0));
        CHECK(x->grad[1] == Catch::Approx(4.0));
    }

    SECTION("gradients accumulate across uses") {
        auto x = Tensor::vec({2.0}, true);
        add(x, x)->backward();
        CHECK(x->grad[0] == Catch::Approx(2.0));
    }

    SECTION("non-scalar loss is rejected") {
        auto x = Tensor::vec({1.0, 2.0}, true);
        CHECK_THROWS_AS(relu(x)->backward(), shape_error);
    }

    SECTION("a cycle is detected rather than looping") {
        auto x = Tensor::scalar(1.0, true);
        auto y = scale(x, 2.0);
        x->parents.push_back(y);  // not constructible through the ops
        CHECK_THROWS_AS(y->backward(), error);
    }
}

TEST_CASE("composed losses match the finite-difference oracle") {
    Rng rng(99);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 4 + rng.below(4);
        auto x = Tensor::make({n}, random_values(n, rng), true);
        auto w = Tensor::make({n}, random_values(n, rng), true);

        auto loss_of = [&](const std::vector<double>& xs, const std::vector<double>& ws) {
            auto xv = Tensor::vec(xs);
            auto wv = Tensor::vec(ws);
            auto h = relu(mul(xv, wv));
            auto p = softmax(add(h, offset(scale(xv, 0.25), 0.1)));
            return sub(sum(mul(p, log_clamped(p))), select(exp(scale(wv, 0.5)), 1));
        };

        auto loss = [&]() {
            auto h = relu(mul(x, w));
            auto p = softmax(add(h, offset(scale(x, 0.25), 0.1)));
            return sub(sum(mul(p, log_clamped(p))), select(exp(scale(w, 0.5)), 1));
        }();
        loss->backward();
        CHECK(loss->item() == Catch::Approx(loss_of(x->values, w->values)->item()));

        auto fd_x = finite_diff_grad(
            [&](const std::vector<double>& xs) { return loss_of(xs, w->values)->item(); },
            x->values, 1e-5);
        auto fd_w = finite_diff_grad(
            [&](const std::vector<double>& ws) { return loss_of(x->values, ws)->item(); },
            w->values, 1e-5);
        CHECK(max_rel_error(x->grad, fd_x) < 1e-4);
        CHECK(max_rel_error(w->grad, fd_w) < 1e-4);
    }
}

TEST_CASE("finite_diff_grad sanity") {
    auto fd_sum = finite_diff_grad(
        [](const std::vector<double>& v) {
            double s = 0.0;
            for (double e : v) {
                s += e;
            }
            return s;
        },
        {0.3, -1.7, 4.0}, 1e-5);
    for (double g : fd_sum) {
        CHECK(g == Catch::Approx(1.0).margin(1e-8));
    }

    auto fd_sq = finite_diff_grad(
        [](const std::vector<double>& v) { return v[0] * v[0]; }, {3.0}, 1e-5);
    CHECK(fd_sq[0] == Catch::Approx(6.0).margin(1e-6));

    // softmax cross-entropy composite, oracle vs reverse mode
    auto logits = Tensor::vec({0.2, -1.0, 0.7}, true);
    auto loss = scale(log_clamped(select(softmax(logits), 2)), -1.0);
    loss->backward();
    auto fd = finite_diff_grad(
        [](const std::vector<double>& v) {
            double hi = *std::max_element(v.begin(), v.end());
            double z = 0.0;
            for (double e : v) {
                z += std::exp(e - hi);
            }
            return -std::log(std::exp(v[2] - hi) / z);
        },
        logits->values, 1e-5);
    CHECK(max_rel_error(logits->grad, fd) < 1e-4);
}

TEST_CASE("per-op gradients on random inputs") {
    Rng rng(7);
    auto check_unary = [&](auto make_node, auto eval) {
        for (int trial = 0; trial < 10; ++trial) {
            const std::size_t n = 3 + rng.below(4);
            auto x = Tensor::make({n}, random_values(n, rng), true);
            sum(make_node(x))->backward();
            auto fd = finite_diff_grad(
                [&](const std::vector<double>& v) {
                    double s = 0.0;
                    for (std::size_t i = 0; i < v.size(); ++i) {
                        s += eval(v, i);
                    }
                    return s;
                },
                x->values, 1e-5);
            REQUIRE(max_rel_error(x->grad, fd) < 1e-4);
        }
    };

    check_unary([](const TensorPtr& x) { return exp(x); },
                [](const std::vector<double>& v, std::size_t i) { return std::exp(v[i]); });
    check_unary([](const TensorPtr& x) { return scale(x, -1.7); },
                [](const std::vector<double>& v, std::size_t i) { return -1.7 * v[i]; });
    check_unary([](const TensorPtr& x) { return offset(x, 0.3); },
                [](const std::vector<double>& v, std::size_t i) { return v[i] + 0.3; });

    // linear: input, weight and bias gradients
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t n = 3;
        const std::size_t m = 4;
        auto x = Tensor::make({n}, random_values(n, rng), true);
        auto w = Tensor::make({n, m}, random_values(n * m, rng), true);
        auto b = Tensor::make({m}, random_values(m, rng), true);
        sum(linear(x, w, b))->backward();
        auto eval = [&](const std::vector<double>& xs, const std::vector<double>& ws,
                        const std::vector<double>& bs) {
            double s = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
                double y = bs[j];
                for (std::size_t i = 0; i < n; ++i) {
                    y += xs[i] * ws[i * m + j];
                }
                s += y;
            }
            return s;
        };
        auto fd_x = finite_diff_grad(
            [&](const std::vector<double>& v) { return eval(v, w->values, b->values); },
            x->values, 1e-5);
        auto fd_w = finite_diff_grad(
            [&](const std::vector<double>& v) { return eval(x->values, v, b->values); },
            w->values, 1e-5);
        auto fd_b = finite_diff_grad(
            [&](const std::vector<double>& v) { return eval(x->values, w->values, v); },
            b->values, 1e-5);
        REQUIRE(max_rel_error(x->grad, fd_x) < 1e-4);
        REQUIRE(max_rel_error(w->grad, fd_w) < 1e-4);
        REQUIRE(max_rel_error(b->grad, fd_b) < 1e-4);
    }
}

TEST_CASE("rng determinism and splitting") {
    Rng a(123456);
    Rng b(123456);
    for (int i = 0; i < 1000; ++i) {
        REQUIRE(a.next_u64() == b.next_u64());
    }
    CHECK(a.normal() == b.normal());
    CHECK(a.uniform() == b.uniform());

    // split depends only on seed and tag, not on consumption order
    Rng fresh(42);
    Rng drained(42);
    for (int i = 0; i < 17; ++i) {
        drained.next_u64();
    }
    CHECK(fresh.split("site").next_u64() == drained.split("site").next_u64());
    CHECK(fresh.split("a").next_u64() != fresh.split("b").next_u64());

    // shuffle is a permutation
    std::vector<int> v = {0, 1, 2, 3, 4, 5, 6, 7};
    Rng s(9);
    s.shuffle(v);
    std::vector<int> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7});
}

TEST_CASE("tensor shape checks") {
    CHECK_THROWS_AS(Tensor::make({2, 3}, {1.0, 2.0}), shape_error);
    CHECK_THROWS_AS(add(Tensor::vec({1.0}), Tensor::vec({1.0, 2.0})), shape_error);
    CHECK_THROWS_AS(select(Tensor::vec({1.0}), 3), shape_error);
    auto t = Tensor::vec({1.0, 2.0});
    CHECK_THROWS_AS(t->item(), shape_error);
}

TEST_CASE("log_clamped floors the argument") {
    auto x = Tensor::vec({1e-20, 0.5}, true);
    auto y = log_clamped(x);
    CHECK(y->values[0] == Catch::Approx(std::log(1e-12)));
    CHECK(y->values[1] == Catch::Approx(std::log(0.5)));
    sum(y)->backward();
    CHECK(x->grad[0] == 0.0);  // clamped region is flat
    CHECK(x->grad[1] == Catch::Approx(2.0));
}
