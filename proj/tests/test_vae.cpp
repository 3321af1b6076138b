#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "ssvtcn/gradcheck.hpp"
#include "ssvtcn/vae.hpp"

using namespace ssvtcn;

namespace {

constexpr double kUnitGaussConst = 0.9189385332046727;  // 0.5 * log(2 pi)

EncoderParams tiny_encoder() {
    EncoderParams p;
    p.hidden = LinearLayer(1, 1);
    p.mean = LinearLayer(1, 1);
    p.log_var = LinearLayer(1, 1);
    return p;
}

DecoderParams tiny_decoder() {
    DecoderParams p;
    p.hidden = LinearLayer(1, 1);
    p.embedding = LinearLayer(1, 1);
    p.raw = LinearLayer(1, 1);
    return p;
}

}  // namespace

TEST_CASE("config enforces the widening latent space") {
    CHECK_THROWS_AS(VaeConfig(8, 8, 11), config_error);
    CHECK_THROWS_AS(VaeConfig(8, 4, 11), config_error);
    CHECK_NOTHROW(VaeConfig(8, 9, 11));
    CHECK_THROWS_AS(VaeConfig(4, 8, 11, 0.0), config_error);
}

TEST_CASE("encode") {
    SECTION("zero parameters give a standard-normal posterior") {
        EncoderParams p;
        p.hidden = LinearLayer(3, 4);
        p.mean = LinearLayer(4, 5);
        p.log_var = LinearLayer(4, 5);
        auto g = encode(Tensor::vec({0.7, -1.0, 2.0}), p);
        for (double v : g.mean->values) {
            CHECK(v == 0.0);
        }
        for (double v : g.log_var->values) {
            CHECK(v == 0.0);
        }
    }

    SECTION("identity-like weights propagate the input to the mean") {
        EncoderParams p = tiny_encoder();
        p.hidden.weight->values = {1.0};
        p.mean.weight->values = {1.0};
        auto g = encode(Tensor::vec({0.42}), p);
        CHECK(g.mean->values[0] == Catch::Approx(0.42).margin(1e-12));
    }

    SECTION("dimension mismatch is an error") {
        EncoderParams p = tiny_encoder();
        CHECK_THROWS_AS(encode(Tensor::vec({1.0, 2.0}), p), shape_error);
    }
}

TEST_CASE("reparameterize") {
    LatentGaussian g{Tensor::vec({1.0, -2.0}), Tensor::vec({0.0, 0.0})};
    auto z0 = reparameterize(g, Tensor::vec({0.0, 0.0}));
    CHECK(z0->values == g.mean->values);

    LatentGaussian std_g{Tensor::vec({0.0, 0.0}), Tensor::vec({0.0, 0.0})};
    auto zn = reparameterize(std_g, Tensor::vec({0.3, -1.1}));
    CHECK(zn->values == std::vector<double>{0.3, -1.1});

    LatentGaussian wide{Tensor::vec({1.0}), Tensor::vec({std::log(4.0)})};
    auto z = reparameterize(wide, Tensor::vec({0.5}));
    CHECK(z->values[0] == Catch::Approx(2.0).margin(1e-12));

    SECTION("gradient reaches mean and log_var but not the noise") {
        auto mean = Tensor::vec({0.4}, true);
        auto log_var = Tensor::vec({-0.3}, true);
        auto noise = Tensor::vec({0.8});
        sum(reparameterize({mean, log_var}, noise))->backward();
        CHECK(mean->grad[0] == Catch::Approx(1.0));
        CHECK(log_var->grad[0] ==
              Catch::Approx(0.5 * std::exp(0.5 * -0.3) * 0.8).margin(1e-12));
        CHECK(noise->grad.empty());
    }

    SECTION("sample mean over many draws recovers the posterior mean") {
        Rng rng(2024);
        LatentGaussian g2{Tensor::vec({0.7}), Tensor::vec({std::log(2.25)})};
        const std::size_t draws = 10000;
        double acc = 0.0;
        for (std::size_t i = 0; i < draws; ++i) {
            acc += reparameterize(g2, Tensor::vec({rng.normal()}))->values[0];
        }
        const double sample_mean = acc / static_cast<double>(draws);
        const double se = 1.5 / std::sqrt(static_cast<double>(draws));
        CHECK(std::fabs(sample_mean - 0.7) < 3.0 * se);
    }
}

TEST_CASE("decode") {
    SECTION("zero parameters reconstruct zeros") {
        DecoderParams p;
        p.hidden = LinearLayer(4, 4);
        p.embedding = LinearLayer(4, 3);
        p.raw = LinearLayer(4, 5);
        auto [emb, raw] = decode(Tensor::vec({1.0, -2.0, 0.5, 3.0}), p);
        for (double v : emb->values) {
            CHECK(v == 0.0);
        }
        for (double v : raw->values) {
            CHECK(v == 0.0);
        }
    }

    SECTION("scalar pipeline matches a manual composition") {
        DecoderParams p = tiny_decoder();
        p.hidden.weight->values = {2.0};
        p.hidden.bias->values = {0.1};
        p.embedding.weight->values = {-1.5};
        p.embedding.bias->values = {0.3};
        p.raw.weight->values = {0.7};
        p.raw.bias->values = {-0.2};
        const double z = 0.6;
        auto [emb, raw] = decode(Tensor::vec({z}), p);
        const double h = std::max(0.0, 2.0 * z + 0.1);
        CHECK(emb->values[0] == Catch::Approx(-1.5 * h + 0.3).margin(1e-15));
        CHECK(raw->values[0] == Catch::Approx(0.7 * h - 0.2).margin(1e-15));
    }
}

TEST_CASE("kl divergence") {
    auto kl_value = [](std::vector<double> mean, std::vector<double> log_var) {
        return kl_divergence({Tensor::vec(std::move(mean)), Tensor::vec(std::move(log_var))})
            ->item();
    };

    CHECK(kl_value({0.0}, {0.0}) == 0.0);
    CHECK(kl_value({1.0}, {0.0}) == Catch::Approx(0.5).margin(1e-12));
    CHECK(kl_value({0.0}, {1.0}) ==
          Catch::Approx(0.5 * (std::exp(1.0) - 2.0)).margin(1e-12));

    SECTION("non-negative everywhere, zero only at the standard normal") {
        Rng rng(55);
        for (int i = 0; i < 10000; ++i) {
            const double m = rng.uniform(-4.0, 4.0);
            const double lv = rng.uniform(-4.0, 4.0);
            const double kl = kl_value({m}, {lv});
            REQUIRE(kl >= 0.0);
            if (kl < 1e-9) {
                REQUIRE(std::fabs(m) < 1e-4);
                REQUIRE(std::fabs(lv) < 1e-4);
            }
        }
    }
}

TEST_CASE("gaussian log likelihood") {
    auto gll = [](std::vector<double> t, std::vector<double> r, double sigma) {
        return gaussian_log_likelihood(Tensor::vec(std::move(t)), Tensor::vec(std::move(r)), sigma)
            ->item();
    };

    CHECK(gll({0.7}, {0.7}, 1.0) == Catch::Approx(-kUnitGaussConst).margin(1e-12));
    CHECK(gll({1.7}, {0.7}, 1.0) == Catch::Approx(-kUnitGaussConst - 0.5).margin(1e-12));

    SECTION("maximized exactly at recon == target") {
        Rng rng(14);
        const std::vector<double> target = {0.3, -1.2, 2.0};
        const double at_target = gll(target, target, 1.0);
        for (int i = 0; i < 100; ++i) {
            std::vector<double> other = target;
            for (double& v : other) {
                v += rng.uniform(-1.0, 1.0);
            }
            if (other != target) {
                REQUIRE(gll(target, other, 1.0) < at_target);
            }
        }
    }

    CHECK_THROWS_AS(gaussian_log_likelihood(Tensor::vec({1.0}), Tensor::vec({1.0}), 0.0),
                    config_error);
}

TEST_CASE("reconstruction loss") {
    SECTION("perfect reconstruction at the prior leaves only the constant") {
        const std::size_t h = 3;
        auto embedding = Tensor::vec({0.1, -0.4, 0.9});
        LatentGaussian prior{Tensor::vec({0.0, 0.0}), Tensor::vec({0.0, 0.0})};
        auto term = l_v_term(embedding, embedding, prior, 1.0);
        auto loss = l_v_loss({term});
        CHECK(loss->item() ==
              Catch::Approx(kUnitGaussConst * static_cast<double>(h)).margin(1e-12));
    }

    SECTION("loss falls as the reconstruction approaches the target") {
        auto embedding = Tensor::vec({1.0, 2.0});
        LatentGaussian g{Tensor::vec({0.3, 0.1}), Tensor::vec({0.2, -0.1})};
        auto far = l_v_loss({l_v_term(embedding, Tensor::vec({3.0, -1.0}), g, 1.0)});
        auto near = l_v_loss({l_v_term(embedding, Tensor::vec({1.5, 1.5}), g, 1.0)});
        CHECK(near->item() < far->item());
    }

    SECTION("empty batch is an error") {
        CHECK_THROWS_AS(l_v_loss({}), error);
    }
}

TEST_CASE("vae parameters pass the gradient check through the loss") {
    const VaeConfig cfg(3, 5, 4);
    Vae vae(cfg, Rng(2025));
    Rng rng(6);
    std::vector<double> emb_v(3);
    std::vector<double> noise_v(5);
    for (double& v : emb_v) {
        v = rng.uniform(-1.0, 1.0);
    }
    for (double& v : noise_v) {
        v = rng.normal();
    }

    auto loss = [&]() {
        auto embedding = Tensor::vec(emb_v);
        LatentGaussian g = encode(embedding, vae.encoder);
        auto z = reparameterize(g, Tensor::vec(noise_v));
        auto [recon_emb, recon_raw] = decode(z, vae.decoder);
        // fold the raw head in so its parameters see gradient here too
        auto raw_term = scale(gaussian_log_likelihood(Tensor::vec({0.5, -1.0, 0.0, 2.0}),
                                                      recon_raw, cfg.sigma),
                              -1.0);
        return add(l_v_loss({l_v_term(embedding, recon_emb, g, cfg.sigma)}), raw_term);
    };

    std::vector<std::pair<std::string, TensorPtr>> params;
    vae.collect_parameters(params);
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
