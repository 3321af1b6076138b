#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "ssvtcn/rng.hpp"
#include "ssvtcn/tensor.hpp"

namespace ssvtcn {

struct LinearLayer {
    TensorPtr weight;  // [in, out]
    TensorPtr bias;    // [out]
    std::size_t in = 0;
    std::size_t out = 0;

    LinearLayer() = default;

    LinearLayer(std::size_t in_dim, std::size_t out_dim) : in(in_dim), out(out_dim) {
        weight = Tensor::zeros({in_dim, out_dim}, true);
        bias = Tensor::zeros({out_dim}, true);
    }

    void init(Rng rng) {
        const double k = 1.0 / std::sqrt(static_cast<double>(in));
        for (double& v : weight->values) {
            v = rng.uniform(-k, k);
        }
        for (double& v : bias->values) {
            v = rng.uniform(-k, k);
        }
    }

    TensorPtr forward(const TensorPtr& x) const { return linear(x, weight, bias); }
};

// Diagonal Gaussian over the latent space; the variance is carried as
// log-variance so optimization is unconstrained.
struct LatentGaussian {
    TensorPtr mean;     // [z]
    TensorPtr log_var;  // [z]
};

struct VaeConfig {
    std::size_t input_dim = 8;   // embedding width h (the TCN channel count)
    std::size_t latent_dim = 16; // z; must exceed input_dim
    std::size_t raw_dim = 11;    // width of the reconstructed record
    double sigma = 1.0;          // observation noise of both likelihoods

    VaeConfig() = default;

    VaeConfig(std::size_t h, std::size_t z, std::size_t u, double sigma_in = 1.0)
        : input_dim(h), latent_dim(z), raw_dim(u), sigma(sigma_in) {
        if (latent_dim <= input_dim) {
            throw config_error("vae: latent_dim (" + std::to_string(latent_dim) +
                               ") must exceed input_dim (" + std::to_string(input_dim) +
                               "); the latent space widens the embedding");
        }
        if (!(sigma > 0.0)) {
            throw config_error("vae: sigma must be positive");
        }
    }

    std::size_t hidden_dim() const { return std::max(input_dim, latent_dim); }
};

struct EncoderParams {
    LinearLayer hidden;   // input_dim -> hidden
    LinearLayer mean;     // hidden -> latent
    LinearLayer log_var;  // hidden -> latent
};

struct DecoderParams {
    LinearLayer hidden;     // latent -> hidden
    LinearLayer embedding;  // hidden -> input_dim, targets the TCN embedding
    LinearLayer raw;        // hidden -> raw_dim, targets the last-step record
};

inline LatentGaussian encode(const TensorPtr& embedding, const EncoderParams& params) {
    if (embedding->shape.size() != 1 || embedding->shape[0] != params.hidden.in) {
        throw shape_error("vae encode: embedding dim " +
                          std::to_string(embedding->size()) + ", expected " +
                          std::to_string(params.hidden.in));
    }
    TensorPtr h = relu(params.hidden.forward(embedding));
    return {params.mean.forward(h), params.log_var.forward(h)};
}

// Z = mean + exp(log_var / 2) * noise. The noise is a plain constant, so
// gradients reach only the Gaussian parameters.
inline TensorPtr reparameterize(const LatentGaussian& g, const TensorPtr& noise) {
    detail::require_same_shape(*g.mean, *noise, "reparameterize");
    return add(g.mean, mul(exp(scale(g.log_var, 0.5)), noise));
}

inline std::pair<TensorPtr, TensorPtr> decode(const TensorPtr& latent,
                                              const DecoderParams& params) {
    if (latent->shape.size() != 1 || latent->shape[0] != params.hidden.in) {
        throw shape_error("vae decode: latent dim " + std::to_string(latent->size()) +
                          ", expected " + std::to_string(params.hidden.in));
    }
    TensorPtr h = relu(params.hidden.forward(latent));
    return {params.embedding.forward(h), params.raw.forward(h)};
}

// KL(q || standard normal) = 0.5 * sum(mean^2 + exp(log_var) - 1 - log_var).
inline TensorPtr kl_divergence(const LatentGaussian& g) {
    TensorPtr terms = sub(offset(add(mul(g.mean, g.mean), exp(g.log_var)), -1.0), g.log_var);
    return scale(sum(terms), 0.5);
}

// Isotropic Gaussian log-likelihood of target under N(recon, sigma^2 I):
// sum_j [ -0.5*log(2 pi sigma^2) - (target_j - recon_j)^2 / (2 sigma^2) ].
inline TensorPtr gaussian_log_likelihood(const TensorPtr& target, const TensorPtr& recon,
                                         double sigma) {
    detail::require_same_shape(*target, *recon, "gaussian_log_likelihood");
    if (!(sigma > 0.0)) {
        throw config_error("gaussian_log_likelihood: sigma must be positive");
    }
    const double dim = static_cast<double>(target->size());
    const double norm = -0.5 * dim * std::log(2.0 * std::numbers::pi * sigma * sigma);
    TensorPtr residual = sub(target, recon);
    TensorPtr sq = sum(mul(residual, residual));
    return offset(scale(sq, -1.0 / (2.0 * sigma * sigma)), norm);
}

struct Vae {
    VaeConfig cfg;
    EncoderParams encoder;
    DecoderParams decoder;

    Vae() = default;

    Vae(const VaeConfig& config, const Rng& rng) : cfg(config) {
        const std::size_t hid = cfg.hidden_dim();
        encoder.hidden = LinearLayer(cfg.input_dim, hid);
        encoder.mean = LinearLayer(hid, cfg.latent_dim);
        encoder.log_var = LinearLayer(hid, cfg.latent_dim);
        decoder.hidden = LinearLayer(cfg.latent_dim, hid);
        decoder.embedding = LinearLayer(hid, cfg.input_dim);
        decoder.raw = LinearLayer(hid, cfg.raw_dim);
        encoder.hidden.init(rng.split("enc.hidden"));
        encoder.mean.init(rng.split("enc.mean"));
        encoder.log_var.init(rng.split("enc.log_var"));
        decoder.hidden.init(rng.split("dec.hidden"));
        decoder.embedding.init(rng.split("dec.embedding"));
        decoder.raw.init(rng.split("dec.raw"));
    }

    void collect_parameters(std::vector<std::pair<std::string, TensorPtr>>& out) const {
        const std::pair<std::string, const LinearLayer*> layers[] = {
            {"vae.enc.hidden", &encoder.hidden},   {"vae.enc.mean", &encoder.mean},
            {"vae.enc.log_var", &encoder.log_var}, {"vae.dec.hidden", &decoder.hidden},
            {"vae.dec.embedding", &decoder.embedding}, {"vae.dec.raw", &decoder.raw},
        };
        for (const auto& [name, layer] : layers) {
            out.emplace_back(name + ".weight", layer->weight);
            out.emplace_back(name + ".bias", layer->bias);
        }
    }
};

// Per-record terms already assembled by the caller: the negated embedding
// log-likelihood plus the KL penalty, averaged over the batch.
inline TensorPtr l_v_loss(const std::vector<TensorPtr>& per_record_terms) {
    if (per_record_terms.empty()) {
        throw error("l_v_loss: empty batch");
    }
    return scale(add_n(per_record_terms), 1.0 / static_cast<double>(per_record_terms.size()));
}

// Single-record term of the reconstruction loss.
inline TensorPtr l_v_term(const TensorPtr& embedding, const TensorPtr& recon_embedding,
                          const LatentGaussian& g, double sigma) {
    TensorPtr nll = scale(gaussian_log_likelihood(embedding, recon_embedding, sigma), -1.0);
    return add(nll, kl_divergence(g));
}

}  // namespace ssvtcn
