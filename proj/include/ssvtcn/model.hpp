#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "ssvtcn/adam.hpp"
#include "ssvtcn/mat.hpp"
#include "ssvtcn/rng.hpp"
#include "ssvtcn/tcn.hpp"
#include "ssvtcn/tensor.hpp"
#include "ssvtcn/vae.hpp"

namespace ssvtcn {

struct ModelConfig {
    TcnConfig tcn;
    std::size_t latent_dim = 16;
    double sigma = 1.0;
    std::size_t window = 16;

    VaeConfig vae() const {
        return VaeConfig(tcn.channels, latent_dim, tcn.input_dim, sigma);
    }
};

// Everything one forward pass produces; value reads go through ->values.
struct ModelOutput {
    TensorPtr logits;           // [M]
    TensorPtr probs;            // softmax(logits)
    TensorPtr embedding;        // [h], last hidden timestep
    LatentGaussian gaussian;    // mean / log_var, each [z]
    TensorPtr latent;           // [z], reparameterized sample
    TensorPtr recon_embedding;  // [h]
    TensorPtr recon_raw;        // [u]
};

class Model {
public:
    Model() = default;

    Model(const ModelConfig& cfg, const Rng& rng)
        : cfg_(cfg),
          tcn_(cfg.tcn, rng.split("tcn")),
          vae_(cfg.vae(), rng.split("vae")) {
        warn_if_window_exceeds_field(cfg.tcn, cfg.window);
    }

    ModelOutput forward(const Mat& window, const std::vector<double>& noise) const {
        if (window.rows != cfg_.window || window.cols != cfg_.tcn.input_dim) {
            throw shape_error("model: window is " + std::to_string(window.rows) + "x" +
                              std::to_string(window.cols) + ", expected " +
                              std::to_string(cfg_.window) + "x" +
                              std::to_string(cfg_.tcn.input_dim));
        }
        if (noise.size() != cfg_.latent_dim) {
            throw shape_error("model: noise must have latent dimension " +
                              std::to_string(cfg_.latent_dim));
        }
        TcnOutput tout = tcn_.forward(constant(window));
        LatentGaussian g = encode(tout.embedding, vae_.encoder);
        TensorPtr z = reparameterize(g, Tensor::vec(noise));
        auto [recon_embedding, recon_raw] = decode(z, vae_.decoder);
        ModelOutput out;
        out.logits = tout.logits;
        out.probs = softmax(tout.logits);
        out.embedding = tout.embedding;
        out.gaussian = g;
        out.latent = z;
        out.recon_embedding = recon_embedding;
        out.recon_raw = recon_raw;
        return out;
    }

    // Classifier path only (no VAE); enough for pseudo-labels and accuracy.
    std::size_t classify(const Mat& window) const {
        NoGradGuard guard;
        TcnOutput tout = tcn_.forward(constant(window));
        return argmax(softmax(tout.logits)->values);
    }

    std::vector<std::pair<std::string, TensorPtr>> parameters() const {
        std::vector<std::pair<std::string, TensorPtr>> out;
        tcn_.collect_parameters(out);
        vae_.collect_parameters(out);
        return out;
    }

    std::vector<TensorPtr> parameter_tensors() const {
        std::vector<TensorPtr> out;
        for (auto& [name, t] : parameters()) {
            out.push_back(t);
        }
        return out;
    }

    const ModelConfig& config() const { return cfg_; }
    std::size_t classes() const { return cfg_.tcn.classes; }
    Tcn& tcn() { return tcn_; }
    const Tcn& tcn() const { return tcn_; }
    Vae& vae() { return vae_; }
    const Vae& vae() const { return vae_; }

private:
    ModelConfig cfg_;
    Tcn tcn_;
    Vae vae_;
};

// 1 when the prediction names the reference class, else 0.
inline int indicator(int prediction_class, int reference_class, int classes) {
    if (prediction_class < 0 || prediction_class >= classes || reference_class < 0 ||
        reference_class >= classes) {
        throw error("indicator: class out of range");
    }
    return prediction_class == reference_class ? 1 : 0;
}

namespace detail {

inline void require_prob_row(const TensorPtr& probs, const char* who) {
    double total = 0.0;
    for (double v : probs->values) {
        total += v;
    }
    if (std::fabs(total - 1.0) > 1e-6) {
        throw error(std::string(who) + ": probabilities do not sum to 1");
    }
}

}  // namespace detail

// Semi-supervised classification loss: cross-entropy on labeled records plus
// the confidence term -p*log(p) at each unlabeled record's pseudo-label,
// averaged over all records. Logs are clamped at 1e-12.
inline TensorPtr l_t_loss(const std::vector<TensorPtr>& labeled_probs,
                          const std::vector<int>& labels,
                          const std::vector<TensorPtr>& unlabeled_probs,
                          const std::vector<int>& pseudo_labels, std::size_t classes) {
    if (labeled_probs.size() != labels.size() || unlabeled_probs.size() != pseudo_labels.size()) {
        throw shape_error("l_t_loss: probability/label counts disagree");
    }
    const std::size_t total = labeled_probs.size() + unlabeled_probs.size();
    if (total == 0) {
        throw error("l_t_loss: empty batch");
    }
    std::vector<TensorPtr> terms;
    terms.reserve(total);
    for (std::size_t i = 0; i < labeled_probs.size(); ++i) {
        detail::require_prob_row(labeled_probs[i], "l_t_loss");
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
            throw error("l_t_loss: label out of range");
        }
        TensorPtr p = select(labeled_probs[i], static_cast<std::size_t>(labels[i]));
        terms.push_back(scale(log_clamped(p), -1.0));
    }
    for (std::size_t j = 0; j < unlabeled_probs.size(); ++j) {
        detail::require_prob_row(unlabeled_probs[j], "l_t_loss");
        if (pseudo_labels[j] < 0 || static_cast<std::size_t>(pseudo_labels[j]) >= classes) {
            throw error("l_t_loss: pseudo-label out of range");
        }
        TensorPtr p = select(unlabeled_probs[j], static_cast<std::size_t>(pseudo_labels[j]));
        terms.push_back(scale(mul(p, log_clamped(p)), -1.0));
    }
    return scale(add_n(std::move(terms)), 1.0 / static_cast<double>(total));
}

inline TensorPtr total_loss(const TensorPtr& l_t, const TensorPtr& l_v) {
    if (!std::isfinite(l_t->item())) {
        throw error("total_loss: classification term diverged");
    }
    if (!std::isfinite(l_v->item())) {
        throw error("total_loss: reconstruction term diverged");
    }
    return add(l_t, l_v);
}

// One predicted class per unlabeled record, carried between epochs. Every
// record starts as class 0.
struct PseudoLabelState {
    std::vector<int> classes;

    static PseudoLabelState initial(std::size_t count) {
        PseudoLabelState s;
        s.classes.assign(count, 0);
        return s;
    }
};

struct PseudoUpdate {
    PseudoLabelState state;
    std::size_t changes = 0;
};

// Replaces every pseudo-label with the model's current argmax (ties go to
// the lowest class index, which argmax already does).
inline PseudoUpdate update_pseudo_labels(const Model& model, const std::vector<Mat>& windows,
                                         const PseudoLabelState& state) {
    if (state.classes.size() != windows.size()) {
        throw shape_error("update_pseudo_labels: state size != record count");
    }
    PseudoUpdate out;
    out.state.classes.resize(windows.size());
    for (std::size_t i = 0; i < windows.size(); ++i) {
        const int now = static_cast<int>(model.classify(windows[i]));
        out.state.classes[i] = now;
        if (now != state.classes[i]) {
            ++out.changes;
        }
    }
    return out;
}

struct TrainConfig {
    double lr = 0.005;
    std::size_t epochs = 8;
    std::size_t batch_size = 32;
    std::uint64_t seed = 1;
};

struct EpochStats {
    std::size_t epoch = 0;  // 1-based
    double loss_t = 0.0;
    double loss_v = 0.0;
    double total = 0.0;
    double labeled_accuracy = 0.0;
    std::size_t pseudo_changes = 0;
};

using TrainHistory = std::vector<EpochStats>;

struct LabeledWindows {
    std::vector<Mat> windows;
    std::vector<int> labels;
};

struct FitResult {
    Model model;
    TrainHistory history;
};

namespace detail {

// Batch slots, labeled drawn proportionally to the global labeled share so
// the combined-average loss stays unbiased under mini-batching.
struct BatchPlan {
    std::vector<std::pair<std::size_t, std::size_t>> batches;  // (labeled, unlabeled) counts
};

inline BatchPlan plan_batches(std::size_t labeled, std::size_t unlabeled, std::size_t batch) {
    BatchPlan plan;
    const std::size_t total = labeled + unlabeled;
    std::size_t done = 0;
    std::size_t labeled_done = 0;
    while (done < total) {
        const std::size_t take = std::min(batch, total - done);
        const std::size_t end = done + take;
        std::size_t labeled_target = static_cast<std::size_t>(std::llround(
            static_cast<double>(end) * static_cast<double>(labeled) / static_cast<double>(total)));
        labeled_target = std::min(labeled_target, labeled);
        std::size_t nl = labeled_target > labeled_done ? labeled_target - labeled_done : 0;
        nl = std::min(nl, take);
        std::size_t nu = take - nl;
        const std::size_t unlabeled_left = unlabeled - (done - labeled_done);
        if (nu > unlabeled_left) {
            nl += nu - unlabeled_left;
            nu = unlabeled_left;
        }
        plan.batches.emplace_back(nl, nu);
        labeled_done += nl;
        done = end;
    }
    return plan;
}

}  // namespace detail

// Joint training: every mini-batch contributes the classification loss plus
// the reconstruction loss, optimized with Adam; pseudo-labels refresh once
// per epoch from the just-updated model.
inline FitResult fit(const ModelConfig& mc, const LabeledWindows& labeled,
                     const std::vector<Mat>& unlabeled, const TrainConfig& tc,
                     const std::function<void(const EpochStats&)>& on_epoch = {}) {
    if (labeled.windows.empty()) {
        throw error("fit: labeled set is empty; at least some labels are required");
    }
    if (labeled.windows.size() != labeled.labels.size()) {
        throw shape_error("fit: labeled window/label counts disagree");
    }
    if (tc.epochs < 1 || !(tc.lr > 0.0) || tc.batch_size < 1) {
        throw config_error("fit: epochs >= 1, lr > 0 and batch_size >= 1 required");
    }

    const Rng root(tc.seed);
    FitResult result{Model(mc, root.split("init")), {}};
    Model& model = result.model;
    AdamOptimizer optimizer(model.parameter_tensors(), AdamConfig{.lr = tc.lr});
    PseudoLabelState pseudo = PseudoLabelState::initial(unlabeled.size());

    const std::size_t n_l = labeled.windows.size();
    const std::size_t n_u = unlabeled.size();
    const double sigma = mc.sigma;
    const Rng train_rng = root.split("train");

    for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
        const Rng epoch_rng = train_rng.split(static_cast<std::uint64_t>(epoch));
        std::vector<std::size_t> order_l(n_l);
        std::vector<std::size_t> order_u(n_u);
        for (std::size_t i = 0; i < n_l; ++i) {
            order_l[i] = i;
        }
        for (std::size_t i = 0; i < n_u; ++i) {
            order_u[i] = i;
        }
        Rng shuffle_l = epoch_rng.split("shuffle.labeled");
        Rng shuffle_u = epoch_rng.split("shuffle.unlabeled");
        shuffle_l.shuffle(order_l);
        shuffle_u.shuffle(order_u);
        Rng noise_rng = epoch_rng.split("noise");

        double sum_t = 0.0;
        double sum_v = 0.0;
        double sum_total = 0.0;
        std::size_t cursor_l = 0;
        std::size_t cursor_u = 0;
        const auto plan = detail::plan_batches(n_l, n_u, tc.batch_size);
        for (const auto& [take_l, take_u] : plan.batches) {
            optimizer.zero_grad();
            std::vector<TensorPtr> probs_l;
            std::vector<int> batch_labels;
            std::vector<TensorPtr> probs_u;
            std::vector<int> batch_pseudo;
            std::vector<TensorPtr> recon_terms;
            probs_l.reserve(take_l);
            probs_u.reserve(take_u);
            recon_terms.reserve(take_l + take_u);

            auto run_record = [&](const Mat& window) {
                std::vector<double> noise(mc.latent_dim);
                for (double& v : noise) {
                    v = noise_rng.normal();
                }
                ModelOutput out = model.forward(window, noise);
                recon_terms.push_back(
                    l_v_term(out.embedding, out.recon_embedding, out.gaussian, sigma));
                return out;
            };

            for (std::size_t k = 0; k < take_l; ++k, ++cursor_l) {
                const std::size_t idx = order_l[cursor_l];
                ModelOutput out = run_record(labeled.windows[idx]);
                probs_l.push_back(out.probs);
                batch_labels.push_back(labeled.labels[idx]);
            }
            for (std::size_t k = 0; k < take_u; ++k, ++cursor_u) {
                const std::size_t idx = order_u[cursor_u];
                ModelOutput out = run_record(unlabeled[idx]);
                probs_u.push_back(out.probs);
                batch_pseudo.push_back(pseudo.classes[idx]);
            }

            TensorPtr l_t = l_t_loss(probs_l, batch_labels, probs_u, batch_pseudo,
                                     model.classes());
            TensorPtr l_v = l_v_loss(recon_terms);
            TensorPtr total = total_loss(l_t, l_v);
            total->backward();
            optimizer.step();

            const double records = static_cast<double>(take_l + take_u);
            sum_t += l_t->item() * records;
            sum_v += l_v->item() * records;
            sum_total += total->item() * records;
        }

        std::size_t correct = 0;
        for (std::size_t i = 0; i < n_l; ++i) {
            if (static_cast<int>(model.classify(labeled.windows[i])) == labeled.labels[i]) {
                ++correct;
            }
        }
        PseudoUpdate update = update_pseudo_labels(model, unlabeled, pseudo);
        pseudo = std::move(update.state);

        const double n_total = static_cast<double>(n_l + n_u);
        result.history.push_back({epoch + 1, sum_t / n_total, sum_v / n_total,
                                  sum_total / n_total,
                                  static_cast<double>(correct) / static_cast<double>(n_l),
                                  update.changes});
        if (on_epoch) {
            on_epoch(result.history.back());
        }
    }
    return result;
}

}  // namespace ssvtcn
