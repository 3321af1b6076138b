#pragma once

#include <cmath>
#include <cstddef>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "ssvtcn/rng.hpp"
#include "ssvtcn/tensor.hpp"

namespace ssvtcn {

// One causal dilated 1-D convolution: kernel [w, C_in, C_out], bias [C_out].
struct Conv1dLayer {
    TensorPtr kernel;
    TensorPtr bias;
    std::size_t width = 1;
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
    std::size_t dilation = 1;

    Conv1dLayer() = default;

    Conv1dLayer(std::size_t w, std::size_t c_in, std::size_t c_out, std::size_t d)
        : width(w), in_channels(c_in), out_channels(c_out), dilation(d) {
        kernel = Tensor::zeros({w, c_in, c_out}, true);
        bias = Tensor::zeros({c_out}, true);
    }

    // Uniform in [-k, k] with k = 1/sqrt(fan_in); fan_in = w * C_in.
    void init(Rng rng) {
        const double k = 1.0 / std::sqrt(static_cast<double>(width * in_channels));
        for (double& v : kernel->values) {
            v = rng.uniform(-k, k);
        }
        for (double& v : bias->values) {
            v = rng.uniform(-k, k);
        }
    }
};

// out[s] = bias + sum_i kernel[i] . in[s - d*i], with negative time indices
// read as zero (left zero-padding), so the output keeps the input length and
// out[s] never sees inputs later than s.
inline TensorPtr causal_dilated_conv(const TensorPtr& input, const Conv1dLayer& layer) {
    if (input->shape.size() != 2) {
        throw shape_error("causal_dilated_conv: expected input [T, C_in]");
    }
    const std::size_t steps = input->shape[0];
    const std::size_t c_in = input->shape[1];
    const std::size_t c_out = layer.out_channels;
    const std::size_t w = layer.width;
    const std::size_t d = layer.dilation;
    if (c_in != layer.in_channels) {
        throw shape_error("causal_dilated_conv: input has " + std::to_string(c_in) +
                          " channels, layer expects " + std::to_string(layer.in_channels));
    }

    const TensorPtr kernel = layer.kernel;
    const TensorPtr bias = layer.bias;
    const bool tracked = detail::track({&input, &kernel, &bias});

    std::vector<double> out(steps * c_out);
    for (std::size_t t = 0; t < steps; ++t) {
        double* orow = out.data() + t * c_out;
        for (std::size_t j = 0; j < c_out; ++j) {
            orow[j] = bias->values[j];
        }
        for (std::size_t i = 0; i < w; ++i) {
            const std::size_t back = d * i;
            if (back > t) {
                break;
            }
            const double* irow = input->values.data() + (t - back) * c_in;
            const double* ktap = kernel->values.data() + i * c_in * c_out;
            for (std::size_t ci = 0; ci < c_in; ++ci) {
                const double x = irow[ci];
                if (x == 0.0) {
                    continue;
                }
                const double* krow = ktap + ci * c_out;
                for (std::size_t j = 0; j < c_out; ++j) {
                    orow[j] += x * krow[j];
                }
            }
        }
    }

    auto node = Tensor::make({steps, c_out}, std::move(out), tracked);
    if (tracked) {
        node->parents = {input, kernel, bias};
        node->backprop = [input, kernel, bias, steps, c_in, c_out, w, d](const Tensor& self) {
            const bool need_dx = input->requires_grad;
            const bool need_dk = kernel->requires_grad;
            const bool need_db = bias->requires_grad;
            for (std::size_t t = 0; t < steps; ++t) {
                const double* grow = self.grad.data() + t * c_out;
                if (need_db) {
                    for (std::size_t j = 0; j < c_out; ++j) {
                        bias->grad[j] += grow[j];
                    }
                }
                for (std::size_t i = 0; i < w; ++i) {
                    const std::size_t back = d * i;
                    if (back > t) {
                        break;
                    }
                    const std::size_t s = t - back;
                    const double* irow = input->values.data() + s * c_in;
                    for (std::size_t ci = 0; ci < c_in; ++ci) {
                        const double* krow = kernel->values.data() + (i * c_in + ci) * c_out;
                        if (need_dx) {
                            double acc = 0.0;
                            for (std::size_t j = 0; j < c_out; ++j) {
                                acc += krow[j] * grow[j];
                            }
                            input->grad[s * c_in + ci] += acc;
                        }
                        if (need_dk) {
                            const double x = irow[ci];
                            double* kg = kernel->grad.data() + (i * c_in + ci) * c_out;
                            for (std::size_t j = 0; j < c_out; ++j) {
                                kg[j] += x * grow[j];
                            }
                        }
                    }
                }
            }
        };
    }
    return node;
}

// relu(skip(x) + conv2(relu(conv1(x)))); the skip is the identity when the
// channel counts match and a 1x1 projection otherwise.
struct ResidualBlock {
    Conv1dLayer conv1;
    Conv1dLayer conv2;
    std::optional<Conv1dLayer> skip;

    ResidualBlock() = default;

    ResidualBlock(std::size_t c_in, std::size_t c_out, std::size_t w, std::size_t d)
        : conv1(w, c_in, c_out, d), conv2(w, c_out, c_out, d) {
        if (c_in != c_out) {
            skip.emplace(1, c_in, c_out, 1);
        }
    }

    void init(const Rng& rng) {
        conv1.init(rng.split("conv1"));
        conv2.init(rng.split("conv2"));
        if (skip) {
            skip->init(rng.split("skip"));
        }
    }

    TensorPtr forward(const TensorPtr& input) const {
        TensorPtr inner = causal_dilated_conv(input, conv1);
        inner = relu(inner);
        inner = causal_dilated_conv(inner, conv2);
        TensorPtr shortcut = skip ? causal_dilated_conv(input, *skip) : input;
        return relu(add(shortcut, inner));
    }
};

struct TcnConfig {
    std::size_t levels = 8;      // residual blocks
    std::size_t channels = 8;    // hidden units per level
    std::size_t kernel = 3;      // filter width
    std::size_t input_dim = 11;  // features per timestep
    std::size_t classes = 4;

    // Dilation doubles per level: 2^i at level i.
    std::size_t dilation_at(std::size_t level) const { return std::size_t{1} << level; }
};

// Timesteps visible to the last output: each block adds two convs of reach
// (w-1)*d, so the field is 1 + sum_i 2*(w-1)*2^i.
inline std::size_t receptive_field(const TcnConfig& cfg) {
    std::size_t field = 1;
    for (std::size_t i = 0; i < cfg.levels; ++i) {
        field += 2 * (cfg.kernel - 1) * cfg.dilation_at(i);
    }
    return field;
}

struct TcnOutput {
    TensorPtr hidden_sequence;  // [T, channels]
    TensorPtr embedding;        // hidden_sequence row T-1
    TensorPtr logits;           // [classes]
};

class Tcn {
public:
    Tcn() = default;

    Tcn(const TcnConfig& cfg, const Rng& rng) : cfg_(cfg) {
        blocks_.reserve(cfg.levels);
        for (std::size_t i = 0; i < cfg.levels; ++i) {
            const std::size_t c_in = i == 0 ? cfg.input_dim : cfg.channels;
            blocks_.emplace_back(c_in, cfg.channels, cfg.kernel, cfg.dilation_at(i));
            blocks_.back().init(rng.split("block" + std::to_string(i)));
        }
        head_w_ = Tensor::zeros({cfg.channels, cfg.classes}, true);
        head_b_ = Tensor::zeros({cfg.classes}, true);
        Rng head_rng = rng.split("head");
        const double k = 1.0 / std::sqrt(static_cast<double>(cfg.channels));
        for (double& v : head_w_->values) {
            v = head_rng.uniform(-k, k);
        }
        for (double& v : head_b_->values) {
            v = head_rng.uniform(-k, k);
        }
    }

    TcnOutput forward(const TensorPtr& window) const {
        if (window->shape.size() != 2 || window->shape[1] != cfg_.input_dim) {
            throw shape_error("tcn: expected window [T, " + std::to_string(cfg_.input_dim) + "]");
        }
        TensorPtr h = window;
        for (const auto& block : blocks_) {
            h = block.forward(h);
        }
        TensorPtr embedding = row(h, h->shape[0] - 1);
        TensorPtr logits = linear(embedding, head_w_, head_b_);
        return {h, embedding, logits};
    }

    const TcnConfig& config() const { return cfg_; }
    std::vector<ResidualBlock>& blocks() { return blocks_; }
    const std::vector<ResidualBlock>& blocks() const { return blocks_; }
    TensorPtr head_weight() const { return head_w_; }
    TensorPtr head_bias() const { return head_b_; }

    void collect_parameters(std::vector<std::pair<std::string, TensorPtr>>& out) const {
        for (std::size_t i = 0; i < blocks_.size(); ++i) {
            const std::string prefix = "tcn.block" + std::to_string(i);
            out.emplace_back(prefix + ".conv1.kernel", blocks_[i].conv1.kernel);
            out.emplace_back(prefix + ".conv1.bias", blocks_[i].conv1.bias);
            out.emplace_back(prefix + ".conv2.kernel", blocks_[i].conv2.kernel);
            out.emplace_back(prefix + ".conv2.bias", blocks_[i].conv2.bias);
            if (blocks_[i].skip) {
                out.emplace_back(prefix + ".skip.kernel", blocks_[i].skip->kernel);
                out.emplace_back(prefix + ".skip.bias", blocks_[i].skip->bias);
            }
        }
        out.emplace_back("tcn.head.weight", head_w_);
        out.emplace_back("tcn.head.bias", head_b_);
    }

private:
    TcnConfig cfg_;
    std::vector<ResidualBlock> blocks_;
    TensorPtr head_w_;
    TensorPtr head_b_;
};

// Warns (once per call) when the stack cannot see the whole window.
inline void warn_if_window_exceeds_field(const TcnConfig& cfg, std::size_t window) {
    const std::size_t field = receptive_field(cfg);
    if (field < window) {
        std::cerr << "ssvtcn: receptive field " << field << " is smaller than window length "
                  << window << "; early timesteps cannot influence the verdict\n";
    }
}

}  // namespace ssvtcn
