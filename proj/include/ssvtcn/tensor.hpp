#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "ssvtcn/errors.hpp"

namespace ssvtcn {

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

// Thread-local switch: with gradients disabled, ops produce plain value
// nodes without graph edges or backward closures (inference mode).
inline bool& grad_mode() {
    thread_local bool enabled = true;
    return enabled;
}

struct NoGradGuard {
    NoGradGuard() : saved_(grad_mode()) { grad_mode() = false; }
    ~NoGradGuard() { grad_mode() = saved_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool saved_;
};

// Dense row-major tensor node. requires_grad propagates through ops, so any
// node downstream of a parameter carries a gradient buffer; backward() on a
// scalar loss fills them. The graph is rebuilt on every forward pass.
class Tensor : public std::enable_shared_from_this<Tensor> {
public:
    std::vector<std::size_t> shape;
    std::vector<double> values;
    std::vector<double> grad;  // same length as values iff requires_grad
    bool requires_grad = false;

    std::vector<TensorPtr> parents;
    std::function<void(const Tensor&)> backprop;  // scatters this->grad into parents

    Tensor(std::vector<std::size_t> shape_in, std::vector<double> values_in, bool req_grad)
        : shape(std::move(shape_in)), values(std::move(values_in)), requires_grad(req_grad) {
        std::size_t n = 1;
        for (std::size_t d : shape) {
            n *= d;
        }
        if (n != values.size()) {
            throw shape_error("tensor: shape product " + std::to_string(n) +
                              " != value count " + std::to_string(values.size()));
        }
        if (requires_grad) {
            grad.assign(values.size(), 0.0);
        }
    }

    static TensorPtr make(std::vector<std::size_t> shape, std::vector<double> values,
                          bool requires_grad = false) {
        return std::make_shared<Tensor>(std::move(shape), std::move(values), requires_grad);
    }

    static TensorPtr zeros(std::vector<std::size_t> shape, bool requires_grad = false) {
        std::size_t n = 1;
        for (std::size_t d : shape) {
            n *= d;
        }
        return make(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
    }

    static TensorPtr scalar(double v, bool requires_grad = false) {
        return make({}, {v}, requires_grad);
    }

    static TensorPtr vec(std::vector<double> v, bool requires_grad = false) {
        std::size_t n = v.size();
        return make({n}, std::move(v), requires_grad);
    }

    std::size_t size() const { return values.size(); }

    double item() const {
        if (values.size() != 1) {
            throw shape_error("item(): tensor has " + std::to_string(values.size()) + " entries");
        }
        return values[0];
    }

    void zero_grad() {
        if (requires_grad) {
            std::fill(grad.begin(), grad.end(), 0.0);
        }
    }

    void accumulate(const std::vector<double>& g) {
        if (!requires_grad) {
            return;
        }
        for (std::size_t i = 0; i < g.size(); ++i) {
            grad[i] += g[i];
        }
    }

    // Reverse-mode sweep from a scalar node. Seeds d(self)/d(self) = 1 and
    // runs every node's backprop closure in reverse topological order.
    void backward() {
        if (values.size() != 1) {
            throw shape_error("backward(): loss must be a scalar");
        }
        std::vector<Tensor*> order;
        topo_sort(order);
        if (grad.empty()) {
            grad.assign(1, 0.0);
        }
        grad[0] = 1.0;
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            if ((*it)->backprop) {
                (*it)->backprop(**it);
            }
        }
    }

private:
    void topo_sort(std::vector<Tensor*>& order) {
        // Iterative DFS with visitation marks; a back edge means the graph
        // is cyclic, which construction should make impossible.
        enum class Mark : unsigned char { open, done };
        std::unordered_map<Tensor*, Mark> marks;
        std::vector<std::pair<Tensor*, std::size_t>> stack;
        stack.reserve(128);
        marks.reserve(256);
        stack.emplace_back(this, 0);
        marks[this] = Mark::open;
        while (!stack.empty()) {
            auto& [node, next] = stack.back();
            if (next < node->parents.size()) {
                Tensor* parent = node->parents[next++].get();
                auto it = marks.find(parent);
                if (it == marks.end()) {
                    marks[parent] = Mark::open;
                    stack.emplace_back(parent, 0);
                } else if (it->second == Mark::open) {
                    throw error("backward(): cycle in computation graph");
                }
            } else {
                marks[node] = Mark::done;
                order.push_back(node);
                stack.pop_back();
            }
        }
    }
};

namespace detail {

inline bool track(std::initializer_list<const TensorPtr*> inputs) {
    if (!grad_mode()) {
        return false;
    }
    for (const TensorPtr* t : inputs) {
        if ((*t)->requires_grad) {
            return true;
        }
    }
    return false;
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape != b.shape) {
        throw shape_error(std::string(op) + ": shape mismatch");
    }
}

}  // namespace detail

inline TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
    detail::require_same_shape(*a, *b, "add");
    const bool tracked = detail::track({&a, &b});
    std::vector<double> out(a->size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a->values[i] + b->values[i];
    }
    auto node = Tensor::make(a->shape, std::move(out), tracked);
    if (tracked) {
        node->parents = {a, b};
        node->backprop = [a, b](const Tensor& self) {
            a->accumulate(self.grad);
            b->accumulate(self.grad);
        };
    }
    return node;
}

// n-ary same-shape sum; keeps loss graphs shallow when batching.
inline TensorPtr add_n(std::vector<TensorPtr> terms) {
    if (terms.empty()) {
        throw shape_error("add_n: no terms");
    }
    bool tracked = false;
    if (grad_mode()) {
        for (const auto& t : terms) {
            tracked = tracked || t->requires_grad;
        }
    }
    std::vector<double> out(terms[0]->size(), 0.0);
    for (const auto& t : terms) {
        detail::require_same_shape(*terms[0], *t, "add_n");
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] += t->values[i];
        }
    }
    auto node = Tensor::make(terms[0]->shape, std::move(out), tracked);
    if (tracked) {
        node->parents = terms;
        node->backprop = [terms = std::move(terms)](const Tensor& self) {
            for (const auto& t : terms) {
                t->accumulate(self.grad);
            }
        };
    }
    return node;
}

inline TensorPtr sub(const TensorPtr& a, const TensorPtr& b) {
    detail::require_same_shape(*a, *b, "sub");
    const bool tracked = detail::track({&a, &b});
    std::vector<double> out(a->size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a->values[i] - b->values[i];
    }
    auto node = Tensor::make(a->shape, std::move(out), tracked);
    if (tracked) {
        node->parents = {a, b};
        node->backprop = [a, b](const Tensor& self) {
            a->accumulate(self.grad);
            if (b->requires_grad) {
                for (std::size_t i = 0; i < self.grad.size(); ++i) {
                    b->grad[i] -= self.grad[i];
                }
            }
        };
    }
    return node;
}

inline TensorPtr mul(const TensorPtr& a, const TensorPtr& b) {
    detail::require_same_shape(*a, *b, "mul");
    const bool tracked = detail::track({&a, &b});
    std::vector<double> out(a->size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a->values[i] * b->values[i];
    }
    auto node = Tensor::make(a->shape, std::move(out), tracked);
    if (tracked) {
        node->parents = {a, b};
        node->backprop = [a, b](const Tensor& self) {
            if (a->requires_grad) {
                for (std::size_t i = 0; i < self.grad.size(); ++i) {
                    a->grad[i] += b->values[i] * self.grad[i];
                }
            }
            if (b->requires_grad) {
                for (std::size_t i = 0; i < self.grad.size(); ++i) {
                    b->grad[i] += a->values[i] * self.grad[i];
                }
            }
        };
    }
    return node;
}

inline TensorPtr scale(const TensorPtr& a, double c) {
    const bool tracked = detail::track({&a});
    std::vector<double> out(a->size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a->values[i] * c;
    }
    auto node = Tensor::make(a->shape, std::move(out), tracked);
    if (tracked) {
        node->parents = {a};
        node->backprop = [a, c](const Tensor& self) {
            if (a->requires_grad) {
                for (std::size_t i = 0; i < self.grad.size(); ++i) {
                    a->grad[i] += c * self.grad[i];
                }
            }
        };
    }
    return node;
}

inline TensorPtr offset(const TensorPtr& a, double c) {
    const bool tracked = detail::track({&a});
    std::vector<double> out(a->size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a->values[i] + c;
    }
    auto node = Tensor::make(a->shape, std::move(out), tracked);
    if (tracked) {
        node->parents = {a};
        node->backprop = [a](const Tensor& self) { a->accumulate(self.grad); };
    }
    return node;
}

inline TensorPtr sum(const TensorPtr& a) {
    const bool tracked = detail::track({&a});
    double s = 0.0;
    for (double v : a->values) {
        s += v;
    }
    auto node = Tensor::make({}, {s}, tracked);
    if (tracked) {
        node->parents = {a};
        node->backprop = [a](const Tensor& self) {
            if (a->requires_grad) {
                const double g = self.grad[0];
                for (double& gi : a->grad) {
                    gi += g;
                }
            }
        };
    }
    return node;
}

// max(0, x); gradient flows only through strictly positive entries.
inline TensorPtr relu(const TensorPtr& a) {
    const bool tracked = detail::track({&a});
    std::vector<double> out(a->size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a->values[i] > 0.0 ? a->values[i] : 0.0;
    }
    auto node = Tensor::make(a->shape, std::move(out), tracked);
    if (tracked) {
        node->parents = {a};
        node->backprop = [a](const Tensor& self) {
            if (a->requires_grad) {
                for (std::size_t i = 0; i < self.grad.size(); ++i) {
                    if (a->values[i] > 0.0) {
                        a->grad[i] += self.grad[i];
                    }
                }
            }
        };
    }
    return node;
}

inline TensorPtr exp(const TensorPtr& a) {
    const bool tracked = detail::track({&a});
    std::vector<double> out(a->size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = std::exp(a->values[i]);
    }
    auto node = Tensor::make(a->shape, std::move(out), tracked);
    if (tracked) {
        node->parents = {a};
        node->backprop = [a](const Tensor& self) {
            if (a->requires_grad) {
                for (std::size_t i = 0; i < self.grad.size(); ++i) {
                    a->grad[i] += self.values[i] * self.grad[i];
                }
            }
        };
    }
    return node;
}

// log(max(x, floor)); below the floor the output is constant, so the
// gradient there is zero.
inline TensorPtr log_clamped(const TensorPtr& a, double floor = 1e-12) {
    const bool tracked = detail::track({&a});
    std::vector<double> out(a->size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = std::log(std::max(a->values[i], floor));
    }
    auto node = Tensor::make(a->shape, std::move(out), tracked);
    if (tracked) {
        node->parents = {a};
        node->backprop = [a, floor](const Tensor& self) {
            if (a->requires_grad) {
                for (std::size_t i = 0; i < self.grad.size(); ++i) {
                    if (a->values[i] > floor) {
                        a->grad[i] += self.grad[i] / a->values[i];
                    }
                }
            }
        };
    }
    return node;
}

// Single entry by flat index, as a scalar node.
inline TensorPtr select(const TensorPtr& a, std::size_t index) {
    if (index >= a->size()) {
        throw shape_error("select: index out of range");
    }
    const bool tracked = detail::track({&a});
    auto node = Tensor::make({}, {a->values[index]}, tracked);
    if (tracked) {
        node->parents = {a};
        node->backprop = [a, index](const Tensor& self) {
            if (a->requires_grad) {
                a->grad[index] += self.grad[0];
            }
        };
    }
    return node;
}

// Row r of a [rows, cols] tensor as a [cols] vector node.
inline TensorPtr row(const TensorPtr& a, std::size_t r) {
    if (a->shape.size() != 2) {
        throw shape_error("row: expected a rank-2 tensor");
    }
    const std::size_t cols = a->shape[1];
    if (r >= a->shape[0]) {
        throw shape_error("row: index out of range");
    }
    const bool tracked = detail::track({&a});
    std::vector<double> out(a->values.begin() + static_cast<std::ptrdiff_t>(r * cols),
                            a->values.begin() + static_cast<std::ptrdiff_t>((r + 1) * cols));
    auto node = Tensor::make({cols}, std::move(out), tracked);
    if (tracked) {
        node->parents = {a};
        node->backprop = [a, r, cols](const Tensor& self) {
            if (a->requires_grad) {
                for (std::size_t j = 0; j < cols; ++j) {
                    a->grad[r * cols + j] += self.grad[j];
                }
            }
        };
    }
    return node;
}

// y = x W + b with x: [n], W: [n, m], b: [m].
inline TensorPtr linear(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b) {
    if (x->shape.size() != 1 || w->shape.size() != 2 || b->shape.size() != 1) {
        throw shape_error("linear: expected x [n], W [n,m], b [m]");
    }
    const std::size_t n = x->shape[0];
    const std::size_t m = w->shape[1];
    if (w->shape[0] != n || b->shape[0] != m) {
        throw shape_error("linear: dimension mismatch (x " + std::to_string(n) + ", W " +
                          std::to_string(w->shape[0]) + "x" + std::to_string(m) + ", b " +
                          std::to_string(b->shape[0]) + ")");
    }
    const bool tracked = detail::track({&x, &w, &b});
    std::vector<double> out(b->values);
    for (std::size_t i = 0; i < n; ++i) {
        const double xi = x->values[i];
        const double* wrow = w->values.data() + i * m;
        for (std::size_t j = 0; j < m; ++j) {
            out[j] += xi * wrow[j];
        }
    }
    auto node = Tensor::make({m}, std::move(out), tracked);
    if (tracked) {
        node->parents = {x, w, b};
        node->backprop = [x, w, b, n, m](const Tensor& self) {
            const double* g = self.grad.data();
            if (x->requires_grad) {
                for (std::size_t i = 0; i < n; ++i) {
                    const double* wrow = w->values.data() + i * m;
                    double acc = 0.0;
                    for (std::size_t j = 0; j < m; ++j) {
                        acc += wrow[j] * g[j];
                    }
                    x->grad[i] += acc;
                }
            }
            if (w->requires_grad) {
                for (std::size_t i = 0; i < n; ++i) {
                    const double xi = x->values[i];
                    double* wg = w->grad.data() + i * m;
                    for (std::size_t j = 0; j < m; ++j) {
                        wg[j] += xi * g[j];
                    }
                }
            }
            if (b->requires_grad) {
                for (std::size_t j = 0; j < m; ++j) {
                    b->grad[j] += g[j];
                }
            }
        };
    }
    return node;
}

// Numerically stable softmax over a vector of logits.
inline TensorPtr softmax(const TensorPtr& logits) {
    if (logits->shape.size() != 1 || logits->shape[0] < 2) {
        throw shape_error("softmax: expected a vector of at least 2 logits");
    }
    for (double v : logits->values) {
        if (!std::isfinite(v)) {
            throw error("softmax: non-finite logit; upstream computation is corrupt");
        }
    }
    const bool tracked = detail::track({&logits});
    const double hi = *std::max_element(logits->values.begin(), logits->values.end());
    std::vector<double> out(logits->size());
    double z = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = std::exp(logits->values[i] - hi);
        z += out[i];
    }
    for (double& v : out) {
        v /= z;
    }
    auto node = Tensor::make(logits->shape, std::move(out), tracked);
    if (tracked) {
        node->parents = {logits};
        node->backprop = [logits](const Tensor& self) {
            if (logits->requires_grad) {
                double dot = 0.0;
                for (std::size_t i = 0; i < self.grad.size(); ++i) {
                    dot += self.grad[i] * self.values[i];
                }
                for (std::size_t i = 0; i < self.grad.size(); ++i) {
                    logits->grad[i] += self.values[i] * (self.grad[i] - dot);
                }
            }
        };
    }
    return node;
}

inline std::size_t argmax(const std::vector<double>& v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[best]) {
            best = i;
        }
    }
    return best;
}

}  // namespace ssvtcn
