#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "ssvtcn/tensor.hpp"

namespace ssvtcn {

// Central finite differences, (f(x + h e_i) - f(x - h e_i)) / 2h per
// coordinate. The function must treat its argument as plain values; this is
// the independent oracle the gradient tests compare reverse mode against.
inline std::vector<double> finite_diff_grad(
    const std::function<double(const std::vector<double>&)>& f, std::vector<double> x,
    double h = 1e-5) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = x[i];
        x[i] = saved + h;
        const double hi = f(x);
        x[i] = saved - h;
        const double lo = f(x);
        x[i] = saved;
        g[i] = (hi - lo) / (2.0 * h);
    }
    return g;
}

// Largest relative disagreement between two gradient vectors. The floor
// keeps finite-difference roundoff on near-zero coordinates from reading
// as a large relative error.
inline double max_rel_error(const std::vector<double>& a, const std::vector<double>& b,
                            double abs_floor = 1e-5) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double scale = std::max({std::fabs(a[i]), std::fabs(b[i]), abs_floor});
        worst = std::max(worst, std::fabs(a[i] - b[i]) / scale);
    }
    return worst;
}

}  // namespace ssvtcn
