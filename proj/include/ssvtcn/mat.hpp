#pragma once

#include <cstddef>
#include <vector>

#include "ssvtcn/tensor.hpp"

namespace ssvtcn {

// Plain row-major value matrix; the graph-free carrier for windows and
// feature rows.
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Mat() = default;
    Mat(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::vector<double> row_values(std::size_t r) const {
        return {data.begin() + static_cast<std::ptrdiff_t>(r * cols),
                data.begin() + static_cast<std::ptrdiff_t>((r + 1) * cols)};
    }

    bool operator==(const Mat&) const = default;
};

inline TensorPtr constant(const Mat& m) {
    return Tensor::make({m.rows, m.cols}, m.data, false);
}

}  // namespace ssvtcn
