#pragma once

#include <stdexcept>
#include <string>

namespace ssvtcn {

struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad user configuration (unknown keys, invalid values, missing files).
struct config_error : error {
    using error::error;
};

// Malformed or inconsistent input data (CSV, splits, ordering).
struct data_error : error {
    using error::error;
};

// Tensor / layer dimension disagreements.
struct shape_error : error {
    using error::error;
};

struct checkpoint_error : error {
    using error::error;
};
struct checkpoint_version_error : checkpoint_error {
    using checkpoint_error::checkpoint_error;
};
struct checkpoint_corrupt_error : checkpoint_error {
    using checkpoint_error::checkpoint_error;
};
struct checkpoint_shape_error : checkpoint_error {
    using checkpoint_error::checkpoint_error;
};

}  // namespace ssvtcn
