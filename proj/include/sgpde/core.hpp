#pragma once

#include <Eigen/Core>
#include <stdexcept>
#include <string>

namespace sgpde {

using Vec = Eigen::VectorXd;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Invalid arguments, shapes, grids, file formats. CLI maps this to exit code 2.
struct config_error : std::runtime_error {
    explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite state during simulation or optimization. CLI maps this to exit code 3.
struct divergence_error : std::runtime_error {
    divergence_error(const std::string& what, long where)
        : std::runtime_error(what + " (at step " + std::to_string(where) + ")"),
          step(where) {}
    long step;
};

struct io_error : std::runtime_error {
    explicit io_error(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool ok, const std::string& what) {
    if (!ok) throw config_error(what);
}

}  // namespace sgpde
