#pragma once

#include <Eigen/Core>

namespace vplab {

/// Row-major so that row i of a sequence matrix is token i, and a grid
/// flattened as (row * width + col) indexes rows directly.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

inline bool all_finite(const Mat& m) { return m.allFinite(); }

}  // namespace vplab
