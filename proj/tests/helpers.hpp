#pragma once

#include <Eigen/Dense>

#include "dcsflow/flow.hpp"
#include "dcsflow/pod.hpp"

namespace dcsflow::testing {

inline SnapshotMatrix small_double_gyre(int nx = 13, int ny = 7, int count = 201,
                                        double dt = 0.05) {
  GridSpec grid;
  grid.nx = nx;
  grid.ny = ny;
  TimeGrid times;
  times.dt = dt;
  times.count = count;
  return build_snapshot_matrix(grid, times, DoubleGyreParams{});
}

/// Snapshot container around a raw (already centered) matrix; grid defaults
/// keep bilinear interpolation meaningful for synthetic data.
inline SnapshotMatrix wrap_matrix(const Eigen::MatrixXd& data, int nx = 0, int ny = 0) {
  SnapshotMatrix s;
  s.data = data;
  s.mean_field = Eigen::VectorXd::Zero(data.rows());
  if (nx > 0 && ny > 0) {
    s.grid.nx = nx;
    s.grid.ny = ny;
  }
  s.times.count = static_cast<int>(data.cols());
  return s;
}

inline double relative_frobenius(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const double scale = b.norm();
  return scale > 0.0 ? (a - b).norm() / scale : (a - b).norm();
}

}  // namespace dcsflow::testing
