#pragma once

#include <Eigen/Core>
#include <numbers>

#include "dcsflow/types.hpp"

namespace dcsflow {

/// Periodic double gyre parameters. epsilon = 0 gives the time-independent
/// field (a(t) = 0, b(t) = 1 for all t).
struct DoubleGyreParams {
  double amplitude = 0.1;                        // A
  double epsilon = 0.25;                         // oscillation magnitude, [0, 0.5)
  double omega = 2.0 * std::numbers::pi / 10.0;  // angular frequency

  bool steady() const { return epsilon == 0.0; }
  /// Upper bound on the flow speed over the domain, pi*A*(1 + 2*eps).
  double speed_bound() const;
  void validate() const;
};

/// psi = A sin(pi f(x,t)) sin(pi y),  f = a(t) x^2 + b(t) x,
/// a(t) = eps sin(w t), b(t) = 1 - 2 eps sin(w t).
double stream_function(const Vec2& p, double t, const DoubleGyreParams& params);

/// u = -pi A sin(pi f) cos(pi y),  v = pi A cos(pi f) sin(pi y) df/dx.
Vec2 velocity(const Vec2& p, double t, const DoubleGyreParams& params);

/// Same formula without the domain check; callers clamp positions themselves.
Vec2 velocity_unchecked(const Vec2& p, double t, const DoubleGyreParams& params);

/// Centered flow data: rows = stacked velocity components (u block over v
/// block, 2 * node_count rows), columns = time snapshots. `mean_field` is the
/// temporal mean that was subtracted.
struct SnapshotMatrix {
  Eigen::MatrixXd data;
  Eigen::VectorXd mean_field;
  GridSpec grid;
  TimeGrid times;

  Eigen::Index rows() const { return data.rows(); }
  Eigen::Index snapshot_count() const { return data.cols(); }
};

/// Samples the velocity at every grid node and snapshot time, stacks u over v,
/// and subtracts the temporal mean row-wise.
SnapshotMatrix build_snapshot_matrix(const GridSpec& grid, const TimeGrid& times,
                                     const DoubleGyreParams& params);

}  // namespace dcsflow
