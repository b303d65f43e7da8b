#pragma once

#include <Eigen/Core>

namespace dcsflow {

using Vec2 = Eigen::Vector2d;

struct Interval {
  double lo = 0.0;
  double hi = 1.0;

  double length() const { return hi - lo; }
  bool contains(double v) const { return v >= lo && v <= hi; }
};

/// Uniform rectangular grid over [0,2] x [0,1] (the flow's non-dimensional
/// domain). Nodes include both interval endpoints.
///
/// Linear node ids are row-major with x varying fastest:
///   id = j * nx + i,  i in [0,nx), j in [0,ny)
/// Stacked field vectors hold the u component at row `id` and the
/// v component at row `node_count() + id`.
struct GridSpec {
  int nx = 50;
  int ny = 25;
  Interval x_range{0.0, 2.0};
  Interval y_range{0.0, 1.0};

  int node_count() const { return nx * ny; }
  double dx() const { return x_range.length() / (nx - 1); }
  double dy() const { return y_range.length() / (ny - 1); }

  int node_id(int i, int j) const { return j * nx + i; }
  Vec2 node_position(int id) const {
    const int i = id % nx;
    const int j = id / nx;
    return {x_range.lo + i * dx(), y_range.lo + j * dy()};
  }

  bool contains(const Vec2& p) const {
    return x_range.contains(p.x()) && y_range.contains(p.y());
  }
  Vec2 clamp(const Vec2& p) const;

  void validate() const;
};

/// Snapshot k is taken at time t0 + k*dt.
struct TimeGrid {
  double t0 = 0.0;
  double dt = 0.01;
  int count = 2001;

  double time_at(int k) const { return t0 + k * dt; }
  /// Index of the stored snapshot closest to t, clamped to [0, count).
  int nearest_index(double t) const;

  void validate() const;
};

}  // namespace dcsflow
