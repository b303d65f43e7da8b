#include "dcsflow/flow.hpp"

#include <cmath>
#include <numbers>

#include "dcsflow/errors.hpp"

namespace dcsflow {

namespace {

constexpr double kPi = std::numbers::pi;

void check_in_domain(const Vec2& p) {
  if (p.x() < 0.0 || p.x() > 2.0 || p.y() < 0.0 || p.y() > 1.0) {
    throw ValidationError("position (" + std::to_string(p.x()) + ", " + std::to_string(p.y()) +
                          ") is outside the [0,2]x[0,1] flow domain");
  }
}

}  // namespace

double DoubleGyreParams::speed_bound() const {
  // |u| <= pi A; |v| <= pi A max|df/dx| and |2 a x + b| <= 1 + 2 eps on x in [0,2].
  return kPi * amplitude * (1.0 + 2.0 * epsilon);
}

void DoubleGyreParams::validate() const {
  if (!(amplitude > 0.0)) throw ValidationError("double gyre: amplitude must be positive");
  if (epsilon < 0.0 || epsilon >= 0.5)
    throw ValidationError("double gyre: epsilon must lie in [0, 0.5)");
  if (omega < 0.0) throw ValidationError("double gyre: omega must be nonnegative");
}

double stream_function(const Vec2& p, double t, const DoubleGyreParams& params) {
  check_in_domain(p);
  const double a = params.epsilon * std::sin(params.omega * t);
  const double b = 1.0 - 2.0 * a;
  const double f = a * p.x() * p.x() + b * p.x();
  return params.amplitude * std::sin(kPi * f) * std::sin(kPi * p.y());
}

Vec2 velocity_unchecked(const Vec2& p, double t, const DoubleGyreParams& params) {
  const double a = params.epsilon * std::sin(params.omega * t);
  const double b = 1.0 - 2.0 * a;
  const double f = a * p.x() * p.x() + b * p.x();
  const double dfdx = 2.0 * a * p.x() + b;
  const double u = -kPi * params.amplitude * std::sin(kPi * f) * std::cos(kPi * p.y());
  const double v = kPi * params.amplitude * std::cos(kPi * f) * std::sin(kPi * p.y()) * dfdx;
  return {u, v};
}

Vec2 velocity(const Vec2& p, double t, const DoubleGyreParams& params) {
  check_in_domain(p);
  return velocity_unchecked(p, t, params);
}

SnapshotMatrix build_snapshot_matrix(const GridSpec& grid, const TimeGrid& times,
                                     const DoubleGyreParams& params) {
  grid.validate();
  times.validate();
  params.validate();

  const int n_loc = grid.node_count();
  SnapshotMatrix out;
  out.grid = grid;
  out.times = times;
  out.data.resize(2 * n_loc, times.count);

  for (int k = 0; k < times.count; ++k) {
    const double t = times.time_at(k);
    for (int id = 0; id < n_loc; ++id) {
      const Vec2 vel = velocity_unchecked(grid.node_position(id), t, params);
      out.data(id, k) = vel.x();
      out.data(n_loc + id, k) = vel.y();
    }
  }

  out.mean_field = out.data.rowwise().mean();
  out.data.colwise() -= out.mean_field;
  return out;
}

}  // namespace dcsflow
