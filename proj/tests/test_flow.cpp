#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "dcsflow/errors.hpp"
#include "dcsflow/flow.hpp"
#include "helpers.hpp"

using namespace dcsflow;

namespace {
constexpr double kPi = std::numbers::pi;
}

TEST_CASE("stream function fixed values") {
  DoubleGyreParams params;
  params.amplitude = 0.1;
  params.epsilon = 0.25;

  // sin(pi * 1) = 0 on the top wall.
  CHECK(stream_function({0.5, 1.0}, 0.37, params) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(stream_function({0.5, 1.0}, 3.21, params) == doctest::Approx(0.0).epsilon(1e-14));

  // t = 0 makes f(x) = x; sin(pi/2)^2 = 1.
  CHECK(stream_function({0.5, 0.5}, 0.0, params) == doctest::Approx(0.1).epsilon(1e-14));

  // f(1, 0) = 1, sin(pi) = 0, for any amplitude and epsilon.
  params.amplitude = 0.7;
  params.epsilon = 0.4;
  CHECK(stream_function({1.0, 0.5}, 0.0, params) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("velocity fixed values") {
  DoubleGyreParams params;
  params.amplitude = 0.1;
  params.epsilon = 0.25;

  const Vec2 center = velocity({0.5, 0.5}, 0.0, params);
  CHECK(center.x() == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(center.y() == doctest::Approx(0.0).epsilon(1e-14));

  const Vec2 quarter = velocity({0.5, 0.25}, 0.0, params);
  CHECK(quarter.x() == doctest::Approx(-0.1 * kPi * std::cos(kPi / 4.0)));
  CHECK(quarter.x() == doctest::Approx(-0.2221).epsilon(1e-3));
  CHECK(quarter.y() == doctest::Approx(0.0).epsilon(1e-14));

  // No flow through the horizontal walls.
  for (const double x : {0.1, 0.77, 1.5, 1.93}) {
    for (const double y : {0.0, 1.0}) {
      CHECK(velocity({x, y}, 0.63, params).y() == doctest::Approx(0.0).epsilon(1e-13));
    }
  }
}

TEST_CASE("out-of-domain positions are rejected") {
  DoubleGyreParams params;
  CHECK_THROWS_AS(stream_function({-0.1, 0.5}, 0.0, params), ValidationError);
  CHECK_THROWS_AS(velocity({2.1, 0.5}, 0.0, params), ValidationError);
  CHECK_THROWS_AS(velocity({1.0, 1.2}, 0.0, params), ValidationError);
}

TEST_CASE("parameter validation") {
  DoubleGyreParams params;
  params.epsilon = 0.5;
  CHECK_THROWS_AS(params.validate(), ValidationError);
  params.epsilon = 0.25;
  params.amplitude = 0.0;
  CHECK_THROWS_AS(params.validate(), ValidationError);
}

TEST_CASE("velocity is the curl of the stream function") {
  // Central differences of psi reproduce (u, v) within O(h^2).
  DoubleGyreParams params;
  const double t = 0.42;
  const Vec2 p{0.73, 0.41};
  double prev_err = -1.0;
  for (const double h : {1e-3, 5e-4}) {
    const double dpsi_dy =
        (stream_function({p.x(), p.y() + h}, t, params) -
         stream_function({p.x(), p.y() - h}, t, params)) /
        (2.0 * h);
    const double dpsi_dx =
        (stream_function({p.x() + h, p.y()}, t, params) -
         stream_function({p.x() - h, p.y()}, t, params)) /
        (2.0 * h);
    const Vec2 v = velocity(p, t, params);
    const double err = std::abs(v.x() + dpsi_dy) + std::abs(v.y() - dpsi_dx);
    CHECK(err < 1e-5);
    if (prev_err > 0.0) CHECK(err < prev_err);  // shrinking with h
    prev_err = err;
  }
}

TEST_CASE("incompressibility at interior points") {
  DoubleGyreParams params;
  const double t = 1.7;
  const double h = 1e-4;
  for (const Vec2 p : {Vec2{0.5, 0.5}, Vec2{1.3, 0.2}, Vec2{1.9, 0.8}}) {
    const double du_dx =
        (velocity({p.x() + h, p.y()}, t, params).x() -
         velocity({p.x() - h, p.y()}, t, params).x()) /
        (2.0 * h);
    const double dv_dy =
        (velocity({p.x(), p.y() + h}, t, params).y() -
         velocity({p.x(), p.y() - h}, t, params).y()) /
        (2.0 * h);
    CHECK(std::abs(du_dx + dv_dy) < 1e-6);
  }
}

TEST_CASE("periodicity in time") {
  DoubleGyreParams params;
  const double period = 2.0 * kPi / params.omega;
  for (const Vec2 p : {Vec2{0.3, 0.6}, Vec2{1.8, 0.1}}) {
    const Vec2 a = velocity(p, 0.9, params);
    const Vec2 b = velocity(p, 0.9 + period, params);
    CHECK((a - b).norm() < 1e-12);
  }
}

TEST_CASE("no flow through the vertical walls") {
  // f(0) = 0 and f(2, t) = 4a + 2b = 2, so sin(pi f) = 0 at x in {0, 2}.
  DoubleGyreParams params;
  for (const double y : {0.2, 0.5, 0.9}) {
    for (const double t : {0.0, 0.7, 4.2}) {
      CHECK(std::abs(velocity({0.0, y}, t, params).x()) < 1e-12);
      CHECK(std::abs(velocity({2.0, y}, t, params).x()) < 1e-12);
    }
  }
}

TEST_CASE("snapshot matrix at benchmark scale") {
  GridSpec grid;  // 50 x 25
  TimeGrid times;  // dt 0.01, 2001 snapshots
  const SnapshotMatrix snaps = build_snapshot_matrix(grid, times, DoubleGyreParams{});
  CHECK(snaps.data.rows() == 2500);
  CHECK(snaps.data.cols() == 2001);
  CHECK(snaps.mean_field.size() == 2500);
  // Centering: every row has zero temporal mean.
  CHECK(snaps.data.rowwise().mean().cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("steady flow gives a zero centered matrix") {
  GridSpec grid;
  grid.nx = 9;
  grid.ny = 5;
  TimeGrid times;
  times.count = 17;
  DoubleGyreParams params;
  params.epsilon = 0.0;
  const SnapshotMatrix snaps = build_snapshot_matrix(grid, times, params);
  CHECK(snaps.data.cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("single snapshot centers to zero and keeps the sample as mean") {
  GridSpec grid;
  grid.nx = 7;
  grid.ny = 4;
  TimeGrid times;
  times.count = 1;
  DoubleGyreParams params;
  const SnapshotMatrix snaps = build_snapshot_matrix(grid, times, params);
  CHECK(snaps.data.cwiseAbs().maxCoeff() == 0.0);
  const Vec2 v = velocity(grid.node_position(5), times.t0, params);
  CHECK(snaps.mean_field(5) == doctest::Approx(v.x()).epsilon(1e-15));
  CHECK(snaps.mean_field(grid.node_count() + 5) == doctest::Approx(v.y()).epsilon(1e-15));
}

TEST_CASE("grid indexing round trip") {
  GridSpec grid;
  grid.nx = 13;
  grid.ny = 7;
  for (int j = 0; j < grid.ny; ++j) {
    for (int i = 0; i < grid.nx; ++i) {
      const int id = grid.node_id(i, j);
      const Vec2 p = grid.node_position(id);
      CHECK(p.x() == doctest::Approx(grid.x_range.lo + i * grid.dx()).epsilon(1e-15));
      CHECK(p.y() == doctest::Approx(grid.y_range.lo + j * grid.dy()).epsilon(1e-15));
    }
  }
}
