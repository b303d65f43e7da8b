#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dcsflow/reconstruct.hpp"
#include "dcsflow/sparse.hpp"
#include "dcsflow/types.hpp"

namespace dcsflow {

/// Knot sequence (g1, waypoints..., g2) with per-segment durations. Every
/// segment carries exactly `steps_per_segment` time steps, so a plan with
/// m waypoints has (m+1) segments and (m+1)*q steps in total.
struct SegmentPlan {
  std::vector<Vec2> knots;
  int steps_per_segment = 10;
  Eigen::VectorXd durations;  // one per segment, > 0

  int segment_count() const { return static_cast<int>(knots.size()) - 1; }
  int total_steps() const { return segment_count() * steps_per_segment; }
  void validate() const;
};

/// Free spline parameters: knot velocities (C1 continuity) and one quartic
/// interior weight per segment and dimension. Each segment is the cubic
/// Hermite through its knots plus w * s^2 (1-s)^2, s = tau/duration, which
/// keeps knot interpolation and knot velocities exact for any w.
struct SplineControls {
  Eigen::Matrix2Xd knot_velocities;  // 2 x (segments + 1)
  Eigen::Matrix2Xd bubble;           // 2 x segments

  static SplineControls zero(int segments);
};

/// Piecewise-quartic trajectory sampled on its plan's time steps.
class Trajectory {
 public:
  std::vector<double> timestamps;   // total_steps + 1, strictly increasing
  Eigen::Matrix2Xd positions;       // 2 x (total_steps + 1)
  Eigen::Matrix2Xd velocities;      // analytic spline derivative at samples
  SegmentPlan plan;
  std::vector<Eigen::Matrix<double, 2, 5>> coefficients;  // per-segment monomial

  int sample_count() const { return static_cast<int>(timestamps.size()); }
  double duration() const { return timestamps.empty() ? 0.0 : timestamps.back(); }
  Vec2 position_at(double t) const;
  Vec2 velocity_at(double t) const;
};

Trajectory build_spline(const SegmentPlan& plan, const SplineControls& controls);

struct CostWeights {
  double duration = 1.0;  // alpha_1
  double recon = 1.0;     // alpha_2
  double energy = 1.0;    // alpha_3
  void validate() const;
};

struct CostBreakdown {
  double duration = 0.0;     // D = t_f
  double recon_error = 0.0;  // E
  double energy = 0.0;       // F
  double total = 0.0;        // J = a1 D + a2 E + a3 F
};

/// F = sum_i ||nu(t_i) - u*(x(t_i), t_i)||^2 over every sample.
double energy_cost(const Trajectory& traj, const FieldSampler& flow);

CostBreakdown total_cost(const Trajectory& traj, const PodBasis& basis,
                         const FieldSampler& truth, const CostWeights& weights,
                         const ReconstructionPolicy& policy = {});

struct TrajectoryLimits {
  double speed_max = 0.7;
  Interval x_bounds{0.0, 2.0};
  Interval y_bounds{0.0, 1.0};
  double min_segment_duration = 1e-3;
  double flow_speed_bound = 0.0;  // > 0 enables the straight-line feasibility check
};

struct OptimizeOptions {
  int steps_per_segment = 10;    // q
  int max_outer = 8;             // penalty continuation rounds
  int max_inner = 120;           // gradient iterations per round
  double penalty_init = 10.0;
  double penalty_growth = 10.0;
  double constraint_tol = 1e-4;
  double cost_tol = 1e-6;        // relative cost change
  double fd_step = 1e-6;         // central-difference step scale
  ReconstructionPolicy recon_policy;
};

struct OptimizationResult {
  Trajectory trajectory;
  CostBreakdown cost;
  bool converged = false;
  double constraint_violation = 0.0;
  int iterations = 0;                  // accepted gradient steps
  std::vector<double> inner_history;   // penalized objective per accepted step
  std::vector<int> round_offsets;      // history index where each round starts
};

/// Locally optimal trajectory through the waypoint sequence. Equality
/// constraints (endpoints, waypoint pass-through) hold exactly by the spline
/// parameterization; speed, box, and duration bounds are enforced with an
/// exterior quadratic penalty of increasing weight, minimized by gradient
/// descent with central-difference gradients and backtracking line search.
OptimizationResult optimize_trajectory(std::span<const Vec2> waypoints, const Vec2& start,
                                       const Vec2& goal, const PodBasis& basis,
                                       const FieldSampler& truth, const CostWeights& weights,
                                       const TrajectoryLimits& limits,
                                       const OptimizeOptions& opts = {});

struct ShuffleTrial {
  std::vector<int> order;  // waypoint permutation used
  CostBreakdown cost;
  bool converged = false;
  bool failed = false;
  std::string error;
};

struct ShuffleResult {
  OptimizationResult best;
  int best_trial = 0;
  std::vector<ShuffleTrial> trials;
};

/// c2 seeded shuffles of the waypoint order (trial 0 keeps the given order),
/// each optimized independently; returns the argmin-J result with lowest
/// trial index winning ties. Trials may run in parallel.
ShuffleResult shuffle_and_optimize(const WaypointSet& waypoints, int c2, const Vec2& start,
                                   const Vec2& goal, const PodBasis& basis,
                                   const FieldSampler& truth, const CostWeights& weights,
                                   const TrajectoryLimits& limits, std::uint64_t seed,
                                   const OptimizeOptions& opts = {}, int threads = 1);

}  // namespace dcsflow
