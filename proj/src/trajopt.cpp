#include "dcsflow/trajopt.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <string>
#include <thread>

#include "dcsflow/errors.hpp"
#include "dcsflow/rng.hpp"

namespace dcsflow {

namespace {

constexpr double kDurationFloor = 1e-9;  // keeps sample times defined while penalized

}  // namespace

void SegmentPlan::validate() const {
  if (knots.size() < 2) throw ValidationError("segment plan: need start and goal knots");
  if (steps_per_segment < 1) throw ValidationError("segment plan: steps per segment must be >= 1");
  if (durations.size() != segment_count())
    throw ValidationError("segment plan: one duration per segment required");
  for (Eigen::Index k = 0; k < durations.size(); ++k)
    if (!(durations(k) > 0.0) || !std::isfinite(durations(k)))
      throw ValidationError("segment plan: durations must be positive");
}

SplineControls SplineControls::zero(int segments) {
  SplineControls c;
  c.knot_velocities = Eigen::Matrix2Xd::Zero(2, segments + 1);
  c.bubble = Eigen::Matrix2Xd::Zero(2, segments);
  return c;
}

void CostWeights::validate() const {
  if (duration < 0.0 || recon < 0.0 || energy < 0.0)
    throw ValidationError("cost weights: weights must be nonnegative");
  if (duration == 0.0 && recon == 0.0 && energy == 0.0)
    throw ValidationError("cost weights: at least one weight must be positive");
}

namespace {

/// Quartic monomial coefficients for one segment: cubic Hermite through the
/// endpoints plus w * (tau/d)^2 (1 - tau/d)^2, which vanishes with zero slope
/// at both ends.
Eigen::Matrix<double, 2, 5> segment_coefficients(const Vec2& p0, const Vec2& p1, const Vec2& v0,
                                                 const Vec2& v1, const Vec2& w, double d) {
  Eigen::Matrix<double, 2, 5> c;
  const Vec2 dp = p1 - p0 - v0 * d;
  const Vec2 dv = v1 - v0;
  const double d2 = d * d, d3 = d2 * d, d4 = d3 * d;
  c.col(0) = p0;
  c.col(1) = v0;
  c.col(2) = 3.0 * dp / d2 - dv / d + w / d2;
  c.col(3) = -2.0 * dp / d3 + dv / d2 - 2.0 * w / d3;
  c.col(4) = w / d4;
  return c;
}

Vec2 eval_position(const Eigen::Matrix<double, 2, 5>& c, double tau) {
  return c.col(0) + tau * (c.col(1) + tau * (c.col(2) + tau * (c.col(3) + tau * c.col(4))));
}

Vec2 eval_velocity(const Eigen::Matrix<double, 2, 5>& c, double tau) {
  return c.col(1) + tau * (2.0 * c.col(2) + tau * (3.0 * c.col(3) + tau * 4.0 * c.col(4)));
}

}  // namespace

Trajectory build_spline(const SegmentPlan& plan, const SplineControls& controls) {
  plan.validate();
  const int segments = plan.segment_count();
  if (controls.knot_velocities.cols() != segments + 1 || controls.bubble.cols() != segments)
    throw ValidationError("spline controls: size does not match the plan");

  const int q = plan.steps_per_segment;
  Trajectory traj;
  traj.plan = plan;
  traj.coefficients.resize(static_cast<size_t>(segments));
  const int total = plan.total_steps();
  traj.timestamps.assign(static_cast<size_t>(total) + 1, 0.0);
  traj.positions.resize(2, total + 1);
  traj.velocities.resize(2, total + 1);

  double t_start = 0.0;
  for (int k = 0; k < segments; ++k) {
    const double d = plan.durations(k);
    const Vec2 p0 = plan.knots[static_cast<size_t>(k)];
    const Vec2 p1 = plan.knots[static_cast<size_t>(k) + 1];
    const Vec2 v0 = controls.knot_velocities.col(k);
    const Vec2 v1 = controls.knot_velocities.col(k + 1);
    const auto coeff = segment_coefficients(p0, p1, v0, v1, controls.bubble.col(k), d);
    traj.coefficients[static_cast<size_t>(k)] = coeff;

    for (int j = 0; j < q; ++j) {
      const int idx = k * q + j;
      const double tau = d * j / q;
      traj.timestamps[static_cast<size_t>(idx)] = t_start + tau;
      if (j == 0) {
        // Knot samples carry the knot values exactly.
        traj.positions.col(idx) = p0;
        traj.velocities.col(idx) = v0;
      } else {
        traj.positions.col(idx) = eval_position(coeff, tau);
        traj.velocities.col(idx) = eval_velocity(coeff, tau);
      }
    }
    t_start += d;
  }
  traj.timestamps[static_cast<size_t>(total)] = t_start;
  traj.positions.col(total) = plan.knots.back();
  traj.velocities.col(total) = controls.knot_velocities.col(segments);
  return traj;
}

namespace {

int segment_of(const Trajectory& traj, double t) {
  const int segments = traj.plan.segment_count();
  double t_start = 0.0;
  for (int k = 0; k < segments; ++k) {
    const double t_end = t_start + traj.plan.durations(k);
    if (t <= t_end || k == segments - 1) return k;
    t_start = t_end;
  }
  return segments - 1;
}

double segment_start(const Trajectory& traj, int k) {
  double t = 0.0;
  for (int i = 0; i < k; ++i) t += traj.plan.durations(i);
  return t;
}

}  // namespace

Vec2 Trajectory::position_at(double t) const {
  const double tc = std::clamp(t, 0.0, duration());
  const int k = segment_of(*this, tc);
  return eval_position(coefficients[static_cast<size_t>(k)], tc - segment_start(*this, k));
}

Vec2 Trajectory::velocity_at(double t) const {
  const double tc = std::clamp(t, 0.0, duration());
  const int k = segment_of(*this, tc);
  return eval_velocity(coefficients[static_cast<size_t>(k)], tc - segment_start(*this, k));
}

double energy_cost(const Trajectory& traj, const FieldSampler& flow) {
  double total = 0.0;
  for (int i = 0; i < traj.positions.cols(); ++i) {
    const Vec2 rel =
        traj.velocities.col(i) -
        flow.velocity_at(traj.positions.col(i), traj.timestamps[static_cast<size_t>(i)]);
    total += rel.squaredNorm();
  }
  return total;
}

namespace {

CostBreakdown make_breakdown(double d, double e, double f, const CostWeights& w) {
  CostBreakdown out;
  out.duration = d;
  out.recon_error = e;
  out.energy = f;
  out.total = w.duration * d + w.recon * e + w.energy * f;
  return out;
}

}  // namespace

CostBreakdown total_cost(const Trajectory& traj, const PodBasis& basis,
                         const FieldSampler& truth, const CostWeights& weights,
                         const ReconstructionPolicy& policy) {
  weights.validate();
  const double d = traj.duration();
  const double e = trajectory_reconstruction_error(traj, basis, truth, policy).total_error;
  const double f = energy_cost(traj, truth);
  return make_breakdown(d, e, f, weights);
}

namespace {

struct DecisionLayout {
  int segments = 0;
  int size() const { return segments + 2 * (segments + 1) + 2 * segments; }

  Eigen::VectorXd pack(const Eigen::VectorXd& durations, const SplineControls& c) const {
    Eigen::VectorXd x(size());
    x.head(segments) = durations;
    for (int k = 0; k <= segments; ++k)
      x.segment(segments + 2 * k, 2) = c.knot_velocities.col(k);
    const int offset = segments + 2 * (segments + 1);
    for (int k = 0; k < segments; ++k) x.segment(offset + 2 * k, 2) = c.bubble.col(k);
    return x;
  }

  void unpack(const Eigen::VectorXd& x, Eigen::VectorXd& durations, SplineControls& c) const {
    durations = x.head(segments);
    c.knot_velocities.resize(2, segments + 1);
    c.bubble.resize(2, segments);
    for (int k = 0; k <= segments; ++k)
      c.knot_velocities.col(k) = x.segment(segments + 2 * k, 2);
    const int offset = segments + 2 * (segments + 1);
    for (int k = 0; k < segments; ++k) c.bubble.col(k) = x.segment(offset + 2 * k, 2);
  }
};

struct PenaltyEvaluation {
  double penalized = 0.0;
  double objective = 0.0;
  double violation = 0.0;  // max constraint violation (inf norm)
  CostBreakdown cost;
};

class TrajectoryProblem {
 public:
  TrajectoryProblem(std::vector<Vec2> knots, const PodBasis& basis, const FieldSampler& truth,
                    const CostWeights& weights, const TrajectoryLimits& limits,
                    const OptimizeOptions& opts)
      : basis_(basis), truth_(truth), weights_(weights), limits_(limits), opts_(opts) {
    plan_.knots = std::move(knots);
    plan_.steps_per_segment = opts.steps_per_segment;
    layout_.segments = plan_.segment_count();
  }

  SegmentPlan& plan() { return plan_; }
  const DecisionLayout& layout() const { return layout_; }

  Trajectory assemble(const Eigen::VectorXd& x) const {
    Eigen::VectorXd durations;
    SplineControls controls;
    layout_.unpack(x, durations, controls);
    SegmentPlan plan = plan_;
    plan.durations = durations.cwiseMax(kDurationFloor);
    return build_spline(plan, controls);
  }

  PenaltyEvaluation evaluate(const Eigen::VectorXd& x, double mu) const {
    PenaltyEvaluation ev;
    const Trajectory traj = assemble(x);

    const double d = traj.duration();
    const double e = weights_.recon > 0.0
                         ? trajectory_reconstruction_error(traj, basis_, truth_,
                                                           opts_.recon_policy)
                               .total_error
                         : 0.0;
    const double f = weights_.energy > 0.0 ? energy_cost(traj, truth_) : 0.0;
    ev.cost = make_breakdown(d, e, f, weights_);
    ev.objective = ev.cost.total;

    // Exterior quadratic penalties: speed, box, duration ordering.
    double penalty = 0.0;
    double viol = 0.0;
    for (int i = 0; i < traj.positions.cols(); ++i) {
      const double speed = traj.velocities.col(i).norm();
      const double excess = speed - limits_.speed_max;
      if (excess > 0.0) {
        penalty += excess * excess;
        viol = std::max(viol, excess);
      }
      const Vec2 p = traj.positions.col(i);
      const double bx = std::max({limits_.x_bounds.lo - p.x(), p.x() - limits_.x_bounds.hi, 0.0});
      const double by = std::max({limits_.y_bounds.lo - p.y(), p.y() - limits_.y_bounds.hi, 0.0});
      penalty += bx * bx + by * by;
      viol = std::max({viol, bx, by});
    }
    const Eigen::VectorXd raw = x.head(layout_.segments);
    for (int k = 0; k < layout_.segments; ++k) {
      const double gap = limits_.min_segment_duration - raw(k);
      if (gap > 0.0) {
        penalty += gap * gap;
        viol = std::max(viol, gap);
      }
    }

    ev.penalized = ev.objective + mu * penalty;
    ev.violation = viol;
    return ev;
  }

  /// Central-difference gradient of the penalized objective.
  Eigen::VectorXd gradient(const Eigen::VectorXd& x, double mu) const {
    Eigen::VectorXd g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double h = opts_.fd_step * std::max(1.0, std::abs(x(i)));
      Eigen::VectorXd xp = x, xm = x;
      xp(i) += h;
      xm(i) -= h;
      g(i) = (evaluate(xp, mu).penalized - evaluate(xm, mu).penalized) / (2.0 * h);
    }
    return g;
  }

  /// Uniform time dilation: scaling durations by s and knot velocities by 1/s
  /// keeps the path geometry and divides every sample speed by s exactly.
  /// Used to restore the speed cap without disturbing waypoint interpolation.
  void dilate_to_speed_cap(Eigen::VectorXd& x) const {
    const Trajectory traj = assemble(x);
    double vmax = 0.0;
    for (int i = 0; i < traj.velocities.cols(); ++i)
      vmax = std::max(vmax, traj.velocities.col(i).norm());
    if (vmax <= limits_.speed_max || limits_.speed_max <= 0.0) return;
    const double s = vmax / limits_.speed_max * (1.0 + 1e-12);
    x.head(layout_.segments) *= s;
    x.segment(layout_.segments, 2 * (layout_.segments + 1)) /= s;
    // Bubble weights are positional offsets; the path shape keeps them as-is.
  }

 private:
  SegmentPlan plan_;
  DecisionLayout layout_;
  const PodBasis& basis_;
  const FieldSampler& truth_;
  CostWeights weights_;
  TrajectoryLimits limits_;
  OptimizeOptions opts_;
};

}  // namespace

OptimizationResult optimize_trajectory(std::span<const Vec2> waypoints, const Vec2& start,
                                       const Vec2& goal, const PodBasis& basis,
                                       const FieldSampler& truth, const CostWeights& weights,
                                       const TrajectoryLimits& limits,
                                       const OptimizeOptions& opts) {
  weights.validate();
  if (!(limits.speed_max > 0.0))
    throw ValidationError("trajectory optimization: speed limit must be positive");

  std::vector<Vec2> knots;
  knots.reserve(waypoints.size() + 2);
  knots.push_back(start);
  knots.insert(knots.end(), waypoints.begin(), waypoints.end());
  knots.push_back(goal);
  for (size_t k = 0; k < knots.size(); ++k) {
    if (!limits.x_bounds.contains(knots[k].x()) || !limits.y_bounds.contains(knots[k].y()))
      throw ValidationError("trajectory optimization: knot " + std::to_string(k) +
                            " lies outside the position bounds");
  }
  if (limits.flow_speed_bound > 0.0 && limits.speed_max <= limits.flow_speed_bound) {
    // Straight-line feasibility heuristic: upstream legs may be unreachable.
    size_t longest = 1;
    double len = -1.0;
    for (size_t k = 1; k < knots.size(); ++k) {
      const double l = (knots[k] - knots[k - 1]).norm();
      if (l > len) {
        len = l;
        longest = k;
      }
    }
    throw ValidationError("trajectory optimization: speed limit " +
                          std::to_string(limits.speed_max) +
                          " does not exceed the flow speed bound " +
                          std::to_string(limits.flow_speed_bound) + "; leg " +
                          std::to_string(longest) + " may be unreachable");
  }

  if (opts.steps_per_segment < 1)
    throw ValidationError("trajectory optimization: steps per segment must be >= 1");

  TrajectoryProblem problem(knots, basis, truth, weights, limits, opts);
  const int segments = problem.plan().segment_count();

  // Initial guess: piecewise-straight legs at 0.8 * speed_max.
  const double nominal = 0.8 * limits.speed_max;
  Eigen::VectorXd durations(segments);
  std::vector<Vec2> leg_velocity(static_cast<size_t>(segments));
  for (int k = 0; k < segments; ++k) {
    const Vec2 leg = knots[static_cast<size_t>(k) + 1] - knots[static_cast<size_t>(k)];
    const double len = leg.norm();
    durations(k) = std::max(len / nominal, 10.0 * limits.min_segment_duration);
    leg_velocity[static_cast<size_t>(k)] = len > 0.0 ? Vec2(leg / durations(k)) : Vec2(0.0, 0.0);
  }
  SplineControls controls = SplineControls::zero(segments);
  controls.knot_velocities.col(0) = leg_velocity.front();
  controls.knot_velocities.col(segments) = leg_velocity.back();
  for (int k = 1; k < segments; ++k)
    controls.knot_velocities.col(k) =
        0.5 * (leg_velocity[static_cast<size_t>(k) - 1] + leg_velocity[static_cast<size_t>(k)]);

  Eigen::VectorXd x = problem.layout().pack(durations, controls);

  OptimizationResult result;
  double mu = opts.penalty_init;
  bool inner_converged = false;
  PenaltyEvaluation ev = problem.evaluate(x, mu);

  for (int round = 0; round < opts.max_outer; ++round) {
    result.round_offsets.push_back(static_cast<int>(result.inner_history.size()));
    ev = problem.evaluate(x, mu);
    inner_converged = false;
    double step_size = 0.1;

    for (int iter = 0; iter < opts.max_inner; ++iter) {
      const Eigen::VectorXd grad = problem.gradient(x, mu);
      const double grad_norm = grad.norm();
      if (!(grad_norm > 0.0)) {
        inner_converged = true;
        break;
      }
      const Eigen::VectorXd direction = grad / grad_norm;

      // Backtracking Armijo line search on the normalized direction; never
      // accepts an increase.
      double sigma = step_size;
      bool accepted = false;
      PenaltyEvaluation trial;
      while (sigma > 1e-14) {
        trial = problem.evaluate(x - sigma * direction, mu);
        if (trial.penalized <= ev.penalized - 1e-4 * sigma * grad_norm) {
          accepted = true;
          break;
        }
        sigma *= 0.5;
      }
      if (!accepted) {
        inner_converged = true;
        break;
      }

      x -= sigma * direction;
      const double previous = ev.penalized;
      ev = trial;
      ++result.iterations;
      result.inner_history.push_back(ev.penalized);
      step_size = sigma * 2.0;

      if (std::abs(previous - ev.penalized) <= opts.cost_tol * std::abs(ev.penalized)) {
        inner_converged = true;
        break;
      }
    }

    problem.dilate_to_speed_cap(x);
    ev = problem.evaluate(x, mu);
    if (ev.violation < opts.constraint_tol && inner_converged) break;
    mu *= opts.penalty_growth;
  }

  result.trajectory = problem.assemble(x);
  result.cost = total_cost(result.trajectory, basis, truth, weights, opts.recon_policy);
  result.constraint_violation = ev.violation;
  result.converged = inner_converged && ev.violation < opts.constraint_tol;
  return result;
}

ShuffleResult shuffle_and_optimize(const WaypointSet& waypoints, int c2, const Vec2& start,
                                   const Vec2& goal, const PodBasis& basis,
                                   const FieldSampler& truth, const CostWeights& weights,
                                   const TrajectoryLimits& limits, std::uint64_t seed,
                                   const OptimizeOptions& opts, int threads) {
  if (c2 < 1) throw ValidationError("shuffle: need at least one trial");

  const int m = static_cast<int>(waypoints.ids.size());
  std::vector<std::vector<int>> orders(static_cast<size_t>(c2));
  for (int j = 0; j < c2; ++j) {
    std::vector<int> order(static_cast<size_t>(m));
    for (int i = 0; i < m; ++i) order[static_cast<size_t>(i)] = i;
    if (j > 0) {
      Rng rng(derive_seed(seed, "shuffle", static_cast<std::uint64_t>(j)));
      rng.shuffle(order);
    }
    orders[static_cast<size_t>(j)] = std::move(order);
  }

  std::vector<ShuffleTrial> trials(static_cast<size_t>(c2));
  std::vector<OptimizationResult> results(static_cast<size_t>(c2));

  auto run_trial = [&](int j) {
    ShuffleTrial& trial = trials[static_cast<size_t>(j)];
    trial.order = orders[static_cast<size_t>(j)];
    try {
      std::vector<Vec2> sequence(static_cast<size_t>(m));
      for (int i = 0; i < m; ++i)
        sequence[static_cast<size_t>(i)] =
            waypoints.positions[static_cast<size_t>(trial.order[static_cast<size_t>(i)])];
      results[static_cast<size_t>(j)] =
          optimize_trajectory(sequence, start, goal, basis, truth, weights, limits, opts);
      trial.cost = results[static_cast<size_t>(j)].cost;
      trial.converged = results[static_cast<size_t>(j)].converged;
    } catch (const std::exception& e) {
      trial.failed = true;
      trial.error = e.what();
    }
  };

  const int workers = std::min(std::max(1, threads), c2);
  if (workers == 1) {
    for (int j = 0; j < c2; ++j) run_trial(j);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (int j = next.fetch_add(1); j < c2; j = next.fetch_add(1)) run_trial(j);
      });
    for (auto& th : pool) th.join();
  }

  int best = -1;
  for (int j = 0; j < c2; ++j) {
    if (trials[static_cast<size_t>(j)].failed) continue;
    if (best < 0 ||
        trials[static_cast<size_t>(j)].cost.total < trials[static_cast<size_t>(best)].cost.total)
      best = j;
  }
  if (best < 0) {
    std::string detail = "shuffle: every trajectory trial failed;";
    for (int j = 0; j < c2; ++j)
      detail += " trial " + std::to_string(j) + ": " + trials[static_cast<size_t>(j)].error;
    throw NumericalError(detail);
  }

  ShuffleResult out;
  out.best = std::move(results[static_cast<size_t>(best)]);
  out.best_trial = best;
  out.trials = std::move(trials);
  return out;
}

}  // namespace dcsflow
