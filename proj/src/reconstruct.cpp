#include "dcsflow/reconstruct.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "dcsflow/errors.hpp"
#include "dcsflow/trajopt.hpp"

namespace dcsflow {

CoefficientFit fit_coefficients(std::span<const PointMeasurement> measurements,
                                const PodBasis& basis) {
  if (measurements.empty()) throw ValidationError("fit: empty measurement list");
  const int r = basis.rank();
  CoefficientFit fit;
  if (r == 0) {
    fit.coefficients = Eigen::VectorXd();
    return fit;
  }

  const int rows = 2 * static_cast<int>(measurements.size());
  Eigen::MatrixXd restricted(rows, r);
  Eigen::VectorXd target(rows);
  for (size_t k = 0; k < measurements.size(); ++k) {
    const PointMeasurement& meas = measurements[k];
    const Vec2 p = basis.grid.clamp(meas.position);
    const Eigen::MatrixX2d modes = mode_values_at(basis, p);
    restricted.row(2 * k) = modes.col(0).transpose();
    restricted.row(2 * k + 1) = modes.col(1).transpose();
    const Vec2 mean = interpolate_field(basis.mean_field, basis.grid, p);
    target(2 * k) = meas.velocity.x() - mean.x();
    target(2 * k + 1) = meas.velocity.y() - mean.y();
  }

  fit.underdetermined = rows < r;

  Eigen::MatrixXd gram = restricted.transpose() * restricted;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  const double lambda = 1e-8 * std::max(eig.eigenvalues().maxCoeff(), 0.0);
  gram.diagonal().array() += std::max(lambda, 1e-300);
  fit.coefficients = gram.ldlt().solve(restricted.transpose() * target);
  fit.residual = (restricted * fit.coefficients - target).norm();
  return fit;
}

Eigen::VectorXd reconstruct(const Eigen::VectorXd& coefficients, const PodBasis& basis) {
  if (coefficients.size() != basis.rank())
    throw ValidationError("reconstruct: coefficient count does not match the basis rank");
  if (basis.rank() == 0) return basis.mean_field;
  return basis.mean_field + basis.modes * coefficients;
}

double field_error(const Eigen::VectorXd& u_hat, const Eigen::VectorXd& u_star, ErrorNorm norm) {
  if (u_hat.size() != u_star.size()) throw ValidationError("field_error: length mismatch");
  switch (norm) {
    case ErrorNorm::entrywise_abs_sum:
      return (u_hat - u_star).cwiseAbs().sum();
    case ErrorNorm::rms:
      if (u_hat.size() == 0) return 0.0;
      return std::sqrt((u_hat - u_star).squaredNorm() / static_cast<double>(u_hat.size()));
  }
  throw ValidationError("field_error: unknown norm");
}

DoubleGyreSampler::DoubleGyreSampler(const DoubleGyreParams& params, const GridSpec& grid)
    : params_(params), grid_(grid) {}

DoubleGyreSampler::DoubleGyreSampler(const DoubleGyreParams& params,
                                     const SnapshotMatrix& snapshots)
    : params_(params), grid_(snapshots.grid), snapshots_(&snapshots) {}

Vec2 DoubleGyreSampler::velocity_at(const Vec2& p, double t) const {
  return velocity_unchecked(grid_.clamp(p), t, params_);
}

Eigen::VectorXd DoubleGyreSampler::grid_snapshot(double t) const {
  if (snapshots_ != nullptr) {
    const int k = snapshots_->times.nearest_index(t);
    return snapshots_->mean_field + snapshots_->data.col(k);
  }
  const int n_loc = grid_.node_count();
  Eigen::VectorXd field(2 * n_loc);
  for (int id = 0; id < n_loc; ++id) {
    const Vec2 vel = velocity_unchecked(grid_.node_position(id), t, params_);
    field(id) = vel.x();
    field(n_loc + id) = vel.y();
  }
  return field;
}

namespace {

/// Interpolated mode rows and centered measured velocities for every sample
/// of the trajectory; shared by the error walk and the per-step estimator.
void build_sample_rows(const Trajectory& traj, const PodBasis& basis, const FieldSampler& truth,
                       Eigen::MatrixXd& rows, Eigen::VectorXd& targets) {
  const int samples = traj.sample_count();
  const int r = basis.rank();
  rows.resize(2 * samples, std::max(r, 1));
  targets.resize(2 * samples);
  for (int i = 0; i < samples; ++i) {
    const double t = traj.timestamps[static_cast<size_t>(i)];
    const Vec2 p = basis.grid.clamp(traj.positions.col(i));
    const Vec2 measured = truth.velocity_at(p, t);
    const Vec2 mean = interpolate_field(basis.mean_field, basis.grid, p);
    if (r > 0) {
      const Eigen::MatrixX2d modes = mode_values_at(basis, p);
      rows.row(2 * i) = modes.col(0).transpose();
      rows.row(2 * i + 1) = modes.col(1).transpose();
    }
    targets(2 * i) = measured.x() - mean.x();
    targets(2 * i + 1) = measured.y() - mean.y();
  }
}

int window_start(const ReconstructionPolicy& policy, int step) {
  if (policy.mode == AccumulationMode::per_instant) return step;
  if (policy.window > 0) return std::max(0, step - policy.window + 1);
  return 0;
}

Eigen::VectorXd windowed_fit(const Eigen::MatrixXd& rows, const Eigen::VectorXd& targets,
                             int first, int count) {
  const auto block = rows.middleRows(2 * first, 2 * count);
  const auto target = targets.segment(2 * first, 2 * count);
  Eigen::MatrixXd gram = block.transpose() * block;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  const double lambda = 1e-8 * std::max(eig.eigenvalues().maxCoeff(), 0.0);
  gram.diagonal().array() += std::max(lambda, 1e-300);
  return gram.ldlt().solve(block.transpose() * target);
}

}  // namespace

TrajectoryReconstruction trajectory_reconstruction_error(const Trajectory& traj,
                                                         const PodBasis& basis,
                                                         const FieldSampler& truth,
                                                         const ReconstructionPolicy& policy) {
  const int samples = traj.sample_count();
  if (samples == 0) throw ValidationError("trajectory reconstruction: empty trajectory");
  if (policy.window < 0) throw ValidationError("trajectory reconstruction: negative window");
  const int r = basis.rank();
  const int n_loc = basis.grid.node_count();

  Eigen::MatrixXd rows;
  Eigen::VectorXd targets;
  build_sample_rows(traj, basis, truth, rows, targets);

  TrajectoryReconstruction out;
  out.step_errors.resize(static_cast<size_t>(samples));

  Eigen::VectorXd coeffs = Eigen::VectorXd::Zero(r);
  for (int i = 0; i < samples; ++i) {
    const int first = window_start(policy, i);
    const int count = i - first + 1;
    if (r > 0) {
      if (2 * count < r) ++out.underdetermined_steps;
      coeffs = windowed_fit(rows, targets, first, count);
    }

    const double t = traj.timestamps[static_cast<size_t>(i)];
    Eigen::VectorXd estimate = basis.mean_field;
    if (r > 0) estimate.noalias() += basis.modes * coeffs;
    const Eigen::VectorXd reference = truth.grid_snapshot(t);
    if (reference.size() != 2 * n_loc)
      throw ValidationError("trajectory reconstruction: truth grid does not match the basis");
    const double err = (estimate - reference).cwiseAbs().sum();
    out.step_errors[static_cast<size_t>(i)] = err;
    out.total_error += err;
  }
  return out;
}

FieldEstimate reconstruct_at_step(const Trajectory& traj, const PodBasis& basis,
                                  const FieldSampler& truth, const ReconstructionPolicy& policy,
                                  int step) {
  const int samples = traj.sample_count();
  if (samples == 0) throw ValidationError("reconstruct_at_step: empty trajectory");
  if (step < 0) step = samples - 1;
  if (step >= samples) throw ValidationError("reconstruct_at_step: step out of range");

  Eigen::MatrixXd rows;
  Eigen::VectorXd targets;
  build_sample_rows(traj, basis, truth, rows, targets);

  FieldEstimate out;
  out.step = step;
  const int r = basis.rank();
  out.estimate = basis.mean_field;
  if (r > 0) {
    const int first = window_start(policy, step);
    const int count = step - first + 1;
    out.underdetermined = 2 * count < r;
    out.estimate.noalias() += basis.modes * windowed_fit(rows, targets, first, count);
  }
  out.reference = truth.grid_snapshot(traj.timestamps[static_cast<size_t>(step)]);
  return out;
}

}  // namespace dcsflow
