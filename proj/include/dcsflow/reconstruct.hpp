#pragma once

#include <Eigen/Core>
#include <memory>
#include <span>
#include <vector>

#include "dcsflow/flow.hpp"
#include "dcsflow/pod.hpp"

namespace dcsflow {

struct PointMeasurement {
  Vec2 position;
  double time = 0.0;
  Vec2 velocity;
};

struct CoefficientFit {
  Eigen::VectorXd coefficients;
  bool underdetermined = false;  // fewer measurement rows than modes
  double residual = 0.0;         // ||Phi_r a - b||_2 on the restricted system
};

/// Ridge least squares for the mode coefficients at one time instant:
///   a = argmin ||Phi_r a - (u_meas - mean)||^2 + lambda ||a||^2,
/// lambda = 1e-8 * sigma_max(Phi_r)^2. Each measurement contributes a u and a
/// v row, interpolated bilinearly at its position.
CoefficientFit fit_coefficients(std::span<const PointMeasurement> measurements,
                                const PodBasis& basis);

/// u_hat = mean + Phi a over all grid nodes and both components.
Eigen::VectorXd reconstruct(const Eigen::VectorXd& coefficients, const PodBasis& basis);

enum class ErrorNorm { entrywise_abs_sum, rms };

double field_error(const Eigen::VectorXd& u_hat, const Eigen::VectorXd& u_star,
                   ErrorNorm norm = ErrorNorm::entrywise_abs_sum);

/// Ground-truth flow access for reconstruction scoring and energy costs.
class FieldSampler {
 public:
  virtual ~FieldSampler() = default;
  virtual Vec2 velocity_at(const Vec2& p, double t) const = 0;
  /// Full stacked field (mean included) on the grid at time t.
  virtual Eigen::VectorXd grid_snapshot(double t) const = 0;
  virtual const GridSpec& grid() const = 0;
};

/// Analytic double gyre truth. When a snapshot matrix is attached,
/// grid_snapshot() returns the nearest stored column (plus mean) instead of
/// re-evaluating the whole grid; pointwise velocity stays analytic.
class DoubleGyreSampler : public FieldSampler {
 public:
  DoubleGyreSampler(const DoubleGyreParams& params, const GridSpec& grid);
  DoubleGyreSampler(const DoubleGyreParams& params, const SnapshotMatrix& snapshots);

  Vec2 velocity_at(const Vec2& p, double t) const override;
  Eigen::VectorXd grid_snapshot(double t) const override;
  const GridSpec& grid() const override { return grid_; }

 private:
  DoubleGyreParams params_;
  GridSpec grid_;
  const SnapshotMatrix* snapshots_ = nullptr;
};

enum class AccumulationMode {
  per_instant,        // only the current step's measurement enters the fit
  cumulative_window,  // measurements accumulate; `window` caps the history
};

struct ReconstructionPolicy {
  AccumulationMode mode = AccumulationMode::cumulative_window;
  int window = 50;  // 0 -> unbounded history (steady-flow semantics)
};

struct TrajectoryReconstruction {
  double total_error = 0.0;          // E
  std::vector<double> step_errors;   // e(t_i), full-grid abs-sum per step
  int underdetermined_steps = 0;
};

class Trajectory;  // trajopt.hpp

/// Walks the trajectory: at each time step, gathers the measurement set per
/// the policy, fits coefficients, reconstructs the full grid, and accumulates
/// the entrywise absolute error against the truth. Steps with too few
/// measurements produce large errors and an underdetermined count, not
/// failures.
TrajectoryReconstruction trajectory_reconstruction_error(
    const Trajectory& traj, const PodBasis& basis, const FieldSampler& truth,
    const ReconstructionPolicy& policy = {});

struct FieldEstimate {
  Eigen::VectorXd estimate;   // mean + Phi a at the chosen step
  Eigen::VectorXd reference;  // truth grid snapshot at the same time
  int step = 0;
  bool underdetermined = false;
};

/// Full-grid reconstruction at one trajectory step (step < 0 means the final
/// one), using the same measurement policy as the error walk.
FieldEstimate reconstruct_at_step(const Trajectory& traj, const PodBasis& basis,
                                  const FieldSampler& truth, const ReconstructionPolicy& policy,
                                  int step = -1);

}  // namespace dcsflow
