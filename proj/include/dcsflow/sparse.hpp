#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <vector>

#include "dcsflow/pod.hpp"

namespace dcsflow {

enum class MeasurementKind { delta_impulse, gaussian, bernoulli };

/// Random data mask C (m x n, m < n). Delta-impulse matrices only store the
/// selected column per row; gaussian/bernoulli entries are scaled by 1/sqrt(m)
/// so that columns have unit expected norm.
struct MeasurementMatrix {
  MeasurementKind kind = MeasurementKind::delta_impulse;
  int rows = 0;
  int cols = 0;
  Eigen::MatrixXd dense;          // gaussian / bernoulli
  std::vector<int> impulse_cols;  // delta-impulse: column index per row, distinct
  std::uint64_t seed = 0;

  /// C * rhs.
  Eigen::MatrixXd apply(const Eigen::MatrixXd& rhs) const;
};

MeasurementMatrix random_measurement_matrix(MeasurementKind kind, int m, int n,
                                            std::uint64_t seed);

struct BasisPursuitOptions {
  int max_iterations = 10000;        // total inner iterations across stages
  double residual_tol = 1e-6;        // scaled by ||y||_2
  double step_tol = 1e-8;            // iterate-change tolerance
  double continuation_factor = 0.5;  // gamma shrink per stage
  double gamma_floor_scale = 1e-7;   // floor relative to ||Theta^T y||_inf
};

struct SparseSolution {
  Eigen::VectorXd coefficients;  // s_hat
  double residual = 0.0;         // ||Theta s - y||_2
  int iterations = 0;
  bool converged = false;
  double gamma_final = 0.0;      // penalty weight of the last stage
};

/// min ||s||_1 subject to ||Theta s - y||_2 <= eps_noise, solved through the
/// penalized form  min 0.5 ||Theta s - y||_2^2 + gamma ||s||_1  with
/// shrinkage-thresholding iterations, backtracking step size, and
/// continuation on gamma. `gamma` <= 0 picks the starting weight
/// automatically from ||Theta^T y||_inf.
SparseSolution solve_basis_pursuit(const Eigen::MatrixXd& Theta, const Eigen::VectorXd& y,
                                   double eps_noise, double gamma,
                                   const BasisPursuitOptions& opts = {});

/// Ordered sensing locations with their reconstruction score.
struct WaypointSet {
  int m = 0;
  std::vector<int> ids;         // distinct grid node ids, draw order
  std::vector<Vec2> positions;  // matching node positions
  double recon_error = 0.0;     // entrywise-abs-sum error over all snapshots
  std::uint64_t seed = 0;
  int best_trial = 0;
  std::vector<double> trial_errors;
  std::vector<bool> trial_converged;  // basis-pursuit convergence per trial
  bool underdetermined = false;       // winning set's fit had fewer rows than modes
};

struct ScoreResult {
  double error = 0.0;
  bool underdetermined = false;
};

/// Eq.-(10)/(11)-style score: per snapshot, fit mode coefficients by ridge
/// least squares restricted to the given locations (u and v rows per
/// location), reconstruct the centered field, and accumulate the entrywise
/// absolute error over every row and snapshot.
ScoreResult score_waypoint_set(std::span<const int> ids, const PodBasis& basis,
                               const SnapshotMatrix& snapshots);

struct SelectionOptions {
  int snapshot_index = 0;   // column used for the per-trial basis-pursuit fit
  double gamma = 0.0;       // 0 -> automatic
  double eps_noise = 0.0;
  BasisPursuitOptions solver;
  int threads = 1;
};

/// Best-of-c1 waypoint selection: per trial, draw a fresh delta-impulse
/// measurement matrix over grid locations, solve basis pursuit on the
/// representative snapshot against the SVD transform basis of the data, take
/// the sampled locations as the candidate set, and score it over all
/// snapshots. Returns the argmin-error candidate (lowest trial index wins
/// ties). Deterministic given the seed.
WaypointSet select_waypoints(const SnapshotMatrix& snapshots, const PodBasis& basis, int m,
                             int c1, std::uint64_t seed, const SelectionOptions& opts = {});

}  // namespace dcsflow
