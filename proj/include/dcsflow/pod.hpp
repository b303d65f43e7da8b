#pragma once

#include <Eigen/Core>

#include "dcsflow/flow.hpp"
#include "dcsflow/types.hpp"

namespace dcsflow {

enum class PodFlavor { svd, covariance_eigen };

/// Mode-count selection: an explicit count, or the smallest r whose
/// cumulative energy (squared singular values) reaches `energy_fraction`.
struct PodTruncation {
  int count = 0;                  // 0 -> use energy_fraction
  double energy_fraction = 0.999;

  static PodTruncation by_count(int r);
  static PodTruncation by_energy(double fraction);
  void validate() const;
};

/// Orthonormal spatial modes with their energies, sorted nonincreasing.
/// `energies` holds singular values for the svd flavor and covariance
/// eigenvalues (= sigma^2 / (n-1)) for the covariance flavor.
struct PodBasis {
  Eigen::MatrixXd modes;       // 2*node_count x r, orthonormal columns
  Eigen::VectorXd energies;    // r, nonincreasing, clamped at 0
  Eigen::VectorXd mean_field;  // 2*node_count
  GridSpec grid;
  PodFlavor flavor = PodFlavor::svd;
  bool rank_deficient = false;  // some retained energies are numerically zero

  int rank() const { return static_cast<int>(modes.cols()); }
};

/// Modes = leading left singular vectors of the centered data.
PodBasis pod_svd(const SnapshotMatrix& snapshots, const PodTruncation& trunc = {});

/// Modes from the eigendecomposition of X X^T / (n - 1), n = snapshot count.
/// Eigenvectors are renormalized to unit norm; the scale lives in `energies`.
PodBasis pod_covariance(const SnapshotMatrix& snapshots, const PodTruncation& trunc = {});

/// M_T = Phi^T X_centered, one row of time coefficients per mode.
Eigen::MatrixXd temporal_coefficients(const PodBasis& basis, const SnapshotMatrix& snapshots);

/// Bilinear interpolation of each mode at p: row k holds (phi_k_u, phi_k_v).
/// Exact at grid nodes.
Eigen::MatrixX2d mode_values_at(const PodBasis& basis, const Vec2& p);

/// Bilinear interpolation of a stacked (u over v) field vector at p.
Vec2 interpolate_field(const Eigen::VectorXd& field, const GridSpec& grid, const Vec2& p);

}  // namespace dcsflow
