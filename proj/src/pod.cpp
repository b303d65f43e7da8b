#include "dcsflow/pod.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "dcsflow/errors.hpp"

namespace dcsflow {

namespace {

constexpr double kEnergyFloor = 1e-12;

/// Smallest r whose cumulative squared-singular-value energy reaches the
/// requested fraction. `squared_energies` must be sorted nonincreasing.
int rank_for_energy(const Eigen::VectorXd& squared_energies, double fraction) {
  const double total = squared_energies.sum();
  if (total <= 0.0) return 1;  // degenerate data: keep a single mode
  double cumulative = 0.0;
  for (Eigen::Index i = 0; i < squared_energies.size(); ++i) {
    cumulative += squared_energies(i);
    if (cumulative >= fraction * total) return static_cast<int>(i) + 1;
  }
  return static_cast<int>(squared_energies.size());
}

/// Deterministic sign convention: the first component with non-negligible
/// magnitude is made positive.
void fix_mode_signs(Eigen::MatrixXd& modes) {
  for (Eigen::Index k = 0; k < modes.cols(); ++k) {
    const double scale = modes.col(k).cwiseAbs().maxCoeff();
    if (scale == 0.0) continue;
    for (Eigen::Index i = 0; i < modes.rows(); ++i) {
      const double v = modes(i, k);
      if (std::abs(v) > 1e-12 * scale) {
        if (v < 0.0) modes.col(k) = -modes.col(k);
        break;
      }
    }
  }
}

void check_nonempty(const SnapshotMatrix& snapshots) {
  if (snapshots.data.size() == 0)
    throw ValidationError("pod: snapshot matrix is empty");
}

int resolve_rank(const PodTruncation& trunc, const Eigen::VectorXd& squared, Eigen::Index max_rank) {
  trunc.validate();
  if (trunc.count > 0) {
    if (trunc.count > max_rank)
      throw ValidationError("pod: requested mode count exceeds min(rows, cols)");
    return trunc.count;
  }
  return std::min<int>(rank_for_energy(squared, trunc.energy_fraction),
                       static_cast<int>(max_rank));
}

}  // namespace

PodTruncation PodTruncation::by_count(int r) {
  PodTruncation t;
  t.count = r;
  return t;
}

PodTruncation PodTruncation::by_energy(double fraction) {
  PodTruncation t;
  t.count = 0;
  t.energy_fraction = fraction;
  return t;
}

void PodTruncation::validate() const {
  if (count < 0) throw ValidationError("pod truncation: count must be nonnegative");
  if (count == 0 && (energy_fraction <= 0.0 || energy_fraction > 1.0))
    throw ValidationError("pod truncation: energy fraction must lie in (0, 1]");
}

PodBasis pod_svd(const SnapshotMatrix& snapshots, const PodTruncation& trunc) {
  check_nonempty(snapshots);
  Eigen::BDCSVD<Eigen::MatrixXd> svd(snapshots.data, Eigen::ComputeThinU);
  const Eigen::VectorXd& sigma = svd.singularValues();
  const Eigen::VectorXd squared = sigma.array().square();
  const int r = resolve_rank(trunc, squared, sigma.size());

  PodBasis basis;
  basis.flavor = PodFlavor::svd;
  basis.grid = snapshots.grid;
  basis.mean_field = snapshots.mean_field;
  basis.modes = svd.matrixU().leftCols(r);
  basis.energies = sigma.head(r).cwiseMax(0.0);
  fix_mode_signs(basis.modes);
  const double top = basis.energies.size() ? basis.energies(0) : 0.0;
  basis.rank_deficient = (top <= 0.0) || (basis.energies.minCoeff() <= kEnergyFloor * top);
  return basis;
}

PodBasis pod_covariance(const SnapshotMatrix& snapshots, const PodTruncation& trunc) {
  check_nonempty(snapshots);
  const Eigen::Index n = snapshots.data.cols();
  Eigen::MatrixXd cov;
  if (n > 1) {
    cov = snapshots.data * snapshots.data.transpose() / static_cast<double>(n - 1);
  } else {
    // A single snapshot has no sample covariance; treat as degenerate.
    cov = Eigen::MatrixXd::Zero(snapshots.data.rows(), snapshots.data.rows());
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success)
    throw NumericalError("pod: covariance eigendecomposition failed");

  // SelfAdjointEigenSolver sorts ascending; flip to nonincreasing.
  const Eigen::VectorXd values = eig.eigenvalues().reverse();
  const Eigen::VectorXd clamped = values.cwiseMax(0.0);
  const int r = resolve_rank(trunc, clamped, std::min(snapshots.data.rows(), snapshots.data.cols()));

  PodBasis basis;
  basis.flavor = PodFlavor::covariance_eigen;
  basis.grid = snapshots.grid;
  basis.mean_field = snapshots.mean_field;
  basis.modes.resize(cov.rows(), r);
  for (int k = 0; k < r; ++k)
    basis.modes.col(k) = eig.eigenvectors().col(cov.rows() - 1 - k);
  basis.energies = clamped.head(r);
  fix_mode_signs(basis.modes);
  const double top = basis.energies.size() ? basis.energies(0) : 0.0;
  basis.rank_deficient = (top <= 0.0) || (basis.energies.minCoeff() <= kEnergyFloor * top);
  return basis;
}

Eigen::MatrixXd temporal_coefficients(const PodBasis& basis, const SnapshotMatrix& snapshots) {
  if (basis.modes.rows() != snapshots.data.rows())
    throw ValidationError("temporal coefficients: basis and snapshots disagree on row layout");
  return basis.modes.transpose() * snapshots.data;
}

namespace {

struct BilinearStencil {
  int id00, id10, id01, id11;
  double w00, w10, w01, w11;
  int exact_id = -1;  // set when p coincides with a node; read it bit-for-bit
};

double snap(double f) {
  const double r = std::round(f);
  return std::abs(f - r) < 1e-9 ? r : f;
}

BilinearStencil locate(const GridSpec& grid, const Vec2& p) {
  const double fx = snap((p.x() - grid.x_range.lo) / grid.dx());
  const double fy = snap((p.y() - grid.y_range.lo) / grid.dy());
  const int i = std::clamp(static_cast<int>(std::floor(fx)), 0, grid.nx - 2);
  const int j = std::clamp(static_cast<int>(std::floor(fy)), 0, grid.ny - 2);
  const double sx = std::clamp(fx - i, 0.0, 1.0);
  const double sy = std::clamp(fy - j, 0.0, 1.0);
  BilinearStencil st;
  st.id00 = grid.node_id(i, j);
  st.id10 = grid.node_id(i + 1, j);
  st.id01 = grid.node_id(i, j + 1);
  st.id11 = grid.node_id(i + 1, j + 1);
  st.w00 = (1.0 - sx) * (1.0 - sy);
  st.w10 = sx * (1.0 - sy);
  st.w01 = (1.0 - sx) * sy;
  st.w11 = sx * sy;
  const bool on_x = (sx == 0.0 || sx == 1.0);
  const bool on_y = (sy == 0.0 || sy == 1.0);
  if (on_x && on_y)
    st.exact_id = grid.node_id(i + (sx == 1.0 ? 1 : 0), j + (sy == 1.0 ? 1 : 0));
  return st;
}

}  // namespace

Eigen::MatrixX2d mode_values_at(const PodBasis& basis, const Vec2& p) {
  if (!basis.grid.contains(p))
    throw ValidationError("mode_values_at: position outside the grid domain");
  const int n_loc = basis.grid.node_count();
  const BilinearStencil st = locate(basis.grid, p);
  Eigen::MatrixX2d out(basis.rank(), 2);
  for (int k = 0; k < basis.rank(); ++k) {
    const auto& col = basis.modes.col(k);
    if (st.exact_id >= 0) {
      out(k, 0) = col(st.exact_id);
      out(k, 1) = col(n_loc + st.exact_id);
      continue;
    }
    out(k, 0) = st.w00 * col(st.id00) + st.w10 * col(st.id10) + st.w01 * col(st.id01) +
                st.w11 * col(st.id11);
    out(k, 1) = st.w00 * col(n_loc + st.id00) + st.w10 * col(n_loc + st.id10) +
                st.w01 * col(n_loc + st.id01) + st.w11 * col(n_loc + st.id11);
  }
  return out;
}

Vec2 interpolate_field(const Eigen::VectorXd& field, const GridSpec& grid, const Vec2& p) {
  const int n_loc = grid.node_count();
  if (field.size() != 2 * n_loc)
    throw ValidationError("interpolate_field: vector length does not match the grid");
  const BilinearStencil st = locate(grid, p);
  if (st.exact_id >= 0) return {field(st.exact_id), field(n_loc + st.exact_id)};
  const double u = st.w00 * field(st.id00) + st.w10 * field(st.id10) + st.w01 * field(st.id01) +
                   st.w11 * field(st.id11);
  const double v = st.w00 * field(n_loc + st.id00) + st.w10 * field(n_loc + st.id10) +
                   st.w01 * field(n_loc + st.id01) + st.w11 * field(n_loc + st.id11);
  return {u, v};
}

}  // namespace dcsflow
