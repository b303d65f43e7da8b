#include "dcsflow/sparse.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <string>
#include <thread>

#include "dcsflow/errors.hpp"
#include "dcsflow/rng.hpp"

namespace dcsflow {

Eigen::MatrixXd MeasurementMatrix::apply(const Eigen::MatrixXd& rhs) const {
  if (rhs.rows() != cols) throw ValidationError("measurement matrix: dimension mismatch");
  if (kind == MeasurementKind::delta_impulse) {
    Eigen::MatrixXd out(rows, rhs.cols());
    for (int r = 0; r < rows; ++r) out.row(r) = rhs.row(impulse_cols[static_cast<size_t>(r)]);
    return out;
  }
  return dense * rhs;
}

MeasurementMatrix random_measurement_matrix(MeasurementKind kind, int m, int n,
                                            std::uint64_t seed) {
  if (m < 1) throw ValidationError("measurement matrix: need at least one row");
  if (m >= n)
    throw ValidationError("measurement matrix: m must be smaller than n (subsampling)");

  MeasurementMatrix out;
  out.kind = kind;
  out.rows = m;
  out.cols = n;
  out.seed = seed;
  Rng rng(seed);

  switch (kind) {
    case MeasurementKind::delta_impulse:
      out.impulse_cols = rng.sample_without_replacement(m, n);
      break;
    case MeasurementKind::gaussian:
      // Entries ~ N(0, 1/m): unit expected column norm.
      out.dense.resize(m, n);
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < m; ++i) out.dense(i, j) = rng.normal() / std::sqrt(double(m));
      break;
    case MeasurementKind::bernoulli:
      out.dense.resize(m, n);
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < m; ++i)
          out.dense(i, j) = (rng.uniform() < 0.5 ? -1.0 : 1.0) / std::sqrt(double(m));
      break;
  }
  return out;
}

namespace {

Eigen::VectorXd soft_threshold(const Eigen::VectorXd& v, double tau) {
  return v.array().sign() * (v.array().abs() - tau).max(0.0);
}

}  // namespace

SparseSolution solve_basis_pursuit(const Eigen::MatrixXd& Theta, const Eigen::VectorXd& y,
                                   double eps_noise, double gamma,
                                   const BasisPursuitOptions& opts) {
  if (Theta.size() == 0) throw ValidationError("basis pursuit: empty system matrix");
  if (Theta.rows() != y.size()) throw ValidationError("basis pursuit: dimension mismatch");
  if (eps_noise < 0.0) throw ValidationError("basis pursuit: eps_noise must be nonnegative");

  SparseSolution sol;
  sol.coefficients = Eigen::VectorXd::Zero(Theta.cols());

  const double y_norm = y.norm();
  if (y_norm == 0.0) {
    sol.residual = 0.0;
    sol.converged = true;
    sol.iterations = 1;
    sol.gamma_final = gamma > 0.0 ? gamma : 0.0;
    return sol;
  }

  const double grad_scale = (Theta.transpose() * y).cwiseAbs().maxCoeff();
  double gam = gamma > 0.0 ? gamma : 0.3 * grad_scale;
  const double gamma_floor = opts.gamma_floor_scale * grad_scale;
  const double target_residual = std::max(eps_noise, opts.residual_tol * y_norm);

  // FISTA with backtracking on the Lipschitz estimate and gradient restarts.
  double lipschitz = std::max(Theta.colwise().squaredNorm().maxCoeff(), 1e-300);
  Eigen::VectorXd x = sol.coefficients;
  Eigen::VectorXd momentum_point = x;
  double t_momentum = 1.0;
  int total_iters = 0;
  bool stage_converged = false;

  while (true) {
    stage_converged = false;
    for (; total_iters < opts.max_iterations;) {
      ++total_iters;
      const Eigen::VectorXd resid = Theta * momentum_point - y;
      const Eigen::VectorXd grad = Theta.transpose() * resid;
      const double f_y = 0.5 * resid.squaredNorm();

      // Backtrack until the quadratic model majorizes f at the prox point.
      Eigen::VectorXd x_next;
      for (;;) {
        x_next = soft_threshold(momentum_point - grad / lipschitz, gam / lipschitz);
        const Eigen::VectorXd diff = x_next - momentum_point;
        const double f_next = 0.5 * (Theta * x_next - y).squaredNorm();
        const double model = f_y + grad.dot(diff) + 0.5 * lipschitz * diff.squaredNorm();
        if (f_next <= model + 1e-15 * std::abs(model)) break;
        lipschitz *= 2.0;
      }

      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_momentum * t_momentum));
      const Eigen::VectorXd step = x_next - x;
      // Gradient restart: kill momentum when it points uphill.
      if ((momentum_point - x_next).dot(step) > 0.0) {
        momentum_point = x_next;
        t_momentum = 1.0;
      } else {
        momentum_point = x_next + ((t_momentum - 1.0) / t_next) * step;
        t_momentum = t_next;
      }

      const double change = step.cwiseAbs().maxCoeff();
      const double scale = std::max(1.0, x_next.cwiseAbs().maxCoeff());
      x = x_next;
      if (change <= opts.step_tol * scale) {
        stage_converged = true;
        break;
      }
    }

    const double residual = (Theta * x - y).norm();
    const bool at_floor = gam <= gamma_floor || gam <= 0.0;
    // Noisy problems stop once the residual constraint holds; the noiseless
    // case keeps shrinking gamma toward its floor (the limit gamma -> 0).
    const bool residual_ok =
        residual <= target_residual && (eps_noise > 0.0 || at_floor);
    if ((residual_ok && stage_converged) || at_floor || total_iters >= opts.max_iterations)
      break;
    if (opts.continuation_factor >= 1.0) break;  // fixed-gamma solve
    gam = std::max(gam * opts.continuation_factor, gamma_floor);
    momentum_point = x;  // warm start next stage
    t_momentum = 1.0;
  }

  sol.coefficients = x;
  sol.residual = (Theta * x - y).norm();
  sol.iterations = total_iters;
  sol.gamma_final = gam;
  sol.converged = stage_converged && sol.residual <= target_residual;
  return sol;
}

ScoreResult score_waypoint_set(std::span<const int> ids, const PodBasis& basis,
                               const SnapshotMatrix& snapshots) {
  const int n_loc = snapshots.grid.node_count();
  if (ids.empty()) throw ValidationError("score: empty waypoint set");
  std::vector<char> seen(static_cast<size_t>(n_loc), 0);
  for (const int id : ids) {
    if (id < 0 || id >= n_loc) throw ValidationError("score: location id out of range");
    if (seen[static_cast<size_t>(id)]++) throw ValidationError("score: duplicate location id");
  }
  if (basis.modes.rows() != snapshots.data.rows())
    throw ValidationError("score: basis and snapshots disagree on row layout");

  const int r = basis.rank();
  ScoreResult out;
  if (r == 0) {
    // Mean-only prediction: the error is the total centered magnitude.
    out.error = snapshots.data.cwiseAbs().sum();
    return out;
  }

  const int rows = 2 * static_cast<int>(ids.size());
  Eigen::MatrixXd restricted(rows, r);
  Eigen::MatrixXd targets(rows, snapshots.data.cols());
  for (size_t k = 0; k < ids.size(); ++k) {
    restricted.row(2 * k) = basis.modes.row(ids[k]);
    restricted.row(2 * k + 1) = basis.modes.row(n_loc + ids[k]);
    targets.row(2 * k) = snapshots.data.row(ids[k]);
    targets.row(2 * k + 1) = snapshots.data.row(n_loc + ids[k]);
  }

  out.underdetermined = rows < r;

  // Ridge-regularized normal equations, one solve for all snapshots.
  Eigen::MatrixXd gram = restricted.transpose() * restricted;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  const double lambda = 1e-8 * std::max(eig.eigenvalues().maxCoeff(), 0.0);
  gram.diagonal().array() += std::max(lambda, 1e-300);
  const Eigen::MatrixXd coeffs = gram.ldlt().solve(restricted.transpose() * targets);

  out.error = (basis.modes * coeffs - snapshots.data).cwiseAbs().sum();
  return out;
}

WaypointSet select_waypoints(const SnapshotMatrix& snapshots, const PodBasis& basis, int m,
                             int c1, std::uint64_t seed, const SelectionOptions& opts) {
  const int n_loc = snapshots.grid.node_count();
  if (m < 1) throw ValidationError("select: waypoint count must be at least 1");
  if (m >= n_loc) throw ValidationError("select: waypoint count must be below the grid size");
  if (c1 < 1) throw ValidationError("select: need at least one trial");
  if (opts.snapshot_index < 0 || opts.snapshot_index >= snapshots.data.cols())
    throw ValidationError("select: representative snapshot index out of range");

  // Transform basis for the sparse-recovery step: the full left singular
  // matrix of the data, independent of the (truncated) scoring basis.
  Eigen::BDCSVD<Eigen::MatrixXd> svd(snapshots.data, Eigen::ComputeThinU);
  const Eigen::MatrixXd& transform = svd.matrixU();

  struct Trial {
    std::vector<int> ids;
    double error = 0.0;
    bool underdetermined = false;
    bool bp_converged = false;
    bool failed = false;
    std::string message;
  };
  std::vector<Trial> trials(static_cast<size_t>(c1));

  auto run_trial = [&](int trial) {
    Trial& t = trials[static_cast<size_t>(trial)];
    try {
      const std::uint64_t sub = derive_seed(seed, "select", static_cast<std::uint64_t>(trial));
      const MeasurementMatrix mask =
          random_measurement_matrix(MeasurementKind::delta_impulse, m, n_loc, sub);
      t.ids = mask.impulse_cols;

      // Both velocity components of each sampled location feed the fit.
      Eigen::MatrixXd theta(2 * m, transform.cols());
      Eigen::VectorXd y(2 * m);
      for (int k = 0; k < m; ++k) {
        const int id = t.ids[static_cast<size_t>(k)];
        theta.row(2 * k) = transform.row(id);
        theta.row(2 * k + 1) = transform.row(n_loc + id);
        y(2 * k) = snapshots.data(id, opts.snapshot_index);
        y(2 * k + 1) = snapshots.data(n_loc + id, opts.snapshot_index);
      }
      const SparseSolution sol =
          solve_basis_pursuit(theta, y, opts.eps_noise, opts.gamma, opts.solver);
      t.bp_converged = sol.converged;

      const ScoreResult score = score_waypoint_set(t.ids, basis, snapshots);
      t.error = score.error;
      t.underdetermined = score.underdetermined;
    } catch (const std::exception& e) {
      t.failed = true;
      t.message = e.what();
    }
  };

  const int threads = std::max(1, opts.threads);
  if (threads == 1 || c1 == 1) {
    for (int i = 0; i < c1; ++i) run_trial(i);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    const int workers = std::min(threads, c1);
    pool.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (int i = next.fetch_add(1); i < c1; i = next.fetch_add(1)) run_trial(i);
      });
    }
    for (auto& th : pool) th.join();
  }

  int best = -1;
  for (int i = 0; i < c1; ++i) {
    const Trial& t = trials[static_cast<size_t>(i)];
    if (t.failed) continue;
    if (best < 0 || t.error < trials[static_cast<size_t>(best)].error) best = i;
  }
  if (best < 0) {
    std::string detail = "select: every trial failed;";
    for (int i = 0; i < c1; ++i)
      detail += " trial " + std::to_string(i) + ": " + trials[static_cast<size_t>(i)].message;
    throw NumericalError(detail);
  }

  const Trial& winner = trials[static_cast<size_t>(best)];
  WaypointSet out;
  out.m = m;
  out.ids = winner.ids;
  out.positions.reserve(winner.ids.size());
  for (const int id : winner.ids) out.positions.push_back(snapshots.grid.node_position(id));
  out.recon_error = winner.error;
  out.seed = seed;
  out.best_trial = best;
  out.underdetermined = winner.underdetermined;
  out.trial_errors.resize(static_cast<size_t>(c1));
  out.trial_converged.resize(static_cast<size_t>(c1));
  for (int i = 0; i < c1; ++i) {
    const Trial& t = trials[static_cast<size_t>(i)];
    out.trial_errors[static_cast<size_t>(i)] =
        t.failed ? std::numeric_limits<double>::quiet_NaN() : t.error;
    out.trial_converged[static_cast<size_t>(i)] = t.bp_converged;
  }
  return out;
}

}  // namespace dcsflow
