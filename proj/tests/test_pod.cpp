#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "dcsflow/errors.hpp"
#include "dcsflow/pod.hpp"
#include "helpers.hpp"

using namespace dcsflow;
using dcsflow::testing::small_double_gyre;
using dcsflow::testing::wrap_matrix;

TEST_CASE("rank-1 data keeps one mode") {
  Eigen::VectorXd left(6), right(4);
  left << 1.0, -2.0, 0.5, 3.0, -1.0, 0.25;
  right << 0.2, -0.7, 1.1, 0.4;
  const SnapshotMatrix snaps = wrap_matrix(left * right.transpose());

  const PodBasis basis = pod_svd(snaps, PodTruncation::by_count(2));
  CHECK(basis.energies(0) > 1e-10);
  CHECK(basis.energies(1) < 1e-12);
  CHECK(basis.rank_deficient);

  const PodBasis rank1 = pod_svd(snaps, PodTruncation::by_count(1));
  const Eigen::MatrixXd recon = rank1.modes * (rank1.modes.transpose() * snaps.data);
  CHECK((recon - snaps.data).norm() < 1e-10);
}

TEST_CASE("full-rank basis reproduces the data") {
  Eigen::MatrixXd data(5, 8);
  std::mt19937_64 engine(11);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (Eigen::Index j = 0; j < data.cols(); ++j)
    for (Eigen::Index i = 0; i < data.rows(); ++i) data(i, j) = dist(engine);
  const SnapshotMatrix snaps = wrap_matrix(data);
  const PodBasis basis = pod_svd(snaps, PodTruncation::by_count(5));
  CHECK(dcsflow::testing::relative_frobenius(
            basis.modes * (basis.modes.transpose() * snaps.data), snaps.data) < 1e-8);
}

TEST_CASE("svd truncation rank from an independent eigen-solve") {
  // Oracle: eigendecomposition of X X^T computed inline, no pod code involved.
  const SnapshotMatrix snaps = small_double_gyre(25, 13, 501, 0.02);
  const PodBasis basis = pod_svd(snaps, PodTruncation::by_energy(0.99));

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(snaps.data * snaps.data.transpose());
  Eigen::VectorXd lambda = eig.eigenvalues().reverse().cwiseMax(0.0);
  const double total = lambda.sum();
  int expected_rank = static_cast<int>(lambda.size());
  double cumulative = 0.0;
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    cumulative += lambda(i);
    if (cumulative >= 0.99 * total) {
      expected_rank = static_cast<int>(i) + 1;
      break;
    }
  }
  CHECK(basis.rank() == expected_rank);
}

TEST_CASE("covariance eigenvalues match sigma^2 / (n-1)") {
  const SnapshotMatrix snaps = small_double_gyre(13, 7, 101);
  const PodBasis svd = pod_svd(snaps, PodTruncation::by_count(5));
  const PodBasis cov = pod_covariance(snaps, PodTruncation::by_count(5));
  const double n = static_cast<double>(snaps.data.cols());
  for (int k = 0; k < 5; ++k) {
    const double expected = svd.energies(k) * svd.energies(k) / (n - 1.0);
    CHECK(cov.energies(k) == doctest::Approx(expected).epsilon(1e-8));
  }
}

TEST_CASE("diagonal two-by-two covariance") {
  Eigen::MatrixXd data = Eigen::MatrixXd::Zero(2, 2);
  data(0, 0) = 3.0;
  data(1, 1) = 1.0;
  const SnapshotMatrix snaps = wrap_matrix(data);
  const PodBasis cov = pod_covariance(snaps, PodTruncation::by_count(2));
  // X X^T / (n-1) with n = 2 snapshots leaves the eigenvalues (9, 1).
  CHECK(cov.energies(0) == doctest::Approx(9.0).epsilon(1e-12));
  CHECK(cov.energies(1) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("zero matrix reports a degenerate rank") {
  const SnapshotMatrix snaps = wrap_matrix(Eigen::MatrixXd::Zero(6, 4));
  const PodBasis cov = pod_covariance(snaps, PodTruncation::by_count(2));
  CHECK(cov.energies.cwiseAbs().maxCoeff() == 0.0);
  CHECK(cov.rank_deficient);
  // Orthonormality still holds for the reported modes.
  const Eigen::MatrixXd gram = cov.modes.transpose() * cov.modes;
  CHECK((gram - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("empty input is rejected") {
  SnapshotMatrix empty;
  CHECK_THROWS_AS(pod_svd(empty, PodTruncation::by_count(1)), ValidationError);
  CHECK_THROWS_AS(pod_covariance(empty, PodTruncation::by_count(1)), ValidationError);
}

TEST_CASE("requested count beyond min(rows, cols) is rejected") {
  const SnapshotMatrix snaps = wrap_matrix(Eigen::MatrixXd::Random(6, 4));
  CHECK_THROWS_AS(pod_svd(snaps, PodTruncation::by_count(5)), ValidationError);
}

TEST_CASE("orthonormality, ordering, and subspace agreement") {
  const SnapshotMatrix snaps = small_double_gyre();
  const PodBasis svd = pod_svd(snaps, PodTruncation::by_count(5));
  const PodBasis cov = pod_covariance(snaps, PodTruncation::by_count(5));

  for (const PodBasis* basis : {&svd, &cov}) {
    const Eigen::MatrixXd gram = basis->modes.transpose() * basis->modes;
    CHECK((gram - Eigen::MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-10);
    for (int k = 0; k + 1 < 5; ++k) CHECK(basis->energies(k) >= basis->energies(k + 1));
    CHECK(basis->energies.minCoeff() >= 0.0);
  }

  // Sign conventions differ per-column; compare the spanned subspaces via
  // principal angles instead.
  Eigen::JacobiSVD<Eigen::MatrixXd> angles(svd.modes.transpose() * cov.modes);
  for (Eigen::Index i = 0; i < angles.singularValues().size(); ++i) {
    const double c = std::clamp(angles.singularValues()(i), -1.0, 1.0);
    CHECK(std::acos(c) < 1e-6);
  }
}

TEST_CASE("Eckart-Young tail formula") {
  const SnapshotMatrix snaps = small_double_gyre(11, 6, 81);
  const Eigen::BDCSVD<Eigen::MatrixXd> svd(snaps.data);
  const Eigen::VectorXd sigma = svd.singularValues();
  for (const int r : {1, 2, 4}) {
    const PodBasis basis = pod_svd(snaps, PodTruncation::by_count(r));
    const double err =
        (snaps.data - basis.modes * (basis.modes.transpose() * snaps.data)).norm();
    const double tail = std::sqrt(sigma.tail(sigma.size() - r).squaredNorm());
    CHECK(err == doctest::Approx(tail).epsilon(1e-8));
  }
}

TEST_CASE("temporal coefficients") {
  const SnapshotMatrix snaps = small_double_gyre(9, 5, 61);

  SUBCASE("full-rank product reproduces the centered data") {
    const int full = static_cast<int>(std::min(snaps.data.rows(), snaps.data.cols()));
    const PodBasis basis = pod_svd(snaps, PodTruncation::by_count(full));
    const Eigen::MatrixXd coeffs = temporal_coefficients(basis, snaps);
    CHECK(coeffs.rows() == full);
    CHECK(coeffs.cols() == snaps.data.cols());
    CHECK(dcsflow::testing::relative_frobenius(basis.modes * coeffs, snaps.data) < 1e-8);
  }

  SUBCASE("rank-1 coefficients are the scaled right singular vector") {
    Eigen::VectorXd left(4), right(6);
    left << 0.5, 1.5, -0.25, 2.0;
    right << 1.0, 0.5, -0.75, 0.25, -1.25, 0.6;
    const SnapshotMatrix rank1 = wrap_matrix(left * right.transpose());
    const PodBasis basis = pod_svd(rank1, PodTruncation::by_count(1));
    const Eigen::MatrixXd coeffs = temporal_coefficients(basis, rank1);
    // Phi^T (l r^T) = (Phi^T l) r^T: proportional to the right factor.
    const Eigen::VectorXd expected = right * left.norm();
    CHECK((coeffs.row(0).transpose().cwiseAbs() - expected.cwiseAbs()).cwiseAbs().maxCoeff() <
          1e-10);
  }

  SUBCASE("dimension mismatches are rejected") {
    const PodBasis basis = pod_svd(snaps, PodTruncation::by_count(2));
    const SnapshotMatrix other = wrap_matrix(Eigen::MatrixXd::Zero(4, 3));
    CHECK_THROWS_AS(temporal_coefficients(basis, other), ValidationError);
  }
}

TEST_CASE("mode interpolation") {
  const SnapshotMatrix snaps = small_double_gyre(9, 5, 41);
  const PodBasis basis = pod_svd(snaps, PodTruncation::by_count(3));
  const GridSpec& grid = basis.grid;
  const int n_loc = grid.node_count();

  SUBCASE("grid nodes return stored values bit-for-bit") {
    for (const int id : {0, 7, n_loc - 1, n_loc / 2}) {
      const Eigen::MatrixX2d values = mode_values_at(basis, grid.node_position(id));
      for (int k = 0; k < 3; ++k) {
        CHECK(values(k, 0) == basis.modes(id, k));
        CHECK(values(k, 1) == basis.modes(n_loc + id, k));
      }
    }
  }

  SUBCASE("cell centers average the four corners") {
    const Vec2 p{grid.x_range.lo + 1.5 * grid.dx(), grid.y_range.lo + 2.5 * grid.dy()};
    const Eigen::MatrixX2d values = mode_values_at(basis, p);
    const int ids[4] = {grid.node_id(1, 2), grid.node_id(2, 2), grid.node_id(1, 3),
                        grid.node_id(2, 3)};
    for (int k = 0; k < 3; ++k) {
      double u = 0.0, v = 0.0;
      for (const int id : ids) {
        u += basis.modes(id, k);
        v += basis.modes(n_loc + id, k);
      }
      CHECK(values(k, 0) == doctest::Approx(u / 4.0).epsilon(1e-14));
      CHECK(values(k, 1) == doctest::Approx(v / 4.0).epsilon(1e-14));
    }
  }

  SUBCASE("bilinear interpolation reproduces linear fields exactly") {
    PodBasis linear = basis;
    linear.modes.resize(2 * n_loc, 1);
    for (int id = 0; id < n_loc; ++id) {
      const Vec2 p = grid.node_position(id);
      linear.modes(id, 0) = 0.3 * p.x() - 1.7 * p.y() + 0.2;
      linear.modes(n_loc + id, 0) = -0.9 * p.x() + 0.4 * p.y() - 1.1;
    }
    linear.energies = Eigen::VectorXd::Ones(1);
    std::mt19937_64 engine(3);
    std::uniform_real_distribution<double> ux(0.0, 2.0), uy(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
      const Vec2 p{ux(engine), uy(engine)};
      const Eigen::MatrixX2d values = mode_values_at(linear, p);
      CHECK(values(0, 0) == doctest::Approx(0.3 * p.x() - 1.7 * p.y() + 0.2).epsilon(1e-12));
      CHECK(values(0, 1) == doctest::Approx(-0.9 * p.x() + 0.4 * p.y() - 1.1).epsilon(1e-12));
    }
  }

  SUBCASE("out-of-domain points are rejected") {
    CHECK_THROWS_AS(mode_values_at(basis, {2.3, 0.5}), ValidationError);
  }
}
