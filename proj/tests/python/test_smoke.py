"""Smoke tests for the python bindings."""

import json
import math

import numpy as np
import pytest

import dcsflow


@pytest.fixture(scope="module")
def small_snapshots():
    grid = dcsflow.GridSpec(nx=9, ny=5)
    times = dcsflow.TimeGrid(t0=0.0, dt=0.1, count=41)
    return dcsflow.build_snapshot_matrix(grid, times, dcsflow.DoubleGyreParams())


def test_velocity_values():
    params = dcsflow.DoubleGyreParams(amplitude=0.1, epsilon=0.25)
    u, v = dcsflow.velocity([0.5, 0.25], 0.0, params)
    assert u == pytest.approx(-0.1 * math.pi * math.cos(math.pi / 4))
    assert v == pytest.approx(0.0, abs=1e-14)
    assert dcsflow.stream_function([0.5, 0.5], 0.0, params) == pytest.approx(0.1)


def test_out_of_domain_raises():
    with pytest.raises(ValueError):
        dcsflow.velocity([2.5, 0.5], 0.0, dcsflow.DoubleGyreParams())


def test_snapshot_matrix_shape(small_snapshots):
    assert small_snapshots.data.shape == (2 * 9 * 5, 41)
    assert small_snapshots.mean_field.shape == (2 * 9 * 5,)
    assert np.abs(small_snapshots.data.mean(axis=1)).max() < 1e-12


def test_pod_orthonormal(small_snapshots):
    basis = dcsflow.pod_svd(small_snapshots, mode_count=4)
    gram = basis.modes.T @ basis.modes
    assert np.abs(gram - np.eye(4)).max() < 1e-10
    energies = basis.energies
    assert all(energies[i] >= energies[i + 1] for i in range(len(energies) - 1))

    cov = dcsflow.pod_covariance(small_snapshots, mode_count=4)
    n = small_snapshots.data.shape[1]
    assert cov.energies == pytest.approx(energies**2 / (n - 1), rel=1e-8)


def test_basis_pursuit_identity():
    theta = np.eye(6)
    y = np.zeros(6)
    y[1], y[4] = 2.0, -0.5
    sol = dcsflow.solve_basis_pursuit(theta, y)
    assert sol.converged
    assert np.abs(sol.coefficients - y).max() < 1e-6


def test_select_and_plan(small_snapshots):
    basis = dcsflow.pod_svd(small_snapshots, mode_count=3)
    chosen = dcsflow.select_waypoints(small_snapshots, basis, m=2, c1=3, seed=5)
    assert len(chosen.ids) == 2
    assert chosen.recon_error == min(chosen.trial_errors)
    rescored = dcsflow.score_waypoint_set(chosen.ids, basis, small_snapshots)
    assert rescored == chosen.recon_error

    grid = small_snapshots.grid
    waypoints = [grid.node_position(i) for i in chosen.ids]
    traj, cost, _converged = dcsflow.plan_trajectory(
        waypoints,
        [0.25, 0.25],
        [1.75, 0.75],
        small_snapshots,
        basis,
        dcsflow.DoubleGyreParams(),
        max_inner=8,
    )
    assert cost.total == pytest.approx(
        cost.duration + cost.recon_error + cost.energy, rel=1e-12
    )
    speeds = np.linalg.norm(traj.velocities, axis=0)
    assert speeds.max() <= 0.7 + 1e-6
    assert traj.positions.shape[1] == len(traj.timestamps)


def test_run_pipeline(tmp_path):
    config = {
        "seed": 3,
        "grid": {"nx": 9, "ny": 5},
        "time": {"dt": 0.1, "count": 21},
        "pod": {"mode_count": 2},
        "selection": {"waypoint_count": 2, "trial_count": 2},
        "trajectory": {
            "steps_per_segment": 4,
            "shuffle_trials": 1,
            "max_outer": 1,
            "max_inner": 4,
        },
    }
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps(config))
    files = dcsflow.run_pipeline(config_path, out=tmp_path / "out")
    names = {f.rsplit("/", 1)[-1] for f in files}
    assert "manifest.json" in names
    assert "waypoints.json" in names
    assert (tmp_path / "out" / "trajectory.csv").exists()
