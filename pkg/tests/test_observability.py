import numpy as np
import pytest

from objectslam.errors import DimensionMismatchError
from objectslam.group import pos_block, rot_block
from objectslam.harness import observability_experiment
from objectslam.lie import skew
from objectslam.observability import (JacobianLog, build_observability_matrix,
                                      invariant_gauge_basis, null_space,
                                      std_estimated_gauge_basis,
                                      std_ideal_gauge_basis,
                                      subspace_contained, check_invariant_null_space,
                                      check_standard_null_space)


def test_single_step_returns_h():
    rng = np.random.default_rng(0)
    h = rng.normal(size=(6, 12))
    log = JacobianLog("riekf", "estimated", 1)
    log.append(np.eye(12), h)
    assert np.array_equal(build_observability_matrix(log), h)


def test_identity_transitions_stack_raw_h():
    rng = np.random.default_rng(1)
    hs = [rng.normal(size=(6, 12)) for _ in range(4)]
    log = JacobianLog("riekf", "estimated", 1)
    for h in hs:
        log.append(np.eye(12), h)
    assert np.allclose(build_observability_matrix(log), np.vstack(hs))


def test_three_step_product_matches_hand_assembly():
    # oracle: accumulate the F products explicitly and multiply by hand
    rng = np.random.default_rng(2)
    fs = [np.eye(12) for _ in range(3)]
    for f in fs:
        f[pos_block(0, 1), rot_block(0)] = -skew(rng.normal(size=3))
    hs = [rng.normal(size=(6, 12)) for _ in range(3)]
    log = JacobianLog("stdekf", "estimated", 1)
    for f, h in zip(fs, hs):
        log.append(f, h)
    expected = np.vstack([hs[0], hs[1] @ fs[0], hs[2] @ fs[1] @ fs[0]])
    assert np.allclose(build_observability_matrix(log), expected, atol=1e-12)


def test_steps_without_observations_are_skipped():
    rng = np.random.default_rng(3)
    f1 = np.eye(12)
    f1[pos_block(0, 1), rot_block(0)] = -skew(rng.normal(size=3))
    h2 = rng.normal(size=(6, 12))
    log = JacobianLog("stdekf", "estimated", 1)
    log.append(f1, None)
    log.append(np.eye(12), h2)
    assert np.allclose(build_observability_matrix(log), h2 @ f1)


def test_null_space_trivial_cases():
    assert null_space(np.zeros((4, 5))).dimension == 5
    assert null_space(np.eye(7)).dimension == 0


def test_null_space_constructed_rank():
    rng = np.random.default_rng(4)
    for rank in (2, 5, 8):
        a = rng.normal(size=(20, rank))
        b = rng.normal(size=(rank, 12))
        ns = null_space(a @ b)
        assert ns.dimension == 12 - rank
        assert np.allclose(ns.basis.T @ ns.basis, np.eye(12 - rank), atol=1e-10)
        assert np.linalg.norm((a @ b) @ ns.basis) < 1e-8


def test_subspace_containment_measure():
    rng = np.random.default_rng(5)
    b = np.linalg.qr(rng.normal(size=(10, 6)))[0]
    inside = b @ rng.normal(size=(6, 3))
    outside = rng.normal(size=(10, 3))
    assert subspace_contained(inside, b) < 1e-10
    assert subspace_contained(outside, b) > 1e-3


def test_invariant_noisy_runs_have_six_dim_null_space():
    for k in (1, 3):
        log, _ = observability_experiment("riekf", k, 15, seed=2, noisy=True)
        report = check_invariant_null_space(log)
        assert report.null_dim == 6
        assert report.basis_residual < 1e-8 * report.sigma_max
        assert report.passed


def test_invariant_ideal_run():
    log, _ = observability_experiment("riekf", 1, 10, seed=3, noisy=False)
    report = check_invariant_null_space(log)
    assert report.null_dim == 6
    assert report.passed


def test_invariant_single_step_contains_basis():
    log, _ = observability_experiment("riekf", 1, 1, seed=4, noisy=True)
    assert len(log.H) == 1
    report = check_invariant_null_space(log)
    assert report.null_dim >= 6
    assert report.basis_residual < 1e-10


def test_invariant_prefix_rows_annihilate_basis():
    log, _ = observability_experiment("riekf", 2, 12, seed=5, noisy=True)
    basis = invariant_gauge_basis(2)
    obs = build_observability_matrix(log)
    for rows in range(6, obs.shape[0] + 1, 6):
        assert np.linalg.norm(obs[:rows] @ basis) < 1e-9


def test_null_dimension_monotone_in_steps():
    log, _ = observability_experiment("stdekf", 1, 12, seed=6, noisy=True)
    dims = []
    for t in range(1, len(log.F) + 1):
        prefix = JacobianLog("stdekf", "estimated", 1, F=log.F[:t], H=log.H[:t])
        obs = build_observability_matrix(prefix)
        dims.append(null_space(obs).dimension)
    assert all(a >= b for a, b in zip(dims, dims[1:]))


def test_standard_ideal_noise_free_circle():
    log, anchor = observability_experiment("ideal", 1, 20, seed=7, noisy=False)
    report = check_standard_null_space(log, initial_state=anchor)
    assert report.null_dim == 6
    assert report.basis_residual < 1e-8 * report.sigma_max
    assert report.containment_residual < 1e-8
    assert report.passed


def test_standard_estimated_noisy_run():
    log, _ = observability_experiment("stdekf", 1, 20, seed=8, noisy=True)
    report = check_standard_null_space(log)
    assert report.null_dim == 3
    assert report.basis_residual < 1e-8 * report.sigma_max
    assert report.passed


def test_standard_estimated_on_truth_degenerates_to_six():
    # estimates equal to the truth reduce the estimated case to the ideal one
    log, anchor = observability_experiment("stdekf", 1, 20, seed=9, noisy=False)
    obs = build_observability_matrix(log)
    assert null_space(obs).dimension == 6
    ideal_basis = std_ideal_gauge_basis(anchor.robot_pos, anchor.feature_pos)
    assert np.linalg.norm(obs @ ideal_basis) < 1e-9


def test_standard_translation_basis_is_subspace_of_ideal_basis():
    rng = np.random.default_rng(10)
    robot_pos = rng.normal(size=3)
    feature_pos = rng.normal(size=(2, 3))
    wide = std_ideal_gauge_basis(robot_pos, feature_pos)
    narrow = std_estimated_gauge_basis(2)
    assert subspace_contained(narrow, wide) < 1e-10


def test_empty_log_rejected():
    with pytest.raises(DimensionMismatchError):
        build_observability_matrix(JacobianLog("riekf", "estimated", 1))


def test_dimension_mismatch_rejected():
    log = JacobianLog("riekf", "estimated", 1)
    with pytest.raises(DimensionMismatchError):
        log.append(np.eye(11), None)
