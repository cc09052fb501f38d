"""POD, hierarchical updates and Gappy reconstruction against dense oracles."""

import numpy as np
import pytest

from plastrom.errors import GappyRankError, PlastromError
from plastrom.reduction import (
    GappyReconstructor,
    InnerProduct,
    ReducedBasis,
    gappy_reconstruct,
    hpod_update,
    load_basis,
    pod,
    save_basis,
)
from plastrom.solvers import SaddleSystem, kernel_projector


@pytest.fixture
def diag_ip():
    rng = np.random.default_rng(0)
    return InnerProduct.diagonal(0.5 + rng.random(40))


def _rand_snapshots(n, k, seed):
    return np.random.default_rng(seed).normal(size=(n, k))


# ----------------------------------------------------------------------
# plain POD
# ----------------------------------------------------------------------

def test_pod_single_snapshot(diag_ip):
    u = _rand_snapshots(40, 1, 1)[:, 0]
    basis = pod(u[:, None], diag_ip, 1e-6)
    assert basis.n_modes == 1
    norm = np.sqrt(diag_ip.dot(u, u))
    assert np.allclose(np.abs(basis.modes[:, 0]), np.abs(u) / norm,
                       rtol=1e-12)
    assert basis.eigenvalues[0] == pytest.approx(norm**2, rel=1e-12)


def test_pod_repeated_snapshot_is_rank_one(diag_ip):
    u = _rand_snapshots(40, 1, 2)[:, 0]
    S = np.tile(u[:, None], (1, 5))
    basis = pod(S, diag_ip, 1e-12)
    assert basis.n_modes == 1
    assert basis.eigenvalues[0] == pytest.approx(5 * diag_ip.dot(u, u),
                                                 rel=1e-12)


def test_pod_matches_dense_eigensolver_oracle(diag_ip):
    S = _rand_snapshots(40, 3, 3)
    basis = pod(S, diag_ip, 1e-12)
    # oracle: dense eigendecomposition of the 3x3 Gramian
    C = S.T @ (diag_ip.weights[:, None] * S)
    lam = np.sort(np.linalg.eigvalsh(0.5 * (C + C.T)))[::-1]
    assert basis.n_modes == 3
    assert np.allclose(basis.eigenvalues, lam, rtol=1e-10)
    # every snapshot projects back to itself
    for k in range(3):
        coeff = basis.coefficients(S[:, k])
        err = S[:, k] - basis.modes @ coeff
        rel = np.sqrt(diag_ip.dot(err, err) / diag_ip.dot(S[:, k], S[:, k]))
        assert rel <= 1e-10


def test_pod_energy_criterion_counts_modes(diag_ip):
    rng = np.random.default_rng(4)
    Q, _ = np.linalg.qr(rng.normal(size=(40, 3)))
    # orthonormalize under the weighted product, then scale energies
    S = np.zeros((40, 3))
    S[:, 0] = 1.0e0 * Q[:, 0]
    S[:, 1] = 1.0e-2 * Q[:, 1]
    S[:, 2] = 1.0e-4 * Q[:, 2]
    basis_all = pod(S, diag_ip, 1e-12)
    assert basis_all.n_modes == 3
    basis_coarse = pod(S, diag_ip, 1e-1)
    assert basis_coarse.n_modes < 3


def test_pod_orthonormality(diag_ip):
    basis = pod(_rand_snapshots(40, 8, 5), diag_ip, 1e-12)
    assert basis.orthonormality_error() <= 1e-10


def test_pod_optimality_tail_sums(diag_ip):
    """Sum of squared projection errors onto n modes = tail eigenvalues."""
    S = _rand_snapshots(40, 8, 6)
    basis = pod(S, diag_ip, 1e-12)
    lam = basis.eigenvalues
    for n in (1, 3, 5):
        part = basis.truncate(n)
        coeff = part.coefficients(S)
        resid = S - part.modes @ coeff
        err = diag_ip.norms_sq(resid).sum()
        tail = lam[n:].sum()
        assert err == pytest.approx(tail, rel=1e-8)


def test_pod_empty_and_zero_inputs(diag_ip):
    empty = pod(np.zeros((40, 0)), diag_ip, 1e-6)
    assert empty.n_modes == 0
    zero = pod(np.zeros((40, 3)), diag_ip, 1e-6)
    assert zero.n_modes == 0
    with pytest.raises(PlastromError):
        pod(np.zeros((40, 1)), diag_ip, 2.0)


# ----------------------------------------------------------------------
# hierarchical updates
# ----------------------------------------------------------------------

def test_hpod_in_span_snapshots_leave_basis_untouched(diag_ip):
    S = _rand_snapshots(40, 4, 7)
    basis = pod(S, diag_ip, 1e-12)
    mix = S @ np.random.default_rng(8).normal(size=(4, 3))
    updated = hpod_update(basis, mix, 1e-8)
    assert updated is basis


def test_hpod_from_empty_matches_projection_criterion(diag_ip):
    S = _rand_snapshots(40, 4, 9)
    basis = hpod_update(ReducedBasis.empty(40, diag_ip), S, 1e-10)
    for k in range(4):
        coeff = basis.coefficients(S[:, k])
        err = S[:, k] - basis.modes @ coeff
        rel = np.sqrt(diag_ip.dot(err, err) / diag_ip.dot(S[:, k], S[:, k]))
        assert rel <= 1e-10


def test_hpod_joint_oracle_and_hierarchy(diag_ip):
    old = _rand_snapshots(40, 2, 10)
    new = _rand_snapshots(40, 2, 11)
    basis = pod(old, diag_ip, 1e-12)
    old_modes = basis.modes.copy()
    eps = 1e-9
    updated = hpod_update(basis, new, eps)
    # hierarchy: previous modes are a bit-exact prefix
    assert np.array_equal(updated.modes[:, :basis.n_modes], old_modes)
    # all four snapshots are reproduced to the requested tolerance
    union = np.hstack([old, new])
    for k in range(4):
        coeff = updated.coefficients(union[:, k])
        err = union[:, k] - updated.modes @ coeff
        rel = np.sqrt(diag_ip.dot(err, err)
                      / diag_ip.dot(union[:, k], union[:, k]))
        assert rel <= eps
    assert updated.orthonormality_error() <= 1e-10


def test_hpod_minimal_mode_count(diag_ip):
    """Only candidates that reduce the projection error get appended."""
    rng = np.random.default_rng(12)
    base = rng.normal(size=(40, 2))
    basis = pod(base, diag_ip, 1e-12)
    # new snapshots: one strong new direction plus weak noise
    strong = rng.normal(size=40)
    new = np.column_stack([base @ rng.normal(size=2) + strong,
                           base @ rng.normal(size=2) + 1e-8 * strong])
    updated = hpod_update(basis, new, 1e-4)
    assert updated.n_modes == basis.n_modes + 1


def test_hpod_zero_snapshots_no_change(diag_ip):
    basis = pod(_rand_snapshots(40, 2, 13), diag_ip, 1e-12)
    updated = hpod_update(basis, np.zeros((40, 3)), 1e-8)
    assert updated is basis


# ----------------------------------------------------------------------
# constraint inheritance on the plate problem
# ----------------------------------------------------------------------

def test_displacement_modes_satisfy_constraints(plate_disc, plate_cons,
                                                params, plate_trajectory):
    K = plate_disc.assemble_elastic_stiffness(params)
    ip = InnerProduct.stiffness(K)
    saddle = SaddleSystem(K, plate_cons.matrix)
    basis = pod(plate_trajectory.u.T, ip, 1e-10,
                mode_filter=kernel_projector(saddle, plate_cons.matrix))
    assert basis.n_modes >= 3
    BZ = np.abs(plate_cons.matrix @ basis.modes).max(axis=0)
    scale = np.abs(basis.modes).max(axis=0)
    assert np.all(BZ <= 1e-10 * scale)
    assert basis.orthonormality_error() <= 1e-10


# ----------------------------------------------------------------------
# Gappy reconstruction
# ----------------------------------------------------------------------

def _stress_like_basis(n, modes, seed):
    rng = np.random.default_rng(seed)
    weights = 0.1 + rng.random(n)
    ip = InnerProduct.diagonal(weights)
    basis = pod(rng.normal(size=(n, modes)), ip, 1e-12)
    return basis, weights


def test_gappy_full_mask_recovers_in_span_field():
    basis, weights = _stress_like_basis(60, 4, 14)
    alpha_true = np.array([1.3, -0.4, 0.2, 2.0])
    field = basis.modes @ alpha_true
    mask = np.arange(60)
    alpha, cond = gappy_reconstruct(basis, field, mask, weights)
    assert np.abs(alpha - alpha_true).max() <= 1e-12 * np.abs(alpha_true).max()
    assert cond >= 1.0


def test_gappy_single_mode_single_point_is_a_ratio():
    basis, weights = _stress_like_basis(60, 1, 15)
    value = 3.7
    mask = np.array([17])
    alpha, _ = gappy_reconstruct(basis, np.array([value]), mask,
                                 weights[mask])
    assert alpha[0] == pytest.approx(value / basis.modes[17, 0], rel=1e-13)


def test_gappy_matches_normal_equations_oracle():
    rng = np.random.default_rng(16)
    modes = rng.normal(size=(20, 3))
    weights = 0.2 + rng.random(20)
    ip = InnerProduct.diagonal(weights)
    basis = ReducedBasis(modes, np.ones(3), ip)
    mask = np.sort(rng.choice(20, size=10, replace=False))
    values = rng.normal(size=10)
    alpha, _ = gappy_reconstruct(basis, values, mask, weights[mask])
    A = modes[mask]
    W = np.diag(weights[mask])
    oracle = np.linalg.solve(A.T @ W @ A, A.T @ W @ values)
    assert np.abs(alpha - oracle).max() <= 1e-10 * np.abs(oracle).max()


def test_gappy_rejects_insufficient_or_degenerate_masks():
    basis, weights = _stress_like_basis(60, 4, 17)
    with pytest.raises(GappyRankError, match="sampled entries"):
        GappyReconstructor(basis, np.array([1, 2, 3]), weights[:3])
    # duplicate one row four times: rank deficient
    degenerate = ReducedBasis(np.tile(basis.modes[5][None, :], (6, 1)),
                              basis.eigenvalues, basis.inner_product)
    with pytest.raises(GappyRankError, match="rank deficient"):
        GappyReconstructor(degenerate, np.arange(6), np.ones(6))


# ----------------------------------------------------------------------
# persistence
# ----------------------------------------------------------------------

def test_basis_round_trip(tmp_path, diag_ip):
    basis = pod(_rand_snapshots(40, 5, 18), diag_ip, 1e-12)
    save_basis(tmp_path / "b", basis, meta={"note": "test"})
    again = load_basis(tmp_path / "b", diag_ip)
    assert np.array_equal(basis.modes, again.modes)
    assert np.array_equal(basis.eigenvalues, again.eigenvalues)
    csv = (tmp_path / "b.csv").read_text()
    assert csv.splitlines()[0] == "mode,eigenvalue"
    with pytest.raises(PlastromError, match="inner product"):
        load_basis(tmp_path / "b", InnerProduct.stiffness(None))
