"""Constitutive-level tests: hardening curve, elastic law, radial return.

The plastic oracle integrates the same flow equations independently with
full 3x3 tensors, brentq root solves and 1000x finer increments.
"""

import numpy as np
import pytest
from scipy.optimize import brentq

import plastrom.materials._rr_numpy as rr_numpy
from plastrom.errors import ConstitutiveError
from plastrom.materials import (
    ElastoplasticParams,
    PointState,
    StateBatch,
    consistent_tangent,
    elastic_stress,
    hardening,
    return_map,
    return_map_batch,
)
from plastrom.voigt import elastic_matrix, von_mises

UNIAXIAL = np.array([1.0, 0, 0, 0, 0, 0])


# ----------------------------------------------------------------------
# hardening curve
# ----------------------------------------------------------------------

def test_hardening_at_zero_is_yield_stress(params):
    R, _ = hardening(0.0, params)
    assert R == params.sigma_y


def test_hardening_linear_for_unit_exponent():
    params = ElastoplasticParams(n_pui=1.0)
    for p in (0.0, 1e-4, 5e-3):
        R, dR = hardening(p, params)
        assert R == pytest.approx(params.sigma_y + params.E / params.a_pui * p,
                                  rel=1e-14)
        assert dR == pytest.approx(params.E / params.a_pui, rel=1e-14)


def test_hardening_square_root_case():
    # sigma_y=200, E=200000, a_pui=10, n_pui=2, p=0.01 -> R = 400 exactly
    params = ElastoplasticParams(sigma_y=200.0, E=200000.0, a_pui=10.0,
                                 n_pui=2.0)
    R, dR = hardening(0.01, params)
    assert R == pytest.approx(400.0, abs=1e-10)
    assert dR > 0


def test_hardening_rejects_negative_p(params):
    with pytest.raises(ValueError):
        hardening(-1e-10, params)


def test_hardening_derivative_unbounded_at_zero(params):
    _, dR = hardening(0.0, params)
    assert np.isinf(dR)


# ----------------------------------------------------------------------
# elastic law
# ----------------------------------------------------------------------

def test_elastic_stress_zero_for_matching_plastic_strain(params):
    rng = np.random.default_rng(0)
    eps = rng.normal(size=6)
    assert np.allclose(elastic_stress(eps, eps, params), 0.0, atol=1e-12)


def test_elastic_stress_hydrostatic(params):
    alpha = 3.7e-4
    eps = alpha * np.array([1.0, 1, 1, 0, 0, 0])
    sig = elastic_stress(eps, np.zeros(6), params)
    expected = alpha * params.E / (1 - 2 * params.nu)
    assert np.allclose(sig[:3], expected, rtol=1e-13)
    assert np.allclose(sig[3:], 0.0)


def test_elastic_stress_uniaxial_strain(params):
    alpha = 2e-4
    sig = elastic_stress(alpha * UNIAXIAL, np.zeros(6), params)
    E, nu = params.E, params.nu
    assert sig[0] == pytest.approx(alpha * E * (1 - nu)
                                   / ((1 + nu) * (1 - 2 * nu)), rel=1e-13)


# ----------------------------------------------------------------------
# oracle: independent fine-increment integrator (full 3x3 tensors)
# ----------------------------------------------------------------------

def _oracle_integrate(params, strain_path):
    """Forward integration of the rate equations, one return map per leg,
    written on 3x3 tensors with brentq for the consistency equation."""
    E, nu = params.E, params.nu
    lam = E * nu / ((1 + nu) * (1 - 2 * nu))
    mu = E / (2 * (1 + nu))
    sig = np.zeros((3, 3))
    eps_p = np.zeros((3, 3))
    p = 0.0
    eye = np.eye(3)
    prev = np.zeros((3, 3))
    for eps in strain_path:
        deps = eps - prev
        prev = eps
        sig_tr = sig + lam * np.trace(deps) * eye + 2 * mu * (
            deps - np.trace(deps) / 3 * eye) + 2 * mu * np.trace(deps) / 3 * eye
        s_tr = sig_tr - np.trace(sig_tr) / 3 * eye
        seq = np.sqrt(1.5 * (s_tr * s_tr).sum())
        R0, _ = hardening(p, params)
        if seq - R0 > 0:
            def g(x):
                return seq - 3 * mu * x - hardening(p + x, params)[0]
            dp = brentq(g, 0.0, seq / (3 * mu), xtol=1e-16, rtol=1e-15)
            n_dir = 1.5 * s_tr / seq
            eps_p = eps_p + dp * n_dir / 1.0
            p += dp
            s_new = (1 - 3 * mu * dp / seq) * s_tr
            sig = s_new + np.trace(sig_tr) / 3 * eye
        else:
            sig = sig_tr
    return sig, p


def _tensor_from_voigt_strain(v):
    return np.array([[v[0], v[3] / 2, v[5] / 2],
                     [v[3] / 2, v[1], v[4] / 2],
                     [v[5] / 2, v[4], v[2]]])


def test_radial_return_matches_fine_increment_oracle(params):
    """Coarse macro increments against a 1000x finer independent integration."""
    eps_final = 4e-3 * np.array([1.0, -0.2, -0.1, 0.3, 0.0, 0.1])
    n_macro = 4
    state = PointState.zero()
    for k in range(1, n_macro + 1):
        target = k / n_macro * eps_final
        prev = (k - 1) / n_macro * eps_final
        state, _ = return_map(state, target - prev, params)

    n_fine = 1000 * n_macro
    path = [_tensor_from_voigt_strain(k / n_fine * eps_final)
            for k in range(1, n_fine + 1)]
    sig_oracle, p_oracle = _oracle_integrate(params, path)
    sig_voigt = np.array([sig_oracle[0, 0], sig_oracle[1, 1],
                          sig_oracle[2, 2], sig_oracle[0, 1],
                          sig_oracle[1, 2], sig_oracle[0, 2]])
    scale = np.abs(sig_voigt).max()
    assert np.abs(state.stress - sig_voigt).max() <= 1e-3 * scale
    assert state.p == pytest.approx(p_oracle, rel=2e-3)


def test_single_increment_dp_matches_bisection(params):
    """Package secant root against 200 plain bisection steps."""
    deps = 5e-3 * UNIAXIAL
    state, _ = return_map(PointState.zero(), deps, params)
    assert state.p > 0

    mu = params.shear_modulus
    De = elastic_matrix(params.E, params.nu)
    sig_tr = De @ deps
    seq = von_mises(sig_tr)

    def g(x):
        return seq - 3 * mu * x - hardening(x, params)[0]

    lo, hi = 0.0, seq / (3 * mu)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if g(mid) > 0:
            lo = mid
        else:
            hi = mid
    assert abs(state.p - 0.5 * (lo + hi)) <= 1e-12


# ----------------------------------------------------------------------
# branches and invariants
# ----------------------------------------------------------------------

def test_zero_increment_keeps_zero_state(params):
    state, D = return_map(PointState.zero(), np.zeros(6), params)
    assert np.all(state.stress == 0.0)
    assert state.p == 0.0
    assert np.allclose(D, elastic_matrix(params.E, params.nu))


def test_below_yield_matches_elastic_stress(params):
    deps = 1e-4 * UNIAXIAL        # well below yield
    state, _ = return_map(PointState.zero(), deps, params)
    assert von_mises(state.stress) < params.sigma_y
    assert np.allclose(state.stress, elastic_stress(deps, np.zeros(6), params),
                       rtol=1e-14)
    assert state.p == 0.0


def _random_states_and_increments(params, n, seed=0, plastic_bias=True):
    rng = np.random.default_rng(seed)
    scale = 2.0 * params.sigma_y / params.E
    states = StateBatch.zeros(n)
    dstrain = rng.normal(scale=scale, size=(n, 6))
    if plastic_bias:
        dstrain[: n // 2] *= 4.0
    return states, dstrain


def test_consistency_and_complementarity(params):
    states, dstrain = _random_states_and_increments(params, 200, seed=1)
    new, dp, _ = return_map_batch(states, dstrain, params)
    R, _ = hardening(new.p, params)
    seq = von_mises(new.stress)
    tol = 1e-10 * params.sigma_y
    assert np.all(seq <= R + tol)
    assert np.all(dp >= 0.0)
    # complementarity: dp * (seq - R) vanishes at the solver tolerance
    assert np.abs(dp * (seq - R)).max() <= tol * max(dp.max(), 1.0)


def test_plastic_flow_is_deviatoric(params):
    states, dstrain = _random_states_and_increments(params, 100, seed=2)
    new, dp, _ = return_map_batch(states, dstrain, params)
    assert dp.max() > 0
    tr = new.eps_p[:, :3].sum(axis=1)
    assert np.abs(tr).max() <= 1e-12


def test_p_never_decreases_across_history(params):
    rng = np.random.default_rng(3)
    state = PointState.zero()
    last_p = 0.0
    for _ in range(20):
        state, _ = return_map(state, rng.normal(scale=2e-3, size=6), params)
        assert state.p >= last_p
        last_p = state.p


def test_return_map_is_deterministic(params):
    states, dstrain = _random_states_and_increments(params, 50, seed=4)
    a = return_map_batch(states, dstrain, params)
    b = return_map_batch(states, dstrain, params)
    assert np.array_equal(a[0].stress, b[0].stress)
    assert np.array_equal(a[0].p, b[0].p)


def test_nonconvergence_raises_with_residual(params):
    with pytest.raises(ConstitutiveError) as err:
        return_map_batch(StateBatch.zeros(1), 5e-3 * UNIAXIAL[None, :],
                         params, max_iter=1)
    assert err.value.residual is not None


# ----------------------------------------------------------------------
# consistent tangent
# ----------------------------------------------------------------------

def _fd_tangent(state, deps, params, h=1e-9):
    D = np.zeros((6, 6))
    for j in range(6):
        dp = deps.copy()
        dm = deps.copy()
        dp[j] += h
        dm[j] -= h
        sp, _ = return_map(state, dp, params)
        sm, _ = return_map(state, dm, params)
        D[:, j] = (sp.stress - sm.stress) / (2 * h)
    return D


def test_tangent_elastic_branch_is_elastic_matrix(params):
    _, D = return_map(PointState.zero(), 1e-4 * UNIAXIAL, params)
    assert np.allclose(D, elastic_matrix(params.E, params.nu), rtol=1e-14)


def test_tangent_softens_in_plastic_uniaxial(params):
    deps = 5e-3 * UNIAXIAL
    state, D = return_map(PointState.zero(), deps, params)
    assert state.p > 0
    E, nu = params.E, params.nu
    elastic_axial = E * (1 - nu) / ((1 + nu) * (1 - 2 * nu))
    assert D[0, 0] < elastic_axial


@pytest.mark.parametrize("seed", range(6))
def test_tangent_matches_finite_differences(params, seed):
    rng = np.random.default_rng(seed)
    # pre-stress the point, then test a non-degenerate increment
    state = PointState.zero()
    state, _ = return_map(state, rng.normal(scale=2e-3, size=6), params)
    deps = rng.normal(scale=3e-3, size=6)
    new, D = return_map(state, deps, params)
    # keep away from the elastic/plastic switch, where FD is one-sided
    trial = von_mises(elastic_stress(deps, np.zeros(6), params)
                      + state.stress)
    margin = abs(trial - hardening(state.p, params)[0])
    if margin < 1e-3 * params.sigma_y:
        pytest.skip("increment lands on the yield surface")
    D_fd = _fd_tangent(state, deps, params)
    assert np.abs(D - D_fd).max() <= 1e-5 * np.abs(D).max()


def test_tangent_symmetric(params):
    states, dstrain = _random_states_and_increments(params, 100, seed=5)
    _, _, D = return_map_batch(states, dstrain, params, want_tangent=True)
    assert np.abs(D - np.transpose(D, (0, 2, 1))).max() <= 1e-12 * np.abs(D).max()


def test_consistent_tangent_wrapper(params):
    deps = 4e-3 * UNIAXIAL
    state0 = PointState.zero()
    state1, D = return_map(state0, deps, params)
    D2 = consistent_tangent(state0, deps, state1, params)
    assert np.array_equal(D, D2)


# ----------------------------------------------------------------------
# kernel back ends agree
# ----------------------------------------------------------------------

def test_numpy_and_compiled_kernels_agree(params):
    compiled = pytest.importorskip("plastrom.materials._rrc")
    rng = np.random.default_rng(7)
    m = 400
    sig = rng.normal(scale=120.0, size=(m, 6))
    eps_p = rng.normal(scale=1e-4, size=(m, 6))
    p = np.abs(rng.normal(scale=2e-3, size=m))
    deps = rng.normal(scale=3e-3, size=(m, 6))
    args = (params.E, params.nu, params.sigma_y, params.n_pui, params.a_pui,
            1e-10, 100, True)
    out_np = rr_numpy.radial_return_batch(sig, eps_p, p, deps, *args)
    out_c = compiled.radial_return_batch(sig, eps_p, p, deps, *args)
    for a, b in zip(out_np[:5], out_c[:5]):
        scale = max(np.abs(a).max(), 1.0)
        assert np.abs(a - b).max() <= 1e-12 * scale
