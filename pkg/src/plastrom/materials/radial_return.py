"""Radial-return constitutive update and its consistent tangent.

The batch kernel has two interchangeable back ends: a Cython extension
(``_rrc``) and a pure-NumPy fallback (``_rr_numpy``).  The compiled one is
picked at import when present; set ``PLASTROM_PURE_PYTHON=1`` to force the
fallback (used by the benchmark and the parity tests).
"""

from __future__ import annotations

import os

import numpy as np

from ..errors import ConstitutiveError
from ..voigt import elastic_matrix
from .params import ElastoplasticParams
from .state import PointState, StateBatch

if os.environ.get("PLASTROM_PURE_PYTHON", "") not in ("", "0"):
    from . import _rr_numpy as _kernel
else:
    try:
        from . import _rrc as _kernel  # type: ignore[attr-defined]
    except ImportError:
        from . import _rr_numpy as _kernel

USING_COMPILED_KERNEL: bool = bool(_kernel.IS_COMPILED)

DEFAULT_TOL_RM = 1e-10
DEFAULT_MAX_ITER = 100


def elastic_stress(strain, eps_p, params: ElastoplasticParams):
    """Linear-elastic stress for total strain and plastic strain (Voigt)."""
    strain = np.asarray(strain, dtype=float)
    eps_p = np.asarray(eps_p, dtype=float)
    return (strain - eps_p) @ elastic_matrix(params.E, params.nu).T


def return_map_batch(states: StateBatch, dstrain, params: ElastoplasticParams,
                     tol_rm=DEFAULT_TOL_RM, max_iter=DEFAULT_MAX_ITER,
                     want_tangent=False):
    """Advance all points of a batch; returns (new_batch, dp, tangent)."""
    out = _kernel.radial_return_batch(
        states.stress, states.eps_p, states.p, np.asarray(dstrain, float),
        params.E, params.nu, params.sigma_y, params.n_pui, params.a_pui,
        tol_rm, max_iter, want_tangent)
    sig, epl, p, dp, tangent, fail, residual = out
    if fail >= 0:
        raise ConstitutiveError(
            f"consistency equation did not converge at point {fail} "
            f"(residual {residual:.3e})", residual=residual, point=fail)
    return StateBatch(sig, epl, p), dp, tangent


def return_map(state_prev: PointState, delta_strain,
               params: ElastoplasticParams, tol_rm=DEFAULT_TOL_RM,
               max_iter=DEFAULT_MAX_ITER):
    """Single-point radial return; returns (new_state, consistent_tangent)."""
    batch = StateBatch(state_prev.stress.reshape(1, 6).astype(float),
                       state_prev.eps_p.reshape(1, 6).astype(float),
                       np.array([float(state_prev.p)]))
    new, _, tangent = return_map_batch(batch, np.reshape(delta_strain, (1, 6)),
                                       params, tol_rm, max_iter,
                                       want_tangent=True)
    state = PointState(new.stress[0], new.eps_p[0], float(new.p[0]))
    return state, tangent[0]


def consistent_tangent(state_prev: PointState, delta_strain,
                       state_new: PointState, params: ElastoplasticParams,
                       tol_rm=DEFAULT_TOL_RM):
    """Algorithmic tangent d(stress)/d(strain increment) for one update."""
    _, tangent = return_map(state_prev, delta_strain, params, tol_rm)
    return tangent
