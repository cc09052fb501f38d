"""Voigt-notation tensor algebra for 3D symmetric tensors.

Conventions used throughout the package:

* component order ``[xx, yy, zz, xy, yz, zx]``,
* stress vectors store plain tensor components,
* strain vectors store engineering shear (``gamma = 2 eps``) so that
  ``sigma @ strain`` equals the double contraction ``sigma : eps``.
"""

from __future__ import annotations

import numpy as np

#: Voigt representation of the rank-2 identity.
IDENTITY = np.array([1.0, 1.0, 1.0, 0.0, 0.0, 0.0])

#: Weights turning a plain component dot product into a full contraction
#: for two *stress-like* Voigt vectors (shear entries counted twice).
CONTRACTION_WEIGHTS = np.array([1.0, 1.0, 1.0, 2.0, 2.0, 2.0])


def trace(v):
    """Trace of a (batch of) Voigt tensor(s); works on shape (..., 6)."""
    v = np.asarray(v)
    return v[..., 0] + v[..., 1] + v[..., 2]


def dev_stress(sig):
    """Deviatoric part of stress-like Voigt vectors, shape-preserving."""
    sig = np.asarray(sig, dtype=float)
    out = sig.copy()
    m = trace(sig) / 3.0
    out[..., 0] -= m
    out[..., 1] -= m
    out[..., 2] -= m
    return out


def von_mises(sig):
    """Von Mises equivalent stress sqrt(3/2 s:s) of stress Voigt vectors."""
    s = dev_stress(sig)
    ss = (s * s * CONTRACTION_WEIGHTS).sum(axis=-1)
    return np.sqrt(1.5 * ss)


def lame_parameters(E: float, nu: float) -> tuple[float, float]:
    """Return (lambda, mu) Lame parameters."""
    lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    mu = E / (2.0 * (1.0 + nu))
    return lam, mu


def elastic_matrix(E: float, nu: float) -> np.ndarray:
    """Isotropic elasticity matrix mapping engineering strain to stress."""
    lam, mu = lame_parameters(E, nu)
    D = np.zeros((6, 6))
    D[:3, :3] = lam
    D[0, 0] = D[1, 1] = D[2, 2] = lam + 2.0 * mu
    D[3, 3] = D[4, 4] = D[5, 5] = mu
    return D
