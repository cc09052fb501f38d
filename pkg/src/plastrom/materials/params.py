"""Material parameter set and the power-law isotropic hardening curve."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class ElastoplasticParams:
    """Von Mises elastoplasticity with power-law isotropic hardening.

    Units: E and sigma_y in MPa, the rest dimensionless.  The yield surface
    grows as ``R(p) = sigma_y + sigma_y * (E p / (a_pui sigma_y))**(1/n_pui)``.
    """

    E: float = 200000.0
    nu: float = 0.3
    sigma_y: float = 200.0
    n_pui: float = 3.0
    a_pui: float = 10.0

    def __post_init__(self):
        if not self.E > 0:
            raise ValueError(f"E must be positive, got {self.E}")
        if not 0.0 < self.nu < 0.5:
            raise ValueError(f"nu must lie in (0, 0.5), got {self.nu}")
        if not self.sigma_y > 0:
            raise ValueError(f"sigma_y must be positive, got {self.sigma_y}")
        if not self.n_pui >= 1:
            raise ValueError(f"n_pui must be >= 1, got {self.n_pui}")
        if not self.a_pui > 0:
            raise ValueError(f"a_pui must be positive, got {self.a_pui}")

    @property
    def shear_modulus(self) -> float:
        return self.E / (2.0 * (1.0 + self.nu))

    @property
    def lam(self) -> float:
        return self.E * self.nu / ((1.0 + self.nu) * (1.0 - 2.0 * self.nu))

    @property
    def bulk_modulus(self) -> float:
        return self.E / (3.0 * (1.0 - 2.0 * self.nu))

    def with_values(self, **kwargs) -> "ElastoplasticParams":
        """Copy with some fields replaced (used for parametric sweeps)."""
        return replace(self, **kwargs)


def hardening(p, params: ElastoplasticParams):
    """Yield radius R(p) and its derivative dR/dp.

    Accepts scalars or arrays.  For ``n_pui > 1`` the derivative at ``p = 0``
    is unbounded and reported as ``inf``; callers must not evaluate it there
    (the return-mapping solver offsets its first iterate accordingly).
    """
    p_arr = np.asarray(p, dtype=float)
    if np.any(p_arr < 0):
        raise ValueError("cumulative plastic strain must be non-negative")
    c = params.E / (params.a_pui * params.sigma_y)
    inv_n = 1.0 / params.n_pui
    R = params.sigma_y * (1.0 + (c * p_arr) ** inv_n)
    if params.n_pui == 1.0:
        dR = np.full_like(p_arr, params.sigma_y * c)
    else:
        with np.errstate(divide="ignore"):
            dR = params.sigma_y * inv_n * c**inv_n * p_arr ** (inv_n - 1.0)
    if np.isscalar(p):
        return float(R), float(dR)
    return R, dR
