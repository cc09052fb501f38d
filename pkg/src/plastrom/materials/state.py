"""Per-quadrature-point mechanical state containers.

Plastic strain is stored strain-like (engineering shear components), so
``stress @ eps_p`` is a full double contraction and ``D_e @ (eps - eps_p)``
is the elastic law.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class PointState:
    """State of a single material point."""

    stress: np.ndarray  # (6,) Voigt, MPa
    eps_p: np.ndarray   # (6,) Voigt, engineering shear
    p: float            # cumulative plastic strain

    @classmethod
    def zero(cls) -> "PointState":
        return cls(stress=np.zeros(6), eps_p=np.zeros(6), p=0.0)


@dataclass
class StateBatch:
    """States of many points as contiguous arrays (quadrature-point-major)."""

    stress: np.ndarray  # (n, 6)
    eps_p: np.ndarray   # (n, 6)
    p: np.ndarray       # (n,)

    @classmethod
    def zeros(cls, n: int) -> "StateBatch":
        return cls(np.zeros((n, 6)), np.zeros((n, 6)), np.zeros(n))

    @property
    def n_points(self) -> int:
        return self.p.shape[0]

    def take(self, idx) -> "StateBatch":
        return StateBatch(self.stress[idx], self.eps_p[idx], self.p[idx])

    def copy(self) -> "StateBatch":
        return StateBatch(self.stress.copy(), self.eps_p.copy(), self.p.copy())
