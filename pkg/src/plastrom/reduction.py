"""POD by the method of snapshots, hierarchical updates, Gappy reconstruction.

Displacements are compressed under the elastic energy norm of the parameter
centroid (a stiffness matrix applied as an operator); stresses under the
diagonal inner product of the HF quadrature weights.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import GappyRankError, PlastromError

#: Gramian eigenvalues below RANK_RTOL * lambda_1 count as numerically zero.
RANK_RTOL = 1e-14

_BASIS_MAGIC = b"PQSBASE1"
_IP_CODES = {"stiffness": 0, "diagonal": 1}
_IP_NAMES = {v: k for k, v in _IP_CODES.items()}


class InnerProduct:
    """Inner product applied as an operator: sparse SPD matrix or diagonal."""

    def __init__(self, kind: str, matrix=None, weights=None):
        if kind not in _IP_CODES:
            raise PlastromError(f"unknown inner product kind {kind!r}")
        self.kind = kind
        self.matrix = matrix
        self.weights = None if weights is None else np.asarray(weights, float)

    @classmethod
    def stiffness(cls, matrix) -> "InnerProduct":
        return cls("stiffness", matrix=matrix)

    @classmethod
    def diagonal(cls, weights) -> "InnerProduct":
        return cls("diagonal", weights=weights)

    def apply(self, V: np.ndarray) -> np.ndarray:
        if self.kind == "stiffness":
            return self.matrix @ V
        if V.ndim == 1:
            return self.weights * V
        return self.weights[:, None] * V

    def dot(self, a: np.ndarray, b: np.ndarray) -> float:
        return float(a @ self.apply(b))

    def norms_sq(self, V: np.ndarray) -> np.ndarray:
        """Squared norms of the columns of V (or of a single vector)."""
        W = self.apply(V)
        if V.ndim == 1:
            return np.array(V @ W)
        return np.einsum("ij,ij->j", V, W)

    def gram(self, S: np.ndarray) -> np.ndarray:
        C = S.T @ self.apply(S)
        return 0.5 * (C + C.T)


@dataclass
class ReducedBasis:
    """Column-orthonormal modes under ``inner_product``.

    ``eigenvalues[n]`` is the snapshot-Gramian eigenvalue recorded when mode
    ``n`` was introduced (per compression stage for hierarchical bases).
    """

    modes: np.ndarray        # (length, N)
    eigenvalues: np.ndarray  # (N,)
    inner_product: InnerProduct

    @classmethod
    def empty(cls, length: int, ip: InnerProduct) -> "ReducedBasis":
        return cls(np.zeros((length, 0)), np.zeros(0), ip)

    @property
    def n_modes(self) -> int:
        return self.modes.shape[1]

    def truncate(self, n: int) -> "ReducedBasis":
        return ReducedBasis(self.modes[:, :n], self.eigenvalues[:n],
                            self.inner_product)

    def coefficients(self, V: np.ndarray) -> np.ndarray:
        """Orthogonal-projection coefficients of vector(s) V."""
        return self.modes.T @ self.inner_product.apply(V)

    def orthonormality_error(self) -> float:
        if self.n_modes == 0:
            return 0.0
        G = self.inner_product.gram(self.modes)
        return float(np.abs(G - np.eye(self.n_modes)).max())


def _orthonormalize(vectors: np.ndarray, against: np.ndarray,
                    ip: InnerProduct, passes: int = 2) -> np.ndarray:
    """Modified Gram-Schmidt polish of columns against a basis and themselves."""
    V = vectors.copy()
    for j in range(V.shape[1]):
        for _ in range(passes):
            if against.shape[1]:
                V[:, j] -= against @ (against.T @ ip.apply(V[:, j]))
            for i in range(j):
                V[:, j] -= V[:, i] * ip.dot(V[:, i], V[:, j])
        nrm = np.sqrt(max(ip.dot(V[:, j], V[:, j]), 0.0))
        if nrm == 0.0:
            raise PlastromError("orthonormalization hit a zero vector")
        V[:, j] /= nrm
    return V


def _snapshot_eig(S: np.ndarray, ip: InnerProduct):
    """Descending eigenpairs of the snapshot Gramian, clipped at zero."""
    C = ip.gram(S)
    lam, phi = np.linalg.eigh(C)
    order = np.argsort(lam)[::-1]
    lam = np.clip(lam[order], 0.0, None)
    return lam, phi[:, order]


def pod(snapshots, inner_product: InnerProduct, eps_pod: float,
        mode_filter=None):
    """Method-of-snapshots POD with the energy truncation criterion.

    ``mode_filter`` post-processes raw modes before orthonormalization; it is
    used to re-enforce linear constraints the snapshots satisfy, which raw
    modes can lose to rounding amplified by small eigenvalues.
    """
    S = np.asarray(snapshots, dtype=float)
    if S.ndim == 1:
        S = S[:, None]
    if not 0.0 < eps_pod < 1.0:
        raise PlastromError("eps_pod must lie in (0, 1)")
    if S.shape[1] == 0:
        return ReducedBasis.empty(S.shape[0], inner_product)
    lam, phi = _snapshot_eig(S, inner_product)
    if lam[0] <= 0.0:
        return ReducedBasis.empty(S.shape[0], inner_product)
    rank = int(np.sum(lam > RANK_RTOL * lam[0]))
    total = lam.sum()
    target = (1.0 - eps_pod**2) * total
    n = int(np.searchsorted(np.cumsum(lam), target - 1e-300) + 1)
    n = min(n, rank)
    modes = S @ (phi[:, :n] / np.sqrt(lam[:n]))
    if mode_filter is not None:
        modes = mode_filter(modes)
    modes = _orthonormalize(modes, np.zeros((S.shape[0], 0)), inner_product)
    return ReducedBasis(modes, lam[:n].copy(), inner_product)


def hpod_update(basis: ReducedBasis, snapshots, eps_pod: float,
                mode_filter=None):
    """Hierarchical POD update driven by the relative projection error.

    If the existing basis already reproduces every new snapshot to
    ``eps_pod`` (relative, in the basis norm) it is returned unchanged.
    Otherwise modes of the orthogonal-complement POD are appended, keeping
    the minimal count that brings the worst relative projection error of the
    new snapshots below ``eps_pod``.
    """
    ip = basis.inner_product
    S = np.asarray(snapshots, dtype=float)
    if S.ndim == 1:
        S = S[:, None]
    norms_sq = ip.norms_sq(S)
    live = norms_sq > 0.0
    if not np.any(live):
        return basis
    if basis.n_modes:
        coeffs = basis.coefficients(S)
        R = S - basis.modes @ coeffs
    else:
        R = S.copy()
    resid_sq = np.clip(ip.norms_sq(R), 0.0, None)
    rel = np.zeros(S.shape[1])
    rel[live] = np.sqrt(resid_sq[live] / norms_sq[live])
    if rel.max() <= eps_pod:
        return basis

    lam, phi = _snapshot_eig(R, ip)
    rank = int(np.sum(lam > RANK_RTOL * lam[0])) if lam[0] > 0 else 0
    if rank == 0:
        return basis
    cand = R @ (phi[:, :rank] / np.sqrt(lam[:rank]))
    if mode_filter is not None:
        cand = mode_filter(cand)
    cand = _orthonormalize(cand, basis.modes, ip)
    # projection error of every snapshot after appending the first m modes
    c = cand.T @ ip.apply(R)                      # (rank, K)
    drop = np.cumsum(c**2, axis=0)
    err_sq = np.clip(resid_sq[None, :] - drop, 0.0, None)
    rel_m = np.zeros_like(err_sq)
    rel_m[:, live] = np.sqrt(err_sq[:, live] / norms_sq[live])
    ok = np.flatnonzero(rel_m.max(axis=1) <= eps_pod)
    m = int(ok[0]) + 1 if ok.size else rank
    modes = np.hstack([basis.modes, cand[:, :m]])
    eigenvalues = np.concatenate([basis.eigenvalues, lam[:m]])
    return ReducedBasis(modes, eigenvalues, ip)


class GappyReconstructor:
    """Weighted least-squares fit of basis coordinates on masked entries."""

    def __init__(self, basis: ReducedBasis, mask, weights, rcond=1e-10):
        mask = np.asarray(mask, dtype=np.int64)
        weights = np.asarray(weights, dtype=float)
        n_modes = basis.n_modes
        if mask.size < n_modes:
            raise GappyRankError(
                f"{mask.size} sampled entries cannot determine {n_modes} "
                "stress modes; enlarge the empirical quadrature or reduce "
                "the stress basis")
        self._sqrt_w = np.sqrt(weights)
        A = self._sqrt_w[:, None] * basis.modes[mask, :]
        U, s, Vt = np.linalg.svd(A, full_matrices=False)
        if s.size == 0 or s[-1] <= rcond * s[0]:
            raise GappyRankError(
                "masked stress basis is rank deficient; select more elements "
                "or fewer stress modes")
        self.condition = float(s[0] / s[-1])
        self._solve = (Vt.T / s) @ U.T

    def __call__(self, masked_values: np.ndarray) -> np.ndarray:
        return self._solve @ (self._sqrt_w * masked_values)


def gappy_reconstruct(basis: ReducedBasis, masked_values, mask, weights):
    """One-shot Gappy fit; returns (coordinates, condition number)."""
    rec = GappyReconstructor(basis, mask, weights)
    return rec(np.asarray(masked_values, dtype=float)), rec.condition


def save_basis(base_path, basis: ReducedBasis, meta: dict | None = None):
    """Binary mode container plus eigenvalue CSV for decay plots."""
    base = Path(base_path)
    length, n = basis.modes.shape
    with open(base.with_suffix(".bin"), "wb") as fh:
        fh.write(_BASIS_MAGIC)
        np.array([length, n, _IP_CODES[basis.inner_product.kind]],
                 dtype="<i8").tofile(fh)
        np.ascontiguousarray(basis.eigenvalues, dtype="<f8").tofile(fh)
        np.ascontiguousarray(basis.modes, dtype="<f8").tofile(fh)
    lines = ["mode,eigenvalue"]
    lines += [f"{i + 1},{v:.17g}" for i, v in enumerate(basis.eigenvalues)]
    base.with_suffix(".csv").write_text("\r\n".join(lines) + "\r\n")
    if meta is not None:
        base.with_suffix(".json").write_text(json.dumps(meta, indent=2))


def load_basis(base_path, inner_product: InnerProduct) -> ReducedBasis:
    base = Path(base_path)
    raw = base.with_suffix(".bin").read_bytes()
    if raw[:8] != _BASIS_MAGIC:
        raise PlastromError(f"{base}: not a basis container")
    length, n, code = (int(v) for v in
                       np.frombuffer(raw, dtype="<i8", count=3, offset=8))
    if _IP_NAMES[code] != inner_product.kind:
        raise PlastromError(
            f"basis stored under {_IP_NAMES[code]!r} inner product, "
            f"got {inner_product.kind!r}")
    offset = 8 + 3 * 8
    eig = np.frombuffer(raw, dtype="<f8", count=n, offset=offset).copy()
    offset += n * 8
    modes = np.frombuffer(raw, dtype="<f8", count=length * n,
                          offset=offset).copy().reshape(length, n)
    return ReducedBasis(modes, eig, inner_product)
