"""Pure-NumPy radial-return kernel (fallback when the compiled core is absent).

Vectorized over quadrature points; the plastic consistency equation is solved
per point by a bracketed secant iteration with bisection safeguard.  The
compiled twin in ``_rrc.pyx`` implements the identical arithmetic point by
point, so both back ends agree to rounding.
"""

from __future__ import annotations

import numpy as np

IS_COMPILED = False


def _hardening_batch(p, sigma_y, c, inv_n):
    return sigma_y * (1.0 + (c * p) ** inv_n)


def radial_return_batch(stress, eps_p, p, dstrain, E, nu, sigma_y, n_pui,
                        a_pui, tol_rm, max_iter, want_tangent):
    """Advance a batch of point states by a strain increment.

    Parameters are plain arrays/floats; returns
    ``(stress_new, eps_p_new, p_new, dp, tangent, fail_index, fail_residual)``
    where ``tangent`` is ``None`` unless requested and ``fail_index`` is -1
    on success.
    """
    stress = np.asarray(stress, dtype=float)
    dstrain = np.asarray(dstrain, dtype=float)
    m = stress.shape[0]
    lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    mu = E / (2.0 * (1.0 + nu))
    three_mu = 3.0 * mu
    c_hard = E / (a_pui * sigma_y)
    inv_n = 1.0 / n_pui

    # elastic trial stress
    tr_inc = dstrain[:, 0] + dstrain[:, 1] + dstrain[:, 2]
    sig_tr = stress.copy()
    sig_tr[:, :3] += lam * tr_inc[:, None] + 2.0 * mu * dstrain[:, :3]
    sig_tr[:, 3:] += mu * dstrain[:, 3:]

    mean_tr = (sig_tr[:, 0] + sig_tr[:, 1] + sig_tr[:, 2]) / 3.0
    s_tr = sig_tr.copy()
    s_tr[:, :3] -= mean_tr[:, None]
    seq_tr = np.sqrt(1.5 * (s_tr[:, :3] ** 2).sum(axis=1)
                     + 3.0 * (s_tr[:, 3:] ** 2).sum(axis=1))

    f_tr = seq_tr - _hardening_batch(p, sigma_y, c_hard, inv_n)
    plastic = f_tr > 0.0

    dp = np.zeros(m)
    fail_index = -1
    fail_residual = 0.0
    if np.any(plastic):
        dp_pl, bad = _solve_consistency(seq_tr[plastic], p[plastic], three_mu,
                                        sigma_y, c_hard, inv_n, tol_rm,
                                        max_iter)
        if bad >= 0:
            # on failure the root slot carries the final consistency residual
            idx = np.flatnonzero(plastic)[bad]
            return None, None, None, None, None, int(idx), float(dp_pl[bad])
        dp[plastic] = dp_pl

    beta = np.ones(m)
    np.divide(seq_tr - three_mu * dp, seq_tr, out=beta, where=plastic)

    sig_new = sig_tr.copy()
    sig_new[plastic] = beta[plastic, None] * s_tr[plastic]
    sig_new[plastic, :3] += mean_tr[plastic, None]

    eps_p_new = eps_p.copy()
    p_new = p + dp
    if np.any(plastic):
        scale = 1.5 * dp[plastic] / seq_tr[plastic]
        eps_p_new[plastic, :3] += scale[:, None] * s_tr[plastic, :3]
        eps_p_new[plastic, 3:] += 2.0 * scale[:, None] * s_tr[plastic, 3:]

    tangent = None
    if want_tangent:
        tangent = _tangents(m, plastic, s_tr, seq_tr, dp, beta, lam, mu,
                            three_mu, p_new, sigma_y, c_hard, inv_n)
    return sig_new, eps_p_new, p_new, dp, tangent, fail_index, fail_residual


def _solve_consistency(seq_tr, p0, three_mu, sigma_y, c_hard, inv_n, tol_rm,
                       max_iter):
    """Root of ``seq_tr - 3 mu x - R(p0 + x)`` on ``[0, seq_tr / 3 mu]``.

    Safeguarded secant: steps leaving the current sign-change bracket fall
    back to bisection.  The first iterate is offset from zero so the
    hardening derivative singularity at p = 0 is never approached.
    """
    tol = tol_rm * sigma_y

    def g(x):
        return seq_tr - three_mu * x - _hardening_batch(p0 + x, sigma_y,
                                                        c_hard, inv_n)

    hi = seq_tr / three_mu
    lo = np.zeros_like(hi)
    x0 = 1e-14 * hi
    g0 = g(x0)
    x1 = hi.copy()
    g1 = g(x1)
    lo = np.where(g0 > 0.0, x0, lo)
    hi = np.where(g1 < 0.0, x1, hi)
    root = np.where(np.abs(g0) <= tol, x0, np.nan)
    done = np.abs(g0) <= tol

    for _ in range(max_iter):
        done |= np.abs(g1) <= tol
        root = np.where(np.abs(g1) <= tol, np.where(np.isnan(root), x1, root),
                        root)
        if done.all():
            break
        denom = g1 - g0
        with np.errstate(divide="ignore", invalid="ignore"):
            x2 = x1 - g1 * (x1 - x0) / denom
        bad_step = (~np.isfinite(x2)) | (x2 <= lo) | (x2 >= hi)
        x2 = np.where(bad_step, 0.5 * (lo + hi), x2)
        g2 = g(x2)
        lo = np.where((g2 > 0.0) & ~done, x2, lo)
        hi = np.where((g2 <= 0.0) & ~done, x2, hi)
        x0 = np.where(done, x0, x1)
        g0 = np.where(done, g0, g1)
        x1 = np.where(done, x1, x2)
        g1 = np.where(done, g1, g2)
    else:
        late = ~done & (np.abs(g1) <= tol)
        root = np.where(late, x1, root)
        done |= late
        if not done.all():
            bad = int(np.argmax(~done))
            return np.where(np.isnan(root), g1, root), bad
    return root, -1


def _tangents(m, plastic, s_tr, seq_tr, dp, beta, lam, mu, three_mu, p_new,
              sigma_y, c_hard, inv_n):
    De = np.zeros((6, 6))
    De[:3, :3] = lam
    De[0, 0] = De[1, 1] = De[2, 2] = lam + 2.0 * mu
    De[3, 3] = De[4, 4] = De[5, 5] = mu
    D = np.broadcast_to(De, (m, 6, 6)).copy()
    if not np.any(plastic):
        return D

    kappa = lam + 2.0 * mu / 3.0
    sp = s_tr[plastic]
    seq = seq_tr[plastic]
    dpp = dp[plastic]
    bp = beta[plastic]
    if inv_n == 1.0:
        Rp = np.full(sp.shape[0], sigma_y * c_hard)
    else:
        with np.errstate(divide="ignore"):
            Rp = sigma_y * inv_n * c_hard**inv_n * p_new[plastic] ** (inv_n - 1.0)
    dpd = 1.0 / (three_mu + Rp)
    dbeta = -three_mu * (dpd * seq - dpp) / seq**2
    coef = dbeta * three_mu / seq

    Dp = np.zeros((sp.shape[0], 6, 6))
    Dp[:, :3, :3] = kappa - (2.0 * mu / 3.0) * bp[:, None, None]
    diag = np.arange(3)
    Dp[:, diag, diag] += 2.0 * mu * bp[:, None]
    Dp[:, diag + 3, diag + 3] += mu * bp[:, None]
    Dp += coef[:, None, None] * sp[:, :, None] * sp[:, None, :]
    D[plastic] = Dp
    return D
