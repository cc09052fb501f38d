# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled radial-return kernel.

Point-by-point transcription of the arithmetic in ``_rr_numpy``; selected at
import time when available.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, isfinite, pow, sqrt

cnp.import_array()

IS_COMPILED = True


cdef inline double _R(double p, double sigma_y, double c, double inv_n) nogil:
    return sigma_y * (1.0 + pow(c * p, inv_n))


cdef inline int _consistency(double seq_tr, double p0, double three_mu,
                             double sigma_y, double c, double inv_n,
                             double tol, int max_iter, double* out) nogil:
    """Bracketed secant for the plastic multiplier; returns 0 on success."""
    cdef double hi = seq_tr / three_mu
    cdef double lo = 0.0
    cdef double x0 = 1e-14 * hi
    cdef double g0 = seq_tr - three_mu * x0 - _R(p0 + x0, sigma_y, c, inv_n)
    cdef double x1 = hi
    cdef double g1 = seq_tr - three_mu * x1 - _R(p0 + x1, sigma_y, c, inv_n)
    cdef double x2, g2, denom
    cdef int it

    if g0 > 0.0:
        lo = x0
    if fabs(g0) <= tol:
        out[0] = x0
        return 0
    for it in range(max_iter):
        if fabs(g1) <= tol:
            out[0] = x1
            return 0
        denom = g1 - g0
        if denom != 0.0:
            x2 = x1 - g1 * (x1 - x0) / denom
        else:
            x2 = 0.5 * (lo + hi)
        if not isfinite(x2) or x2 <= lo or x2 >= hi:
            x2 = 0.5 * (lo + hi)
        g2 = seq_tr - three_mu * x2 - _R(p0 + x2, sigma_y, c, inv_n)
        if g2 > 0.0:
            lo = x2
        else:
            hi = x2
        x0 = x1
        g0 = g1
        x1 = x2
        g1 = g2
    if fabs(g1) <= tol:
        out[0] = x1
        return 0
    out[0] = g1
    return 1


def radial_return_batch(stress, eps_p, p, dstrain, double E, double nu,
                        double sigma_y, double n_pui, double a_pui,
                        double tol_rm, int max_iter, bint want_tangent):
    cdef double[:, ::1] sig = np.ascontiguousarray(stress, dtype=np.float64)
    cdef double[:, ::1] epl = np.ascontiguousarray(eps_p, dtype=np.float64)
    cdef double[::1] pc = np.ascontiguousarray(p, dtype=np.float64)
    cdef double[:, ::1] de = np.ascontiguousarray(dstrain, dtype=np.float64)
    cdef Py_ssize_t m = sig.shape[0]

    sig_new_arr = np.empty((m, 6))
    eps_new_arr = np.empty((m, 6))
    p_new_arr = np.empty(m)
    dp_arr = np.zeros(m)
    cdef double[:, ::1] sig_new = sig_new_arr
    cdef double[:, ::1] eps_new = eps_new_arr
    cdef double[::1] p_new = p_new_arr
    cdef double[::1] dp_out = dp_arr

    tangent_arr = None
    cdef double[:, :, ::1] D
    if want_tangent:
        tangent_arr = np.zeros((m, 6, 6))
        D = tangent_arr

    cdef double lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    cdef double mu = E / (2.0 * (1.0 + nu))
    cdef double three_mu = 3.0 * mu
    cdef double kappa = lam + 2.0 * mu / 3.0
    cdef double c_hard = E / (a_pui * sigma_y)
    cdef double inv_n = 1.0 / n_pui
    cdef double tol = tol_rm * sigma_y

    cdef Py_ssize_t i, j, k
    cdef double tr_inc, mean_tr, seq_tr, f_tr, dp, beta, scale
    cdef double Rp, dpd, dbeta, coef, root
    cdef double st[6]
    cdef int status

    for i in range(m):
        tr_inc = de[i, 0] + de[i, 1] + de[i, 2]
        for j in range(3):
            st[j] = sig[i, j] + (lam * tr_inc + 2.0 * mu * de[i, j])
            st[j + 3] = sig[i, j + 3] + mu * de[i, j + 3]
        mean_tr = (st[0] + st[1] + st[2]) / 3.0
        for j in range(3):
            st[j] = st[j] - mean_tr
        seq_tr = sqrt(1.5 * (st[0] * st[0] + st[1] * st[1] + st[2] * st[2])
                      + 3.0 * (st[3] * st[3] + st[4] * st[4] + st[5] * st[5]))
        f_tr = seq_tr - _R(pc[i], sigma_y, c_hard, inv_n)

        if f_tr > 0.0:
            status = _consistency(seq_tr, pc[i], three_mu, sigma_y, c_hard,
                                  inv_n, tol, max_iter, &root)
            if status != 0:
                return None, None, None, None, None, int(i), float(root)
            dp = root
            beta = (seq_tr - three_mu * dp) / seq_tr
            for j in range(3):
                sig_new[i, j] = beta * st[j] + mean_tr
                sig_new[i, j + 3] = beta * st[j + 3]
            scale = 1.5 * dp / seq_tr
            for j in range(3):
                eps_new[i, j] = epl[i, j] + scale * st[j]
                eps_new[i, j + 3] = epl[i, j + 3] + 2.0 * scale * st[j + 3]
            p_new[i] = pc[i] + dp
            dp_out[i] = dp
            if want_tangent:
                if inv_n == 1.0:
                    Rp = sigma_y * c_hard
                else:
                    Rp = (sigma_y * inv_n * pow(c_hard, inv_n)
                          * pow(p_new[i], inv_n - 1.0))
                dpd = 1.0 / (three_mu + Rp)
                dbeta = -three_mu * (dpd * seq_tr - dp) / (seq_tr * seq_tr)
                coef = dbeta * three_mu / seq_tr
                for j in range(3):
                    for k in range(3):
                        D[i, j, k] = kappa - (2.0 * mu / 3.0) * beta
                    D[i, j, j] += 2.0 * mu * beta
                    D[i, j + 3, j + 3] = mu * beta
                for j in range(6):
                    for k in range(6):
                        D[i, j, k] += coef * st[j] * st[k]
        else:
            for j in range(3):
                sig_new[i, j] = st[j] + mean_tr
                sig_new[i, j + 3] = st[j + 3]
            for j in range(6):
                eps_new[i, j] = epl[i, j]
            p_new[i] = pc[i]
            if want_tangent:
                for j in range(3):
                    for k in range(3):
                        D[i, j, k] = lam
                    D[i, j, j] = lam + 2.0 * mu
                    D[i, j + 3, j + 3] = mu

    return sig_new_arr, eps_new_arr, p_new_arr, dp_arr, tangent_arr, -1, 0.0
