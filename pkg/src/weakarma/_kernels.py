"""Compiled inner loops for the time recursions.

All kernels use zero pre-sample values and release the GIL so that
replications can run on a thread pool.
"""
import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def residual_filter(x, ar, ma):
    # e_t = x_t - sum_i A_i x_{t-i} + sum_i B_i e_{t-i}
    n, d = x.shape
    p = ar.shape[0]
    q = ma.shape[0]
    e = np.empty((n, d))
    for t in range(n):
        for r in range(d):
            acc = x[t, r]
            for i in range(1, p + 1):
                if t - i < 0:
                    break
                for c in range(d):
                    acc -= ar[i - 1, r, c] * x[t - i, c]
            for i in range(1, q + 1):
                if t - i < 0:
                    break
                for c in range(d):
                    acc += ma[i - 1, r, c] * e[t - i, c]
            e[t, r] = acc
    return e


@njit(cache=True, nogil=True)
def residual_derivatives(x, ar, ma, kind, lag, row, col):
    """Residuals and their derivatives with respect to each free parameter.

    ``kind[l]`` is 0 when parameter ``l`` is an entry of an AR matrix and 1 for
    an MA matrix; ``lag``, ``row`` and ``col`` locate the entry.
    """
    n, d = x.shape
    p = ar.shape[0]
    q = ma.shape[0]
    k0 = kind.shape[0]
    e = residual_filter(x, ar, ma)
    de = np.zeros((n, d, k0))
    for t in range(n):
        for l in range(k0):
            for r in range(d):
                acc = 0.0
                for i in range(1, q + 1):
                    if t - i < 0:
                        break
                    for c in range(d):
                        acc += ma[i - 1, r, c] * de[t - i, c, l]
                de[t, r, l] = acc
            s = t - lag[l]
            if s >= 0:
                if kind[l] == 0:
                    de[t, row[l], l] -= x[s, col[l]]
                else:
                    de[t, row[l], l] += e[s, col[l]]
    return e, de


@njit(cache=True, nogil=True)
def varma_simulate(eps, ar, ma):
    # X_t = sum_i A_i X_{t-i} + eps_t - sum_i B_i eps_{t-i}
    n, d = eps.shape
    p = ar.shape[0]
    q = ma.shape[0]
    x = np.empty((n, d))
    for t in range(n):
        for r in range(d):
            acc = eps[t, r]
            for i in range(1, p + 1):
                if t - i < 0:
                    break
                for c in range(d):
                    acc += ar[i - 1, r, c] * x[t - i, c]
            for i in range(1, q + 1):
                if t - i < 0:
                    break
                for c in range(d):
                    acc -= ma[i - 1, r, c] * eps[t - i, c]
            x[t, r] = acc
    return x


@njit(cache=True, nogil=True)
def garch11(eta, omega, alpha, beta):
    n = eta.shape[0]
    eps = np.empty(n)
    sigma2 = omega / (1.0 - alpha - beta)
    prev_eps2 = sigma2
    for t in range(n):
        if t > 0:
            sigma2 = omega + alpha * prev_eps2 + beta * sigma2
        eps[t] = np.sqrt(sigma2) * eta[t]
        prev_eps2 = eps[t] * eps[t]
    return eps


@njit(cache=True, nogil=True)
def diagonal_arch1(eta, omega, a):
    # h_t^2 = omega + A eps_{t-1}^2, eps_t = diag(h_t) eta_t
    n, d = eta.shape
    eps = np.empty((n, d))
    h2 = np.linalg.solve(np.eye(d) - a, omega)
    for t in range(n):
        if t > 0:
            for r in range(d):
                acc = omega[r]
                for c in range(d):
                    acc += a[r, c] * eps[t - 1, c] * eps[t - 1, c]
                h2[r] = acc
        for r in range(d):
            eps[t, r] = np.sqrt(h2[r]) * eta[t, r]
    return eps
