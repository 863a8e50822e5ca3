"""Residual autocorrelations, the self-normalizer and the portmanteau statistics.

Lag-h blocks use the index ``i*d + j`` for the product of coordinate ``i`` of
the lagged residual with coordinate ``j`` of the current one, which is
``vec(Gamma(h))`` with ``Gamma(h) = (1/n) sum_t e_t e_{t-h}'``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from weakarma.dist import QuantileTable, chi2_pvalue, chi2_quantile, uk_pvalue
from weakarma.errors import (DegenerateResidualError, DimensionError, DomainError,
                             IllConditionedError, SingularCovarianceError,
                             SingularNormalizerError, WeakArmaError)
from weakarma.estimate import (InformationMatrices, ParamEstimate, _checked_inverse,
                               estimate_J, phi_from_residuals)
from weakarma.model import ResidualSet, VarmaSpec, as_series, residual_derivatives

COND_LIMIT = 1e12


@dataclass(frozen=True)
class AutoCovSet:
    """``gamma[h-1] = Gamma(h)`` for h = 1..m, ``gamma0``, standard deviations ``s_e`` and ``rho``."""

    gamma: np.ndarray
    gamma0: np.ndarray
    s_e: np.ndarray
    rho: np.ndarray
    n: int

    @property
    def m(self) -> int:
        return self.gamma.shape[0]

    @property
    def d(self) -> int:
        return self.gamma0.shape[0]

    @property
    def gamma_m(self) -> np.ndarray:
        """Stacked ``vec(Gamma(1)), ..., vec(Gamma(m))``."""
        return self.gamma.transpose(0, 2, 1).reshape(-1)


def autocov(residuals, m: int) -> AutoCovSet:
    e = as_series(residuals)
    n, d = e.shape
    if m < 1 or m >= n:
        raise DomainError(f"need 1 <= m < n, got m={m}, n={n}")
    gamma0 = e.T @ e / n
    s_e = np.sqrt(np.diag(gamma0))
    if np.any(s_e <= 0):
        raise DegenerateResidualError("a residual coordinate has zero variance")
    gamma = np.stack([e[h:].T @ e[:-h] / n for h in range(1, m + 1)])
    scale = np.tile(np.outer(s_e, s_e).reshape(-1), m)
    rho = gamma.transpose(0, 2, 1).reshape(-1) / scale
    return AutoCovSet(gamma, gamma0, s_e, rho, n)


def _scale_matrix(s_e: np.ndarray, m: int) -> np.ndarray:
    """Diagonal of ``I_m (x) (S_e (x) S_e)``."""
    return np.tile(np.kron(s_e, s_e), m)


def build_lambda(info: InformationMatrices) -> np.ndarray:
    """``[Phi J^{-1} | I]``."""
    phi = np.atleast_2d(info.Phi_hat)
    rows, k0 = phi.shape
    if k0 == 0:
        return np.eye(rows)
    j = np.atleast_2d(info.J_hat)
    if j.shape != (k0, k0):
        raise DimensionError(f"J has shape {j.shape}, expected ({k0}, {k0})")
    cond = np.linalg.cond(j)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise IllConditionedError(f"information matrix J has condition number {cond:.3g}")
    return np.hstack([np.linalg.solve(j.T, phi.T).T, np.eye(rows)])


def u_hat_from_residuals(e: np.ndarray, de: Optional[np.ndarray], sigma_inv: np.ndarray,
                         m: int) -> np.ndarray:
    n, d = e.shape
    k0 = 0 if de is None else de.shape[2]
    dd = d * d
    u = np.zeros((n, k0 + m * dd))
    if k0:
        u[:, :k0] = -2.0 * np.einsum("tak,ab,tb->tk", de, sigma_inv, e, optimize=True)
    for h in range(1, min(m, n - 1) + 1):
        block = e[:-h, :, None] * e[h:, None, :]
        u[h:, k0 + (h - 1) * dd : k0 + h * dd] = block.reshape(n - h, dd)
    return u


def build_u_hat(spec: VarmaSpec, fit: ParamEstimate, residual_set: ResidualSet,
                acs: Optional[AutoCovSet], m: int) -> np.ndarray:
    """Rows ``(-2 de_t' Sigma^{-1} e_t, e_{t-1} (x) e_t, ..., e_{t-m} (x) e_t)``."""
    if acs is not None and acs.m < m:
        raise DimensionError(f"autocovariances cover {acs.m} lags, need {m}")
    sinv = _checked_inverse(fit.sigma_e_hat)
    de = residual_set.derivs if spec.k0 else None
    if de is not None and de.shape[2] != spec.k0:
        raise DimensionError("derivative array does not match k0")
    return u_hat_from_residuals(residual_set.residuals, de, sinv, m)


def build_c_hat(lambda_hat: np.ndarray, u_hat: np.ndarray, gamma_m_hat: np.ndarray) -> np.ndarray:
    """``(1/n^2) sum_t S_t S_t'`` with ``S_t = sum_{j<=t} (Lambda U_j - Gamma_m)``."""
    n = u_hat.shape[0]
    s = np.cumsum(u_hat @ lambda_hat.T - gamma_m_hat, axis=0)
    c = s.T @ s / n**2
    return (c + c.T) / 2


def ar1_c1_oracle(a0: float, noise, truncation: int) -> float:
    """Normalizer for an AR(1) at the true parameter, from the noise directly.

    Evaluates ``(1/n^2) sum_t {sum_{j<=t} (-(1-a0^2) sum_{i=1}^{T} a0^{i-1}
    eps_j eps_{j-i} + eps_j eps_{j-1} - Gamma(1))}^2`` with ``eps_s = 0`` for
    ``s <= 0`` and ``T = truncation``.
    """
    if not abs(a0) < 1:
        raise DomainError("need |a0| < 1")
    if truncation < 1:
        raise DomainError("truncation must be >= 1")
    eps = np.asarray(noise, dtype=float).ravel()
    n = eps.size
    padded = np.concatenate([np.zeros(truncation), eps])

    def lagged(i):
        return padded[truncation - i : truncation - i + n]

    gamma1 = float(np.sum(eps[1:] * eps[:-1])) / n
    score = np.zeros(n)
    for i in range(1, truncation + 1):
        score += a0 ** (i - 1) * eps * lagged(i)
    terms = -(1 - a0**2) * score + eps * lagged(1) - gamma1
    s = np.cumsum(terms)
    return float(np.sum(s**2) / n**2)


def _solve_normalizer(c_hat: np.ndarray, v: np.ndarray) -> float:
    """``v' C^{-1} v`` through a symmetric eigendecomposition with a condition cap."""
    w, vecs = np.linalg.eigh((c_hat + c_hat.T) / 2)
    if w[0] <= 0 or w[-1] / w[0] > COND_LIMIT:
        raise SingularNormalizerError(
            "self-normalization matrix is singular or ill-conditioned "
            f"(eigenvalues {w[0]:.3g} .. {w[-1]:.3g}); this can happen when the noise "
            "has an atom at zero")
    z = vecs.T @ v
    return float(np.sum(z**2 / w))


def q_sn(rho, s_e, c_hat, n: int) -> float:
    """``n rho' M C^{-1} M rho`` with ``M = I_m (x) (S_e (x) S_e)``."""
    rho = np.asarray(rho, dtype=float).ravel()
    s_e = np.atleast_1d(np.asarray(s_e, dtype=float))
    m = rho.size // s_e.size**2
    v = _scale_matrix(s_e, m) * rho
    return max(0.0, n * _solve_normalizer(np.atleast_2d(c_hat), v))


def q_sn_tilde(rho, s_e, c_hat, n: int, m: int, multivariate_factor: str = "n") -> float:
    """Small-sample weighted variant of :func:`q_sn`.

    For ``d = 1`` this is ``n sigma^4 rho' D^{1/2} C^{-1} D^{1/2} rho`` with
    ``D = diag((n+2)/(n-h))``. For ``d >= 2`` it is
    ``c_n rho' M D C^{-1} M rho`` with ``D = diag(n/(n-h))``, each weight
    repeated ``d^2`` times. ``multivariate_factor`` selects ``c_n = n``
    (default, which keeps the statistic on the scale of ``q_sn``) or ``"n2"``
    for ``c_n = n^2``.
    """
    rho = np.asarray(rho, dtype=float).ravel()
    s_e = np.atleast_1d(np.asarray(s_e, dtype=float))
    d = s_e.size
    if rho.size != m * d * d:
        raise DimensionError(f"rho has length {rho.size}, expected m*d^2 = {m * d * d}")
    if m >= n:
        raise DomainError("need m < n")
    h = np.arange(1, m + 1)
    c_hat = np.atleast_2d(c_hat)
    v = _scale_matrix(s_e, m) * rho
    if d == 1:
        sqrt_d = np.sqrt((n + 2.0) / (n - h))
        return max(0.0, n * _solve_normalizer(c_hat, sqrt_d * v))
    if multivariate_factor not in ("n", "n2"):
        raise DomainError("multivariate_factor must be 'n' or 'n2'")
    weights = np.repeat(n / (n - h.astype(float)), d * d)
    w, vecs = np.linalg.eigh((c_hat + c_hat.T) / 2)
    if w[0] <= 0 or w[-1] / w[0] > COND_LIMIT:
        _solve_normalizer(c_hat, v)  # raises
    cinv_v = vecs @ ((vecs.T @ v) / w)
    lead = float(n) if multivariate_factor == "n" else float(n) ** 2
    return max(0.0, lead * float((weights * v) @ cinv_v))


def q_standard(acs: AutoCovSet) -> dict:
    """Box-Pierce, Ljung-Box, Chitturi and Hosking statistics.

    ``q_bp`` and ``q_lb`` use the stacked autocorrelations (for ``d >= 2``
    these are the cross-correlations). ``q_c`` equals ``q_bp`` when ``d = 1``.
    """
    n, m = acs.n, acs.m
    h = np.arange(1, m + 1)
    r2 = acs.rho.reshape(m, -1) ** 2
    per_lag = r2.sum(axis=1)
    q_bp = n * per_lag.sum()
    q_lb = n * (n + 2.0) * np.sum(per_lag / (n - h))
    try:
        g0inv = np.linalg.inv(acs.gamma0)
    except np.linalg.LinAlgError as exc:
        raise SingularCovarianceError("Gamma(0) is singular") from exc
    tr = np.array([np.trace(g.T @ g0inv @ g @ g0inv) for g in acs.gamma])
    q_c = n * tr.sum()
    q_h = float(n) ** 2 * np.sum(tr / (n - h))
    return {"q_bp": float(q_bp), "q_lb": float(q_lb), "q_c": float(q_c), "q_h": float(q_h)}


# ---------------------------------------------------------------------------
# Reports


@dataclass
class DiagnosticRow:
    m: int
    K: int
    df: Optional[int]
    q_sn: Optional[float] = None
    q_sn_tilde: Optional[float] = None
    q_bp: Optional[float] = None
    q_lb: Optional[float] = None
    q_c: Optional[float] = None
    q_h: Optional[float] = None
    p_sn: Optional[float] = None
    p_sn_tilde: Optional[float] = None
    p_bp: Optional[float] = None
    p_lb: Optional[float] = None
    p_c: Optional[float] = None
    p_h: Optional[float] = None
    cv_sn: Optional[float] = None
    cv_chi2: Optional[float] = None
    error: Optional[str] = None

    @property
    def p_chi2(self) -> Optional[float]:
        return self.p_lb if self.q_h is None else self.p_h


@dataclass
class DiagnosticReport:
    n: int
    d: int
    k0: int
    rows: list = field(default_factory=list)
    rho: Optional[np.ndarray] = None

    def statistic(self, m: int, test: str) -> Optional[float]:
        """Value of ``test`` at lag ``m``; see :data:`TESTS` for the names."""
        row = self.row(m)
        return getattr(row, TESTS[test](self.d)[0])

    def row(self, m: int) -> DiagnosticRow:
        for r in self.rows:
            if r.m == m:
                return r
        raise KeyError(m)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "d": self.d,
            "k0": self.k0,
            "rows": [asdict(r) for r in self.rows],
            "rho": None if self.rho is None else self.rho.tolist(),
        }

    def to_markdown(self) -> str:
        names = list(TESTS)
        lines = ["| m | df | " + " | ".join(f"{t} stat | {t} p" for t in names) + " |",
                 "|---|---|" + "---|---|" * len(names)]
        for r in self.rows:
            cells = [str(r.m), "n.a." if r.df is None else str(r.df)]
            for t in names:
                stat_name, p_name = TESTS[t](self.d)
                cells.append(_fmt(getattr(r, stat_name)))
                cells.append(_fmt(getattr(r, p_name)))
            if r.error:
                cells[-1] += f" ({r.error})"
            lines.append("| " + " | ".join(cells) + " |")
        if self.rho is not None and self.d == 1:
            lines.append("")
            lines.append("| lag | " + " | ".join(str(h + 1) for h in range(self.rho.size)) + " |")
            lines.append("|---|" + "---|" * self.rho.size)
            lines.append("| rho | " + " | ".join(f"{v:.4f}" for v in self.rho) + " |")
        return "\n".join(lines)


def _fmt(value) -> str:
    return "n.a." if value is None else f"{value:.4f}"


# Column names: LB_SN / BP_SN are the weighted and plain self-normalized
# statistics; LB_S / BP_S are Ljung-Box / Box-Pierce when d = 1 and
# Hosking / Chitturi otherwise.
TESTS = {
    "LB_SN": lambda d: ("q_sn_tilde", "p_sn_tilde"),
    "BP_SN": lambda d: ("q_sn", "p_sn"),
    "LB_S": lambda d: ("q_lb", "p_lb") if d == 1 else ("q_h", "p_h"),
    "BP_S": lambda d: ("q_bp", "p_bp") if d == 1 else ("q_c", "p_c"),
}
SN_TESTS = ("LB_SN", "BP_SN")


def diagnose_residuals(e: np.ndarray, de: Optional[np.ndarray], sigma: np.ndarray,
                       m_list: Sequence[int], table: Optional[QuantileTable] = None,
                       alpha: float = 0.05, J: Optional[np.ndarray] = None) -> DiagnosticReport:
    """All statistics for fitted residuals ``e`` and their derivatives ``de``.

    Per-m failures (singular normalizer, missing table entry) are stored in
    the row's ``error`` field and do not stop the other lags.
    """
    e = np.asarray(e, dtype=float)
    n, d = e.shape
    k0 = 0 if de is None else de.shape[2]
    m_list = sorted({int(m) for m in m_list})
    if not m_list or m_list[0] < 1 or m_list[-1] >= n:
        raise DomainError(f"m values must satisfy 1 <= m < n={n}")
    mmax = m_list[-1]
    acs = autocov(e, mmax)
    report = DiagnosticReport(n, d, k0, rho=acs.rho)
    dd = d * d

    c_full = None
    shared_error = None
    try:
        sinv = _checked_inverse(sigma)
        if k0:
            j = J if J is not None else 2.0 / n * np.einsum("tak,ab,tbl->kl", de, sinv, de, optimize=True)
            info = InformationMatrices(j, phi_from_residuals(e, de, mmax))
        else:
            info = InformationMatrices(np.zeros((0, 0)), np.zeros((mmax * dd, 0)))
        lam = build_lambda(info)
        u = u_hat_from_residuals(e, de if k0 else None, sinv, mmax)
        c_full = build_c_hat(lam, u, acs.gamma_m)
    except WeakArmaError as exc:
        shared_error = f"{type(exc).__name__}: {exc}"

    for m in m_list:
        size = m * dd
        df = size - k0
        row = DiagnosticRow(m=m, K=size, df=df if df > 0 else None)
        sub = AutoCovSet(acs.gamma[:m], acs.gamma0, acs.s_e, acs.rho[:size], n)
        std = q_standard(sub)
        row.q_bp, row.q_lb = std["q_bp"], std["q_lb"]
        row.q_c, row.q_h = (std["q_c"], std["q_h"]) if d > 1 else (None, None)
        row.p_bp, row.p_lb = chi2_pvalue(row.q_bp, df), chi2_pvalue(row.q_lb, df)
        if d > 1:
            row.p_c, row.p_h = chi2_pvalue(row.q_c, df), chi2_pvalue(row.q_h, df)
        row.cv_chi2 = chi2_quantile(1 - alpha, df)
        if shared_error is not None:
            row.error = shared_error
        else:
            try:
                c = c_full[:size, :size]
                row.q_sn = q_sn(sub.rho, acs.s_e, c, n)
                row.q_sn_tilde = q_sn_tilde(sub.rho, acs.s_e, c, n, m)
                if table is not None:
                    row.cv_sn = table.critical_value(size, alpha)
                    row.p_sn = uk_pvalue(table, size, row.q_sn)
                    row.p_sn_tilde = uk_pvalue(table, size, row.q_sn_tilde)
            except WeakArmaError as exc:
                row.error = f"{type(exc).__name__}: {exc}"
        report.rows.append(row)
    return report


def run_diagnostics(spec: VarmaSpec, fit: ParamEstimate, series, m_list: Sequence[int],
                    table: Optional[QuantileTable] = None, alpha: float = 0.05) -> DiagnosticReport:
    """Fit diagnostics for each lag count in ``m_list``.

    The self-normalized statistics are referred to U_{m d^2}; the chi-squared
    statistics use ``m d^2 - k0`` degrees of freedom and are not available
    when that is not positive.
    """
    x = as_series(series, spec.d)
    rs = residual_derivatives(spec, fit.theta_hat, x)
    sigma = fit.sigma_e_hat
    j = estimate_J(spec, fit, x, rs) if spec.k0 else None
    return diagnose_residuals(rs.residuals, rs.derivs if spec.k0 else None, sigma, m_list,
                              table, alpha, J=j)
