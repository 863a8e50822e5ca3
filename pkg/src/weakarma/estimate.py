"""Gaussian quasi-maximum-likelihood fitting and the empirical matrices J and Phi.

The noise covariance is concentrated out, leaving the criterion
``log det((1/n) sum_t e~_t e~_t')``. Outside the stability and invertibility
region the criterion is ``+inf``, which the line search treats as a failed
trial step.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from weakarma.errors import (DimensionError, DomainError, InitializationError,
                             NumericOverflowError, SingularCovarianceError)
from weakarma.model import (ResidualSet, VarmaSpec, as_series, check_stability_invertibility,
                            residual_derivatives, residual_filter)

MAX_ITER = 500
GTOL = 1e-6
XTOL = 1e-10
COND_LIMIT = 1e12


@dataclass(frozen=True)
class ParamEstimate:
    """Result of :func:`qmle_fit`.

    ``gradient_norm`` is ``max_l |g_l| / (1 + |f|)`` at the returned point.
    """

    theta_hat: np.ndarray
    sigma_e_hat: np.ndarray
    objective_value: float
    n_iterations: int
    converged: bool
    gradient_norm: float

    def to_dict(self) -> dict:
        return {
            "theta_hat": self.theta_hat.tolist(),
            "sigma_e_hat": self.sigma_e_hat.tolist(),
            "objective_value": self.objective_value,
            "n_iterations": self.n_iterations,
            "converged": self.converged,
            "gradient_norm": self.gradient_norm,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ParamEstimate":
        return cls(
            theta_hat=np.asarray(obj["theta_hat"], dtype=float).ravel(),
            sigma_e_hat=np.atleast_2d(np.asarray(obj["sigma_e_hat"], dtype=float)),
            objective_value=float(obj["objective_value"]),
            n_iterations=int(obj["n_iterations"]),
            converged=bool(obj["converged"]),
            gradient_norm=float(obj["gradient_norm"]),
        )


@dataclass(frozen=True)
class InformationMatrices:
    J_hat: np.ndarray
    Phi_hat: np.ndarray


def residual_covariance(e: np.ndarray) -> np.ndarray:
    return e.T @ e / e.shape[0]


def _objective_grad(spec: VarmaSpec, theta: np.ndarray, x: np.ndarray, with_grad: bool):
    inf = (np.inf, None)
    if spec.k0 and not check_stability_invertibility(spec, theta).ok:
        return inf
    try:
        rs = residual_derivatives(spec, theta, x) if with_grad else residual_filter(spec, theta, x)
    except NumericOverflowError:
        return inf
    e = rs.residuals
    s = residual_covariance(e)
    sign, logdet = np.linalg.slogdet(s)
    if sign <= 0 or not np.isfinite(logdet):
        return inf
    if not with_grad:
        return float(logdet), None
    w = np.linalg.solve(s, e.T).T
    g = 2.0 / e.shape[0] * np.einsum("td,tdl->l", w, rs.derivs)
    return float(logdet), g


def qmle_objective(spec: VarmaSpec, theta, series) -> float:
    """Concentrated criterion, or ``inf`` when theta is inadmissible or the recursion overflows."""
    x = as_series(series, spec.d)
    theta = np.asarray(theta, dtype=float).ravel()
    if theta.shape[0] != spec.k0:
        raise DimensionError(f"theta has length {theta.shape[0]}, spec expects k0={spec.k0}")
    return _objective_grad(spec, theta, x, False)[0]


def qmle_gradient(spec: VarmaSpec, theta, series) -> np.ndarray:
    x = as_series(series, spec.d)
    f, g = _objective_grad(spec, np.asarray(theta, dtype=float).ravel(), x, True)
    if g is None:
        raise DomainError("gradient undefined outside the admissible region")
    return g


@dataclass
class _BfgsResult:
    x: np.ndarray
    f: float
    g: np.ndarray
    n_iter: int
    converged: bool
    gnorm: float


def _gnorm(g: np.ndarray, f: float) -> float:
    return float(np.max(np.abs(g)) / (1.0 + abs(f))) if g.size else 0.0


def bfgs(fun: Callable, x0: np.ndarray, max_iter: int = MAX_ITER, gtol: float = GTOL,
         xtol: float = XTOL, max_step: float = 1.0) -> _BfgsResult:
    """BFGS with Armijo backtracking that rejects non-finite trial values.

    ``fun(x)`` returns ``(f, g)``; ``f = inf`` marks an inadmissible point.
    Steps are capped at ``max_step`` in the max norm.
    """
    x = np.array(x0, dtype=float)
    f, g = fun(x)
    if not np.isfinite(f):
        raise InitializationError("starting point is not admissible")
    k = x.size
    h = np.eye(k)
    fresh = True
    it = 0
    while it < max_iter:
        gn = _gnorm(g, f)
        if gn < gtol:
            return _BfgsResult(x, f, g, it, True, gn)
        it += 1
        direction = -h @ g
        slope = g @ direction
        if not slope < 0:
            h, fresh = np.eye(k), True
            direction, slope = -g, -(g @ g)
        big = np.max(np.abs(direction))
        if big > max_step:
            direction *= max_step / big
            slope *= max_step / big
        t = 1.0
        accepted = False
        for _ in range(60):
            x_new = x + t * direction
            f_new, g_new = fun(x_new)
            if np.isfinite(f_new) and f_new <= f + 1e-4 * t * slope:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            if fresh:
                return _BfgsResult(x, f, g, it, False, gn)
            h, fresh = np.eye(k), True
            continue
        step = x_new - x
        y = g_new - g
        x, f, g = x_new, f_new, g_new
        if np.max(np.abs(step)) < xtol:
            return _BfgsResult(x, f, g, it, True, _gnorm(g, f))
        sy = step @ y
        if sy > 1e-12:
            if fresh:
                h = np.eye(k) * (sy / (y @ y))
            rho = 1.0 / sy
            v = np.eye(k) - rho * np.outer(step, y)
            h = v @ h @ v.T + rho * np.outer(step, step)
            fresh = False
    return _BfgsResult(x, f, g, it, False, _gnorm(g, f))


def default_starts(spec: VarmaSpec, init=None) -> list[np.ndarray]:
    """User start (if any), then lag-1 AR diagonal at +0.1, at -0.1, then zeros."""
    starts = []
    if init is not None:
        init = np.asarray(init, dtype=float).ravel()
        if init.shape[0] != spec.k0:
            raise DimensionError(f"init has length {init.shape[0]}, spec expects k0={spec.k0}")
        starts.append(init)
    kind, lag, row, col = spec.free_layout()
    diag = (kind == 0) & (lag == 1) & (row == col)
    for v in (0.1, -0.1):
        if diag.any():
            th = np.zeros(spec.k0)
            th[diag] = v
            starts.append(th)
    starts.append(np.zeros(spec.k0))
    return starts


def qmle_fit(spec: VarmaSpec, series, init=None, max_iter: int = MAX_ITER,
             n_starts: int = 3) -> ParamEstimate:
    """Quasi-maximum-likelihood fit of ``spec`` to ``series``.

    Starts are tried in turn until one converges, up to ``n_starts``
    attempts; the best point found is returned, with ``converged=False`` if
    no attempt converged.
    """
    x = as_series(series, spec.d)
    n = x.shape[0]
    k0 = spec.k0
    if n <= 10 * k0:
        raise DomainError(f"need n > 10*k0 = {10 * k0} observations, got {n}")

    def fun(theta):
        return _objective_grad(spec, theta, x, True)

    if k0 == 0:
        e = residual_filter(spec, np.zeros(0), x).residuals
        f, _ = fun(np.zeros(0))
        return ParamEstimate(np.zeros(0), residual_covariance(e), f, 0, np.isfinite(f), 0.0)

    best: Optional[_BfgsResult] = None
    attempts = 0
    for start in default_starts(spec, init):
        if attempts >= n_starts:
            break
        if not np.isfinite(fun(start)[0]):
            continue
        attempts += 1
        res = bfgs(fun, start, max_iter=max_iter)
        if best is None or (res.converged, -res.f) > (best.converged, -best.f):
            best = res
        if res.converged:
            break
    if best is None:
        raise InitializationError("no admissible starting point")
    e = residual_filter(spec, best.x, x).residuals
    return ParamEstimate(best.x, residual_covariance(e), best.f, best.n_iter, best.converged, best.gnorm)


def _checked_inverse(sigma: np.ndarray) -> np.ndarray:
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    w = np.linalg.eigvalsh((sigma + sigma.T) / 2)
    if w.min() <= 0 or w.max() / w.min() > COND_LIMIT:
        raise SingularCovarianceError("residual covariance matrix is singular or ill-conditioned")
    return np.linalg.inv(sigma)


def _fit_residuals(spec: VarmaSpec, fit: ParamEstimate, series,
                   residual_set: Optional[ResidualSet]) -> ResidualSet:
    if residual_set is not None and residual_set.derivs is not None:
        return residual_set
    return residual_derivatives(spec, fit.theta_hat, series)


def estimate_J(spec: VarmaSpec, fit: ParamEstimate, series,
               residual_set: Optional[ResidualSet] = None) -> np.ndarray:
    """``(2/n) sum_t de_t' Sigma^{-1} de_t`` at the fitted parameter."""
    rs = _fit_residuals(spec, fit, series, residual_set)
    sinv = _checked_inverse(fit.sigma_e_hat)
    de = rs.derivs
    return 2.0 / rs.n * np.einsum("tak,ab,tbl->kl", de, sinv, de, optimize=True)


def estimate_Phi(spec: VarmaSpec, fit: ParamEstimate, series, m: int,
                 residual_set: Optional[ResidualSet] = None) -> np.ndarray:
    """Stacked ``(1/n) sum_t e_{t-h} (x) de_t/dtheta'`` for h = 1..m, zero-padded."""
    if m < 1:
        raise DomainError("m must be >= 1")
    rs = _fit_residuals(spec, fit, series, residual_set)
    return phi_from_residuals(rs.residuals, rs.derivs, m)


def phi_from_residuals(e: np.ndarray, de: np.ndarray, m: int) -> np.ndarray:
    n, d = e.shape
    k0 = de.shape[2]
    phi = np.zeros((m * d * d, k0))
    for h in range(1, m + 1):
        if h >= n:
            break
        block = np.einsum("ti,tjk->ijk", e[:-h], de[h:]) / n
        phi[(h - 1) * d * d : h * d * d] = block.reshape(d * d, k0)
    return phi


def information_matrices(spec: VarmaSpec, fit: ParamEstimate, series, m: int,
                         residual_set: Optional[ResidualSet] = None) -> InformationMatrices:
    rs = _fit_residuals(spec, fit, series, residual_set)
    return InformationMatrices(estimate_J(spec, fit, series, rs), estimate_Phi(spec, fit, series, m, rs))
