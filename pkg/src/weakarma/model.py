"""Reduced-form VARMA models.

The model is

    X_t - sum_{i=1}^p A_i X_{t-i} = e_t - sum_{i=1}^q B_i e_{t-i}

with the coefficient matrices filled from a free parameter vector ``theta``
through a :class:`VarmaSpec` mask. The residual recursion starts from zero
pre-sample values of both X and the residuals.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from weakarma import _kernels
from weakarma.errors import DimensionError, DomainError, NumericOverflowError

STABILITY_MARGIN = 1e-8

MaskEntry = tuple  # ("free", index) or ("fixed", value)


def _normalize_entry(entry) -> MaskEntry:
    tag, value = entry
    tag = str(tag).lower()
    if tag == "free":
        if int(value) != value:
            raise DomainError(f"free index must be an integer, got {value!r}")
        return ("free", int(value))
    if tag == "fixed":
        return ("fixed", float(value))
    raise DomainError(f"unknown mask tag {tag!r}")


@dataclass(frozen=True)
class VarmaSpec:
    """Orders and parametrization mask of a reduced-form VARMA(p, q) model.

    ``mask`` holds one entry per coefficient of ``[A_1 ... A_p B_1 ... B_q]``,
    listed matrix by matrix and row-major inside each matrix. An entry is either
    ``("free", l)``, meaning the coefficient equals ``theta[l]``, or
    ``("fixed", value)``.
    """

    d: int
    p: int
    q: int
    mask: tuple

    def __post_init__(self):
        if self.d < 1 or self.p < 0 or self.q < 0:
            raise DomainError(f"invalid orders d={self.d}, p={self.p}, q={self.q}")
        mask = tuple(_normalize_entry(e) for e in self.mask)
        expected = (self.p + self.q) * self.d * self.d
        if len(mask) != expected:
            raise DimensionError(f"mask has {len(mask)} entries, expected {expected}")
        idx = sorted(v for tag, v in mask if tag == "free")
        if idx != list(range(len(idx))):
            raise DomainError("free indices must be exactly 0..k0-1 without duplicates")
        object.__setattr__(self, "mask", mask)

    @classmethod
    def full(cls, d: int, p: int, q: int) -> "VarmaSpec":
        """All coefficients free, indexed in ``vec`` (column-major) order.

        The parameter vector is ``(vec A_1', ..., vec A_p', vec B_1', ..., vec B_q')'``.
        """
        mask = []
        for k in range(p + q):
            for r in range(d):
                for c in range(d):
                    mask.append(("free", k * d * d + c * d + r))
        return cls(d, p, q, tuple(mask))

    @classmethod
    def white_noise(cls, d: int = 1) -> "VarmaSpec":
        return cls(d, 0, 0, ())

    @property
    def k0(self) -> int:
        return sum(1 for tag, _ in self.mask if tag == "free")

    def free_layout(self):
        """Location ``(kind, lag, row, col)`` of every free parameter, by index.

        ``kind`` is 0 for an AR coefficient, 1 for an MA coefficient.
        """
        k0 = self.k0
        kind = np.empty(k0, dtype=np.int64)
        lag = np.empty(k0, dtype=np.int64)
        row = np.empty(k0, dtype=np.int64)
        col = np.empty(k0, dtype=np.int64)
        dd = self.d * self.d
        for pos, (tag, value) in enumerate(self.mask):
            if tag != "free":
                continue
            k, rem = divmod(pos, dd)
            r, c = divmod(rem, self.d)
            if k < self.p:
                kind[value], lag[value] = 0, k + 1
            else:
                kind[value], lag[value] = 1, k - self.p + 1
            row[value], col[value] = r, c
        return kind, lag, row, col

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "p": self.p,
            "q": self.q,
            "mask": [[tag, value] for tag, value in self.mask],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "VarmaSpec":
        return cls(int(obj["d"]), int(obj["p"]), int(obj["q"]), tuple(tuple(e) for e in obj["mask"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "VarmaSpec":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class ResidualSet:
    """Residuals ``(n, d)`` and, optionally, their derivatives ``(n, d, k0)``."""

    residuals: np.ndarray
    derivs: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return self.residuals.shape[0]

    @property
    def d(self) -> int:
        return self.residuals.shape[1]


@dataclass(frozen=True)
class StabilityReport:
    stable: bool
    invertible: bool
    min_root_modulus_ar: float
    min_root_modulus_ma: float

    @property
    def ok(self) -> bool:
        return self.stable and self.invertible


def as_series(data, d: Optional[int] = None) -> np.ndarray:
    """Validate and return observations as a float ``(n, d)`` array."""
    x = np.asarray(data, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] < 1:
        raise DimensionError(f"series must be a non-empty (n, d) array, got shape {x.shape}")
    if d is not None and x.shape[1] != d:
        raise DimensionError(f"series has {x.shape[1]} columns, model dimension is {d}")
    if not np.all(np.isfinite(x)):
        raise DomainError("series contains non-finite values")
    return np.ascontiguousarray(x)


def _as_theta(spec: VarmaSpec, theta) -> np.ndarray:
    theta = np.atleast_1d(np.asarray(theta, dtype=float)).ravel() if np.size(theta) else np.zeros(0)
    if theta.shape[0] != spec.k0:
        raise DimensionError(f"theta has length {theta.shape[0]}, spec expects k0={spec.k0}")
    return theta


def build_matrices(spec: VarmaSpec, theta) -> tuple[np.ndarray, np.ndarray]:
    """Coefficient arrays ``A`` of shape ``(p, d, d)`` and ``B`` of shape ``(q, d, d)``."""
    theta = _as_theta(spec, theta)
    d = spec.d
    coefs = np.empty(len(spec.mask))
    for pos, (tag, value) in enumerate(spec.mask):
        coefs[pos] = theta[value] if tag == "free" else value
    mats = coefs.reshape(spec.p + spec.q, d, d)
    return mats[: spec.p].copy(), mats[spec.p :].copy()


def extract_params(spec: VarmaSpec, ar: np.ndarray, ma: np.ndarray) -> np.ndarray:
    """Inverse of :func:`build_matrices` on the free entries."""
    mats = np.concatenate([np.reshape(ar, (spec.p, spec.d, spec.d)),
                           np.reshape(ma, (spec.q, spec.d, spec.d))]).ravel()
    theta = np.empty(spec.k0)
    for pos, (tag, value) in enumerate(spec.mask):
        if tag == "free":
            theta[value] = mats[pos]
    return theta


def _min_root_modulus(mats: np.ndarray) -> float:
    """Smallest modulus of the zeros of det(I - sum_i M_i z^i).

    The zeros are the reciprocals of the non-zero eigenvalues of the block
    companion matrix; zero eigenvalues correspond to degree deflation.
    """
    k = mats.shape[0]
    if k == 0:
        return np.inf
    d = mats.shape[1]
    comp = np.zeros((k * d, k * d))
    comp[:d, :] = np.concatenate(list(mats), axis=1)
    if k > 1:
        comp[d:, :-d] = np.eye((k - 1) * d)
    rho = np.max(np.abs(np.linalg.eigvals(comp)))
    if rho == 0.0:
        return np.inf
    return 1.0 / rho


def check_stability_invertibility(spec: VarmaSpec, theta) -> StabilityReport:
    ar, ma = build_matrices(spec, theta)
    r_ar = _min_root_modulus(ar)
    r_ma = _min_root_modulus(ma)
    bound = 1.0 + STABILITY_MARGIN
    return StabilityReport(bool(r_ar > bound), bool(r_ma > bound), float(r_ar), float(r_ma))


def _check_finite(e: np.ndarray, de: Optional[np.ndarray] = None) -> None:
    bad = ~np.isfinite(e).all(axis=1)
    if de is not None and de.size:
        bad |= ~np.isfinite(de).all(axis=(1, 2))
    if bad.any():
        t = int(np.argmax(bad)) + 1
        raise NumericOverflowError(f"residual recursion overflowed at t={t}", t)


def residual_filter(spec: VarmaSpec, theta, series) -> ResidualSet:
    """Truncated residuals e~_t(theta), t = 1..n, with zero initial values."""
    x = as_series(series, spec.d)
    ar, ma = build_matrices(spec, theta)
    with np.errstate(over="ignore", invalid="ignore"):
        e = _kernels.residual_filter(x, ar, ma)
    _check_finite(e)
    return ResidualSet(e)


def residual_derivatives(spec: VarmaSpec, theta, series) -> ResidualSet:
    """Residuals together with their exact derivatives in each free parameter.

    The derivatives follow from differentiating the residual recursion, again
    with zero initial values, so ``derivs[t, :, l]`` is the exact gradient of
    ``residuals[t]`` with respect to ``theta[l]``.
    """
    x = as_series(series, spec.d)
    ar, ma = build_matrices(spec, theta)
    kind, lag, row, col = spec.free_layout()
    with np.errstate(over="ignore", invalid="ignore"):
        e, de = _kernels.residual_derivatives(x, ar, ma, kind, lag, row, col)
    _check_finite(e, de)
    return ResidualSet(e, de)


SpecLike = Union[VarmaSpec, dict, str]


def load_spec(obj: SpecLike) -> VarmaSpec:
    if isinstance(obj, VarmaSpec):
        return obj
    if isinstance(obj, str):
        return VarmaSpec.from_json(obj)
    return VarmaSpec.from_dict(obj)


def arma_spec(p: int, q: int) -> VarmaSpec:
    """Univariate ARMA(p, q) with parameters ``(a_1..a_p, b_1..b_q)``."""
    return VarmaSpec.full(1, p, q)


def coerce_theta(values: Sequence[float]) -> np.ndarray:
    return np.asarray(values, dtype=float).ravel()
