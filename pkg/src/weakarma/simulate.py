"""Strong and weak white noises, and VARMA trajectories driven by them.

Every generator is a pure function of its parameters and an
:class:`RngStream`, so replication ``r`` of an experiment can be rebuilt in
isolation from ``(seed, r)``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import ClassVar, Optional, Union

import numpy as np

from weakarma import _kernels
from weakarma.errors import DomainError, StabilityError
from weakarma.model import VarmaSpec, build_matrices, check_stability_invertibility

DEFAULT_BURNIN = 1000


@dataclass(frozen=True)
class RngStream:
    """Reproducible random stream keyed by ``(seed, stream)`` or ``(seed, stream, sub)``.

    The generator is SFC64 seeded through ``SeedSequence(seed,
    spawn_key=(stream,))`` (or ``(stream, sub)``), so distinct streams are
    statistically independent and each one can be regenerated on its own.
    """

    seed: int
    stream: int = 0
    sub: Optional[int] = None

    def generator(self) -> np.random.Generator:
        key = (int(self.stream),) if self.sub is None else (int(self.stream), int(self.sub))
        ss = np.random.SeedSequence(int(self.seed), spawn_key=key)
        return np.random.Generator(np.random.SFC64(ss))

    def normals(self, shape) -> np.ndarray:
        return self.generator().standard_normal(shape)


# ---------------------------------------------------------------------------
# Noise kinds


@dataclass(frozen=True)
class StrongGaussian:
    """iid N(0, sigma) vectors."""

    sigma: tuple = ((1.0,),)
    tag: ClassVar[str] = "strong_gaussian"

    @property
    def d(self) -> int:
        return len(self.sigma)

    def validate(self) -> None:
        s = np.asarray(self.sigma, dtype=float)
        if s.ndim != 2 or s.shape[0] != s.shape[1]:
            raise DomainError("sigma must be a square matrix")
        if not np.allclose(s, s.T) or np.linalg.eigvalsh(s).min() <= 0:
            raise DomainError("sigma must be symmetric positive definite")

    def draw(self, n: int, gen: np.random.Generator) -> np.ndarray:
        chol = np.linalg.cholesky(np.asarray(self.sigma, dtype=float))
        return gen.standard_normal((n, self.d)) @ chol.T

    @classmethod
    def identity(cls, d: int) -> "StrongGaussian":
        return cls(tuple(tuple(float(i == j) for j in range(d)) for i in range(d)))


@dataclass(frozen=True)
class Garch11:
    """eps_t = sigma_t eta_t with sigma_t^2 = omega + alpha eps_{t-1}^2 + beta sigma_{t-1}^2."""

    omega: float = 1.0
    alpha: float = 0.0
    beta: float = 0.0
    tag: ClassVar[str] = "garch11"
    d: ClassVar[int] = 1

    def validate(self) -> None:
        if self.omega <= 0 or self.alpha < 0 or self.beta < 0:
            raise DomainError("GARCH(1,1) needs omega > 0 and alpha, beta >= 0")
        if self.alpha + self.beta >= 1:
            raise DomainError("GARCH(1,1) needs alpha + beta < 1")

    def draw(self, n: int, gen: np.random.Generator) -> np.ndarray:
        eta = gen.standard_normal(n)
        return _kernels.garch11(eta, float(self.omega), float(self.alpha), float(self.beta))[:, None]


@dataclass(frozen=True)
class ProductPT:
    """eps_t = eta_t eta_{t-1}."""

    tag: ClassVar[str] = "product_pt"
    d: ClassVar[int] = 1

    def validate(self) -> None:
        pass

    def draw(self, n: int, gen: np.random.Generator) -> np.ndarray:
        eta = gen.standard_normal(n + 1)
        return (eta[1:] * eta[:-1])[:, None]


@dataclass(frozen=True)
class ProductPTSquared:
    """eps_t = eta_t^2 eta_{t-1}."""

    tag: ClassVar[str] = "product_pt_squared"
    d: ClassVar[int] = 1

    def validate(self) -> None:
        pass

    def draw(self, n: int, gen: np.random.Generator) -> np.ndarray:
        eta = gen.standard_normal(n + 1)
        return (eta[1:] ** 2 * eta[:-1])[:, None]


@dataclass(frozen=True)
class RatioRT:
    """eps_t = eta_t / (|eta_{t-1}| + 1)."""

    tag: ClassVar[str] = "ratio_rt"
    d: ClassVar[int] = 1

    def validate(self) -> None:
        pass

    def draw(self, n: int, gen: np.random.Generator) -> np.ndarray:
        eta = gen.standard_normal(n + 1)
        return (eta[1:] / (np.abs(eta[:-1]) + 1.0))[:, None]


@dataclass(frozen=True)
class BiArch1:
    """Bivariate diagonal ARCH(1): eps_{i,t} = h_{ii,t} eta_{i,t}, h^2_t = omega + A eps^2_{t-1}."""

    omega: tuple = (0.3, 0.2)
    a: tuple = ((0.45, 0.0), (0.40, 0.25))
    tag: ClassVar[str] = "bi_arch1"
    d: ClassVar[int] = 2

    def validate(self) -> None:
        om = np.asarray(self.omega, dtype=float)
        a = np.asarray(self.a, dtype=float)
        if om.shape != (2,) or a.shape != (2, 2):
            raise DomainError("BiArch1 needs a 2-vector omega and a 2x2 matrix a")
        if np.any(om <= 0) or np.any(a < 0):
            raise DomainError("BiArch1 needs omega > 0 and a >= 0")
        if np.max(np.abs(np.linalg.eigvals(a))) >= 1:
            raise DomainError("BiArch1 needs spectral radius of a below 1")

    def draw(self, n: int, gen: np.random.Generator) -> np.ndarray:
        eta = gen.standard_normal((n, 2))
        return _kernels.diagonal_arch1(eta, np.asarray(self.omega, dtype=float),
                                       np.asarray(self.a, dtype=float))


@dataclass(frozen=True)
class MultiPT:
    """eps_1 = eta1_t eta2_{t-1} eta1_{t-2}, eps_2 = eta2_t eta1_{t-1} eta2_{t-2}."""

    tag: ClassVar[str] = "multi_pt"
    d: ClassVar[int] = 2
    power: ClassVar[int] = 1

    def validate(self) -> None:
        pass

    def draw(self, n: int, gen: np.random.Generator) -> np.ndarray:
        eta = gen.standard_normal((n + 2, 2))
        cur, lag1, lag2 = eta[2:], eta[1:-1], eta[:-2]
        out = np.empty((n, 2))
        out[:, 0] = cur[:, 0] ** self.power * lag1[:, 1] * lag2[:, 0]
        out[:, 1] = cur[:, 1] ** self.power * lag1[:, 0] * lag2[:, 1]
        return out


@dataclass(frozen=True)
class MultiPTSquared(MultiPT):
    """Same as :class:`MultiPT` with the current factor squared."""

    tag: ClassVar[str] = "multi_pt_squared"
    power: ClassVar[int] = 2


@dataclass(frozen=True)
class MultiRT:
    """eps_{i,t} = eta_{i,t} / (|eta_{i,t-1}| + 1), componentwise."""

    tag: ClassVar[str] = "multi_rt"
    d: ClassVar[int] = 2

    def validate(self) -> None:
        pass

    def draw(self, n: int, gen: np.random.Generator) -> np.ndarray:
        eta = gen.standard_normal((n + 1, 2))
        return eta[1:] / (np.abs(eta[:-1]) + 1.0)


NoiseKind = Union[StrongGaussian, Garch11, ProductPT, ProductPTSquared, RatioRT,
                  BiArch1, MultiPT, MultiPTSquared, MultiRT]

_NOISE_TYPES = {cls.tag: cls for cls in (StrongGaussian, Garch11, ProductPT, ProductPTSquared,
                                          RatioRT, BiArch1, MultiPT, MultiPTSquared, MultiRT)}


def _tuplify(value):
    if isinstance(value, (list, tuple)):
        return tuple(_tuplify(v) for v in value)
    return value


def noise_to_dict(kind: NoiseKind) -> dict:
    return {"kind": kind.tag, **asdict(kind)}


def noise_from_dict(obj: dict) -> NoiseKind:
    obj = dict(obj)
    tag = obj.pop("kind", None)
    if tag not in _NOISE_TYPES:
        raise DomainError(f"unknown noise kind {tag!r}; expected one of {sorted(_NOISE_TYPES)}")
    kind = _NOISE_TYPES[tag](**{k: _tuplify(v) for k, v in obj.items()})
    kind.validate()
    return kind


def generate_noise(kind: NoiseKind, n: int, rng: RngStream) -> np.ndarray:
    """``n`` draws of the noise as an ``(n, d)`` array.

    Pre-sample values needed by the product and ratio noises come from the
    same stream, ahead of the in-sample draws.
    """
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    kind.validate()
    return np.ascontiguousarray(kind.draw(int(n), rng.generator()))


def simulate_varma(spec: VarmaSpec, theta, kind: NoiseKind, n: int, rng: RngStream,
                   burnin: int = DEFAULT_BURNIN) -> np.ndarray:
    """Simulate ``n`` observations after discarding ``burnin`` from a zero state."""
    if kind.d != spec.d:
        raise DomainError(f"noise dimension {kind.d} differs from model dimension {spec.d}")
    if burnin < 0:
        raise DomainError("burnin must be >= 0")
    report = check_stability_invertibility(spec, theta)
    if not report.ok:
        raise StabilityError(
            f"theta not admissible (AR root modulus {report.min_root_modulus_ar:.6g}, "
            f"MA root modulus {report.min_root_modulus_ma:.6g})")
    eps = generate_noise(kind, n + burnin, rng)
    ar, ma = build_matrices(spec, theta)
    return _kernels.varma_simulate(eps, ar, ma)[burnin:]
