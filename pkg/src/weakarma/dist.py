"""Monte Carlo law of U_K and chi-squared helpers.

U_K = B_K(1)' V_K^{-1} B_K(1) with V_K the integral of the outer product of
the Brownian bridge B_K(r) - r B_K(1). Each draw simulates a K-dimensional
random walk on ``n_steps`` increments and approximates V_K by a left-point
Riemann sum.

With unit-variance increments and partial sums W_i (i = 1..N), the bridge sum
reduces to

    M = G - (S2 W_N' + W_N S2') / N + c_N W_N W_N',

where G = sum_{i<N} W_i W_i', S2 = sum_{i<N} i W_i and c_N = sum_{i<N} i^2 / N^2,
and then U_K = N W_N' M^{-1} W_N. Coordinate k of draw j always comes from the
same random stream, so the leading K x K block of the Gram for K_max
coordinates gives the draw for every K <= K_max.
"""
from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import special

from weakarma.errors import DomainError, TableFormatError, TableLookupError

MAGIC = b"UKQT"
FORMAT_VERSION = 1
DEFAULT_R = 100_000
DEFAULT_STEPS = 2000
DEFAULT_CHUNK = 1000
SINGULAR_COND = 1e12
_RESAMPLE_KEY = 2**31


def _walk(seed: int, key: tuple, shape: tuple) -> np.ndarray:
    ss = np.random.SeedSequence(int(seed), spawn_key=key)
    gen = np.random.Generator(np.random.SFC64(ss))
    return np.cumsum(gen.standard_normal(shape), axis=-1)


def _uk_from_walks(w: np.ndarray, ks: Sequence[int]) -> tuple[dict, dict]:
    """U_K values for walks ``w`` of shape (B, K_max, N).

    Returns the values and a boolean mask of singular draws, both per K.
    """
    nb, _, n = w.shape
    head = w[:, :, : n - 1]
    wn = w[:, :, n - 1]
    gram = head @ head.transpose(0, 2, 1)
    s2 = head @ np.arange(1, n, dtype=float)
    c = float(np.sum(np.arange(1, n, dtype=float) ** 2)) / n**2
    cross = s2[:, :, None] * wn[:, None, :]
    m_full = gram - (cross + cross.transpose(0, 2, 1)) / n + c * wn[:, :, None] * wn[:, None, :]
    values, singular = {}, {}
    for k in ks:
        mk = m_full[:, :k, :k]
        eig = np.linalg.eigvalsh(mk)
        bad = (eig[:, 0] <= 0) | (eig[:, -1] > SINGULAR_COND * np.maximum(eig[:, 0], 1e-300))
        vals = np.full(nb, np.nan)
        ok = ~bad
        if ok.any():
            x = np.linalg.solve(mk[ok], wn[ok, :k, None])[:, :, 0]
            vals[ok] = n * np.einsum("bk,bk->b", wn[ok, :k], x)
        values[k], singular[k] = vals, bad
    return values, singular


def _chunk(seed: int, c: int, size: int, kmax: int, n_steps: int, ks: Sequence[int]):
    w = np.empty((size, kmax, n_steps))
    for k in range(kmax):
        w[:, k, :] = _walk(seed, (c, k), (size, n_steps))
    values, singular = _uk_from_walks(w, ks)
    resamples = {k: 0 for k in ks}
    for k in ks:
        for j in np.flatnonzero(singular[k]):
            attempt = 0
            while True:
                attempt += 1
                resamples[k] += 1
                wj = _walk(seed, (c, _RESAMPLE_KEY + int(j), attempt), (1, kmax, n_steps))
                v, bad = _uk_from_walks(wj, [k])
                if not bad[k][0]:
                    values[k][j] = v[k][0]
                    break
    return values, resamples


@dataclass
class QuantileTable:
    """Sorted Monte Carlo draws of U_K for several K.

    ``meta`` holds ``R``, ``n_steps``, ``seed`` and ``resamples`` (total count
    of singular draws that were redrawn).
    """

    samples: dict
    meta: dict = field(default_factory=dict)

    @property
    def K_range(self) -> list:
        return sorted(self.samples)

    def _get(self, K: int) -> np.ndarray:
        try:
            return self.samples[int(K)]
        except KeyError:
            raise TableLookupError(f"K={K} not in table (available: {self.K_range})") from None

    def quantile(self, K: int, prob: float) -> float:
        """Empirical ``prob``-quantile of U_K, e.g. ``prob=0.95`` for the 5% critical value."""
        if not 0.0 < prob < 1.0:
            raise DomainError("prob must be in (0, 1)")
        return float(np.quantile(self._get(K), prob))

    def critical_value(self, K: int, alpha: float = 0.05) -> float:
        return self.quantile(K, 1.0 - alpha)

    def pvalue(self, K: int, stat: float) -> float:
        return uk_pvalue(self, K, stat)

    def save(self, path) -> None:
        save_table(self, path)

    @classmethod
    def load(cls, path) -> "QuantileTable":
        return load_table(path)


def tabulate_table(K_values: Iterable[int], R: int = DEFAULT_R, n_steps: int = DEFAULT_STEPS,
                   seed: int = 0, chunk: int = DEFAULT_CHUNK, threads: int = 1) -> QuantileTable:
    """Tabulate U_K for every K in ``K_values`` from one shared set of walks.

    The draws for a given K do not depend on the other requested values, and
    a smaller ``R`` (same ``chunk``) reproduces a prefix of a larger run
    before sorting.
    """
    ks = sorted({int(k) for k in K_values})
    if not ks or ks[0] < 1:
        raise DomainError("K values must be >= 1")
    if R < 1000:
        raise DomainError("R must be >= 1000")
    if n_steps < 100:
        raise DomainError("n_steps must be >= 100")
    kmax = ks[-1]
    sizes = [min(chunk, R - s) for s in range(0, R, chunk)]

    def job(c):
        return _chunk(seed, c, sizes[c], kmax, n_steps, ks)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(job, range(len(sizes))))
    else:
        results = [job(c) for c in range(len(sizes))]
    samples = {k: np.sort(np.concatenate([r[0][k] for r in results])) for k in ks}
    resamples = sum(sum(r[1].values()) for r in results)
    meta = {"R": int(R), "n_steps": int(n_steps), "seed": int(seed), "resamples": int(resamples)}
    return QuantileTable(samples, meta)


def tabulate_uk(K: int, R: int = DEFAULT_R, n_steps: int = DEFAULT_STEPS, seed: int = 0,
                chunk: int = DEFAULT_CHUNK, threads: int = 1) -> np.ndarray:
    """Sorted sample of ``R`` draws of U_K."""
    return tabulate_table([K], R, n_steps, seed, chunk, threads).samples[int(K)]


def uk_pvalue(table: QuantileTable, K: int, stat: float) -> float:
    """``(#{draws > stat} + 0.5) / (R + 1)``."""
    draws = table._get(K)
    above = draws.size - np.searchsorted(draws, stat, side="right")
    return float((above + 0.5) / (draws.size + 1))


def save_table(table: QuantileTable, path) -> None:
    meta = table.meta
    parts = [MAGIC, struct.pack("<I", FORMAT_VERSION),
             struct.pack("<QQQQ", int(meta.get("R", 0)), int(meta.get("n_steps", 0)),
                         int(meta.get("seed", 0)) & 0xFFFFFFFFFFFFFFFF, int(meta.get("resamples", 0))),
             struct.pack("<I", len(table.samples))]
    for k in table.K_range:
        arr = np.ascontiguousarray(table.samples[k], dtype="<f8")
        parts.append(struct.pack("<IQ", k, arr.size))
        parts.append(arr.tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_table(path) -> QuantileTable:
    raw = Path(path).read_bytes()
    try:
        if raw[:4] != MAGIC:
            raise TableFormatError(f"{path}: not a quantile table (bad magic)")
        (version,) = struct.unpack_from("<I", raw, 4)
        if version != FORMAT_VERSION:
            raise TableFormatError(f"{path}: unsupported table version {version}")
        r, n_steps, seed, resamples = struct.unpack_from("<QQQQ", raw, 8)
        (nk,) = struct.unpack_from("<I", raw, 40)
        off = 44
        samples = {}
        for _ in range(nk):
            k, length = struct.unpack_from("<IQ", raw, off)
            off += 12
            end = off + 8 * length
            if end > len(raw):
                raise TableFormatError(f"{path}: truncated data for K={k}")
            samples[int(k)] = np.frombuffer(raw[off:end], dtype="<f8").astype(float)
            off = end
        if off != len(raw):
            raise TableFormatError(f"{path}: trailing bytes")
    except struct.error as exc:
        raise TableFormatError(f"{path}: truncated header") from exc
    meta = {"R": r, "n_steps": n_steps, "seed": seed, "resamples": resamples}
    return QuantileTable(samples, meta)


def chi2_pvalue(stat: float, df: int) -> Optional[float]:
    """Upper-tail probability, or ``None`` when ``df <= 0`` (test not available)."""
    if df <= 0:
        return None
    if stat < 0:
        raise DomainError("statistic must be >= 0")
    return float(special.gammaincc(df / 2.0, stat / 2.0))


def chi2_quantile(prob: float, df: int) -> Optional[float]:
    """``prob``-quantile of chi2(df), or ``None`` when ``df <= 0``."""
    if df <= 0:
        return None
    if not 0.0 < prob < 1.0:
        raise DomainError("prob must be in (0, 1)")
    if prob > 0.5:
        return float(2.0 * special.gammainccinv(df / 2.0, 1.0 - prob))
    return float(2.0 * special.gammaincinv(df / 2.0, prob))
