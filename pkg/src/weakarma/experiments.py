"""Monte Carlo harness for empirical size and power.

Replication ``r`` draws its noise from ``RngStream(seed, r)``. The longest
requested series is simulated once per replication and shorter lengths use
its leading observations, so every ``n`` sees the same underlying draws.
"""
from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from weakarma.dist import QuantileTable, chi2_quantile
from weakarma.errors import DomainError, WeakArmaError
from weakarma.estimate import qmle_fit
from weakarma.model import VarmaSpec, residual_derivatives
from weakarma.selfnorm import SN_TESTS, TESTS, diagnose_residuals
from weakarma.simulate import (BiArch1, Garch11, MultiPT, MultiPTSquared, MultiRT, NoiseKind,
                               ProductPT, ProductPTSquared, RatioRT, RngStream, StrongGaussian,
                               noise_from_dict, noise_to_dict, simulate_varma)

MODES = ("size", "raw_power", "adjusted_power")
UNRELIABLE_SHARE = 0.2
CALIBRATION_OFFSET = 2**32
TEST_NAMES = tuple(TESTS)


@dataclass(frozen=True)
class Dgp:
    spec: VarmaSpec
    theta: tuple
    noise: NoiseKind
    burnin: int = 1000

    def simulate(self, n: int, rng: RngStream) -> np.ndarray:
        return simulate_varma(self.spec, np.asarray(self.theta, dtype=float), self.noise, n, rng,
                              burnin=self.burnin)

    def to_dict(self) -> dict:
        return {"spec": self.spec.to_dict(), "theta": list(self.theta),
                "noise": noise_to_dict(self.noise), "burnin": self.burnin}

    @classmethod
    def from_dict(cls, obj: dict) -> "Dgp":
        return cls(VarmaSpec.from_dict(obj["spec"]), tuple(float(v) for v in obj["theta"]),
                   noise_from_dict(obj["noise"]), int(obj.get("burnin", 1000)))


@dataclass(frozen=True)
class ExperimentPlan:
    """One Monte Carlo design.

    ``null_dgp`` is the data-generating process used to calibrate empirical
    critical values in ``adjusted_power`` mode.
    """

    dgp: Dgp
    fit_spec: VarmaSpec
    n_list: tuple
    N: int
    m_list: tuple
    alpha: float = 0.05
    mode: str = "size"
    seed: int = 0
    label: str = ""
    null_dgp: Optional[Dgp] = None

    def validate(self) -> None:
        if self.N < 1:
            raise DomainError("N must be >= 1")
        if not 0 < self.alpha < 1:
            raise DomainError("alpha must be in (0, 1)")
        if self.mode not in MODES:
            raise DomainError(f"mode must be one of {MODES}")
        if not self.n_list or not self.m_list:
            raise DomainError("n_list and m_list must be non-empty")
        if self.fit_spec.d != self.dgp.spec.d:
            raise DomainError("fitted and generating models have different dimensions")
        if self.mode == "size" and self.dgp.spec != self.fit_spec:
            raise DomainError("size mode needs the generating spec to equal the fitted spec")
        if self.mode != "size" and self.dgp.spec == self.fit_spec:
            raise DomainError("power modes need a generating spec different from the fitted spec")
        if self.mode == "adjusted_power" and self.null_dgp is None:
            raise DomainError("adjusted_power mode needs a null_dgp")

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "dgp": self.dgp.to_dict(),
            "fit_spec": self.fit_spec.to_dict(),
            "n_list": list(self.n_list),
            "N": self.N,
            "m_list": list(self.m_list),
            "alpha": self.alpha,
            "mode": self.mode,
            "seed": self.seed,
            "null_dgp": None if self.null_dgp is None else self.null_dgp.to_dict(),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentPlan":
        null = obj.get("null_dgp")
        return cls(
            dgp=Dgp.from_dict(obj["dgp"]),
            fit_spec=VarmaSpec.from_dict(obj["fit_spec"]),
            n_list=tuple(int(v) for v in obj["n_list"]),
            N=int(obj["N"]),
            m_list=tuple(int(v) for v in obj["m_list"]),
            alpha=float(obj.get("alpha", 0.05)),
            mode=str(obj.get("mode", "size")),
            seed=int(obj.get("seed", 0)),
            label=str(obj.get("label", "")),
            null_dgp=None if null is None else Dgp.from_dict(null),
        )


@dataclass
class FrequencyRow:
    label: str
    n: int
    m: int
    rates: dict
    n_valid: int
    n_failed: int
    unreliable: bool


@dataclass
class FrequencyTable:
    """Rejection percentages per (label, n, m); ``None`` marks n.a. cells."""

    tests: tuple = TEST_NAMES
    rows: list = field(default_factory=list)

    def rate(self, test: str, n: int, m: int, label: Optional[str] = None) -> Optional[float]:
        for r in self.rows:
            if r.n == n and r.m == m and (label is None or r.label == label):
                return r.rates[test]
        raise KeyError((label, n, m))


# ---------------------------------------------------------------------------
# Replications


@dataclass
class _RepResult:
    """Statistics per n; ``stats[n]`` maps (test, m) to a value, or is None when the fit failed."""

    stats: dict


def _one_replication(dgp: Dgp, fit_spec: VarmaSpec, n_list, m_list, seed: int, stream: int,
                     alpha: float) -> _RepResult:
    out = {}
    for n in n_list:
        # Independent series per sample size.
        x = dgp.simulate(n, RngStream(seed, stream, sub=n))
        try:
            fit = qmle_fit(fit_spec, x)
        except WeakArmaError:
            out[n] = None
            continue
        if not fit.converged:
            out[n] = None
            continue
        try:
            rs = residual_derivatives(fit_spec, fit.theta_hat, x)
            report = diagnose_residuals(rs.residuals, rs.derivs if fit_spec.k0 else None,
                                        fit.sigma_e_hat, m_list, None, alpha)
        except WeakArmaError:
            out[n] = None
            continue
        stats = {}
        for row in report.rows:
            for test in TEST_NAMES:
                stat_name, _ = TESTS[test](report.d)
                value = getattr(row, stat_name)
                if test in SN_TESTS and row.error:
                    value = np.nan
                stats[(test, row.m)] = value
        out[n] = stats
    return _RepResult(out)


def _run_replications(dgp: Dgp, plan: ExperimentPlan, stream_offset: int = 0,
                      threads: int = 1) -> list:
    def job(r):
        return _one_replication(dgp, plan.fit_spec, plan.n_list, plan.m_list, plan.seed,
                                stream_offset + r, plan.alpha)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(job, range(plan.N)))
    return [job(r) for r in range(plan.N)]


def _critical_values(plan: ExperimentPlan, table: Optional[QuantileTable], d: int, k0: int,
                     calibration: Optional[list]) -> dict:
    """Critical value per (test, n, m); None means the test is not available."""
    cvs = {}
    for n in plan.n_list:
        for m in plan.m_list:
            df = m * d * d - k0
            for test in TEST_NAMES:
                if test in ("LB_S", "BP_S") and df <= 0:
                    cvs[(test, n, m)] = None
                    continue
                if calibration is not None:
                    values = [rep.stats[n][(test, m)] for rep in calibration
                              if rep.stats[n] is not None]
                    values = np.asarray([v for v in values if v is not None and np.isfinite(v)])
                    cvs[(test, n, m)] = float(np.quantile(values, 1 - plan.alpha)) if values.size else None
                elif test in SN_TESTS:
                    if table is None:
                        raise DomainError("a quantile table is needed for the self-normalized tests")
                    cvs[(test, n, m)] = table.critical_value(m * d * d, plan.alpha)
                else:
                    cvs[(test, n, m)] = chi2_quantile(1 - plan.alpha, df)
    return cvs


def _aggregate(plan: ExperimentPlan, reps: list, cvs: dict) -> FrequencyTable:
    freq = FrequencyTable()
    for n in plan.n_list:
        for m in plan.m_list:
            rates = {}
            valid_counts = []
            for test in TEST_NAMES:
                cv = cvs[(test, n, m)]
                values = [rep.stats[n][(test, m)] for rep in plan_reps(reps, n)]
                values = [v for v in values if v is not None and np.isfinite(v)]
                if test in SN_TESTS:
                    valid_counts.append(len(values))
                if cv is None or not values:
                    rates[test] = None
                    continue
                rates[test] = 100.0 * sum(v > cv for v in values) / len(values)
            n_valid = min(valid_counts) if valid_counts else 0
            n_failed = plan.N - n_valid
            freq.rows.append(FrequencyRow(plan.label, n, m, rates, n_valid, n_failed,
                                          n_failed > UNRELIABLE_SHARE * plan.N))
    return freq


def plan_reps(reps: list, n: int) -> list:
    return [rep for rep in reps if rep.stats[n] is not None]


def run_size(plan: ExperimentPlan, table: Optional[QuantileTable], threads: int = 1) -> FrequencyTable:
    """Empirical size: rejection rates of every test under the fitted model."""
    plan.validate()
    if plan.mode != "size":
        raise DomainError("run_size needs mode='size'")
    reps = _run_replications(plan.dgp, plan, threads=threads)
    cvs = _critical_values(plan, table, plan.fit_spec.d, plan.fit_spec.k0, None)
    return _aggregate(plan, reps, cvs)


def run_power(plan: ExperimentPlan, table: Optional[QuantileTable], threads: int = 1) -> FrequencyTable:
    """Raw power (asymptotic critical values) or size-adjusted power.

    In ``adjusted_power`` mode a calibration pass with the same ``N`` under
    ``plan.null_dgp`` (streams offset by 2**32) supplies empirical critical
    values per (test, n, m).
    """
    plan.validate()
    if plan.mode == "size":
        raise DomainError("run_power needs a power mode")
    calibration = None
    if plan.mode == "adjusted_power":
        calibration = _run_replications(plan.null_dgp, plan, CALIBRATION_OFFSET, threads)
    reps = _run_replications(plan.dgp, plan, threads=threads)
    cvs = _critical_values(plan, table, plan.fit_spec.d, plan.fit_spec.k0, calibration)
    return _aggregate(plan, reps, cvs)


def run_plan(plan: ExperimentPlan, table: Optional[QuantileTable], threads: int = 1) -> FrequencyTable:
    return run_size(plan, table, threads) if plan.mode == "size" else run_power(plan, table, threads)


# ---------------------------------------------------------------------------
# Output

_META = ("n_valid", "n_failed", "unreliable")


def _csv_rate(value: Optional[float]) -> str:
    return "n.a." if value is None else repr(float(value))


def emit_table(freq: FrequencyTable, fmt: str = "csv") -> str:
    """CSV or Markdown with one row per (model, n, m) and one column per test."""
    header = ["model", "n", "m", *freq.tests, *_META]
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for r in freq.rows:
            writer.writerow([r.label, r.n, r.m, *(_csv_rate(r.rates[t]) for t in freq.tests),
                             r.n_valid, r.n_failed, int(r.unreliable)])
        return buf.getvalue()
    if fmt == "md":
        lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
        for r in freq.rows:
            rates = ["n.a." if r.rates[t] is None else f"{r.rates[t]:.1f}" for t in freq.tests]
            lines.append("| " + " | ".join([r.label, str(r.n), str(r.m), *rates, str(r.n_valid),
                                            str(r.n_failed), "yes" if r.unreliable else "no"]) + " |")
        return "\n".join(lines) + "\n"
    raise DomainError(f"unknown table format {fmt!r}")


def parse_table(text: str) -> FrequencyTable:
    """Inverse of ``emit_table(..., 'csv')``."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    tests = tuple(header[3 : len(header) - len(_META)])
    freq = FrequencyTable(tests=tests)
    for row in reader:
        if not row:
            continue
        label, n, m = row[0], int(row[1]), int(row[2])
        vals = row[3 : 3 + len(tests)]
        rates = {t: None if v == "n.a." else float(v) for t, v in zip(tests, vals)}
        n_valid, n_failed, unreliable = row[3 + len(tests) :]
        freq.rows.append(FrequencyRow(label, n, m, rates, int(n_valid), int(n_failed),
                                      bool(int(unreliable))))
    return freq


# ---------------------------------------------------------------------------
# Presets
#
# Univariate ARMA(1,1): X_t = a X_{t-1} + eps_t + b eps_{t-1} with (a, b) =
# (0.95, -0.6). The internal MA coefficient is -b.

ARMA11 = VarmaSpec.full(1, 1, 1)
ARMA11_THETA = (0.95, 0.6)
ARMA21 = VarmaSpec.full(1, 2, 1)
ARMA21_THETA = (1.0, -0.2, -0.8)
VARMA11 = VarmaSpec.full(2, 1, 1)
VARMA11_THETA = (1.2, 0.6, -0.5, 0.3, -0.6, 0.3, 0.3, 0.6)
VARMA21 = VarmaSpec.full(2, 2, 1)
# A_1 = [[1.2, 0.6], [-0.5, 0.3]], A_2 = 0.1 I, B_1 = [[-0.6, 0.3], [0.3, 0.6]] in vec order.
VARMA21_THETA = (1.2, -0.5, 0.6, 0.3, 0.1, 0.0, 0.0, 0.1, -0.6, 0.3, 0.3, 0.6)

UNIVARIATE_NOISES = {
    "I": StrongGaussian(),
    "II": Garch11(1.0, 0.1, 0.85),
    "III": ProductPT(),
    "IV": ProductPTSquared(),
    "V": RatioRT(),
}
BIVARIATE_NOISES = {
    "I": StrongGaussian.identity(2),
    "II": BiArch1(),
    "III": MultiPT(),
    "IV": MultiPTSquared(),
    "V": MultiRT(),
}
PRESET_SCALES = {
    "desk": {"N": 200, "n_list": (500, 2000)},
    "full": {"N": 1000, "n_list": (500, 2000, 10000)},
}
DEFAULT_M = (1, 2, 3, 6, 12)


def preset_plan(name: str, model: str = "I", scale: str = "desk", mode: Optional[str] = None,
                seed: int = 0, m_list: Sequence[int] = DEFAULT_M, N: Optional[int] = None,
                n_list: Optional[Sequence[int]] = None) -> ExperimentPlan:
    """Plans for the standard designs.

    ``name`` is ``"arma"`` or ``"varma"`` (size of ARMA(1,1) / VARMA(1,1)), or
    ``"arma_power"`` / ``"varma_power"`` (data from the ARMA(2,1) / VARMA(2,1)
    alternative, fitted with order (1,1)). ``model`` picks the noise, I to V.
    """
    if scale not in PRESET_SCALES:
        raise DomainError(f"scale must be one of {sorted(PRESET_SCALES)}")
    sc = PRESET_SCALES[scale]
    univariate = name.startswith("arma")
    noises = UNIVARIATE_NOISES if univariate else BIVARIATE_NOISES
    if model not in noises:
        raise DomainError(f"model must be one of {sorted(noises)}")
    noise = noises[model]
    null_spec, null_theta = (ARMA11, ARMA11_THETA) if univariate else (VARMA11, VARMA11_THETA)
    null = Dgp(null_spec, null_theta, noise)
    if name in ("arma", "varma"):
        dgp, default_mode = null, "size"
    elif name == "arma_power":
        dgp, default_mode = Dgp(ARMA21, ARMA21_THETA, noise), "adjusted_power"
    elif name == "varma_power":
        dgp, default_mode = Dgp(VARMA21, VARMA21_THETA, noise), "adjusted_power"
    else:
        raise DomainError(f"unknown preset {name!r}")
    return ExperimentPlan(
        dgp=dgp,
        fit_spec=null_spec,
        n_list=tuple(n_list or sc["n_list"]),
        N=int(N or sc["N"]),
        m_list=tuple(m_list),
        mode=mode or default_mode,
        seed=seed,
        label=f"{name}:{model}",
        null_dgp=null if (mode or default_mode) != "size" else None,
    )
