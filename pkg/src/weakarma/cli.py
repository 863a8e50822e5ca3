"""Command-line interface.

Subcommands: simulate, fit, test, tabulate, mc-size, mc-power, analyze.
The exit status is 0 on success, 1 on a package or I/O error and 2 on a
usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from weakarma.data import load_csv, log_returns, write_csv
from weakarma.dist import QuantileTable, load_table, tabulate_table
from weakarma.errors import DomainError, WeakArmaError
from weakarma.estimate import ParamEstimate, qmle_fit
from weakarma.experiments import ExperimentPlan, emit_table, preset_plan, run_power, run_size
from weakarma.model import VarmaSpec
from weakarma.selfnorm import DiagnosticReport, TESTS, diagnose_residuals, run_diagnostics
from weakarma.simulate import RngStream, noise_from_dict, simulate_varma

log = logging.getLogger("weakarma")
TABLE_ENV = "WEAKARMA_TABLE"
TRANSFORMS = ("log_returns", "squared_log_returns")


# ---------------------------------------------------------------------------
# Returns workflow


@dataclass(frozen=True)
class ReturnsPipelineConfig:
    """``transform`` is ``log_returns`` (white-noise test on the returns) or
    ``squared_log_returns`` (ARMA(1,1) fitted to mean-corrected squared returns)."""

    input: str
    price_column: str
    transform: str = "log_returns"
    m_list: tuple = (1, 2, 3, 6, 12)
    alpha: float = 0.05

    def validate(self) -> None:
        if self.transform not in TRANSFORMS:
            raise DomainError(f"transform must be one of {TRANSFORMS}")
        if not self.m_list or list(self.m_list) != sorted(set(self.m_list)):
            raise DomainError("m_list must be non-empty and strictly ascending")


def analyze_returns(config: ReturnsPipelineConfig, table: Optional[QuantileTable]):
    """Diagnostic report, plus the ARMA(1,1) fit for the squared-returns transform."""
    config.validate()
    prices = load_csv(config.input, [config.price_column])
    if prices.dropped:
        log.warning("dropped %d rows with missing values", prices.dropped)
    r = log_returns(prices.data[:, 0])
    if config.transform == "log_returns":
        x = r[:, None]
        sigma = x.T @ x / x.shape[0]
        return diagnose_residuals(x, None, sigma, config.m_list, table, config.alpha), None
    x = (r**2 - np.mean(r**2))[:, None]
    spec = VarmaSpec.full(1, 1, 1)
    fit = qmle_fit(spec, x)
    return run_diagnostics(spec, fit, x, config.m_list, table, config.alpha), fit


# ---------------------------------------------------------------------------
# Helpers


def _read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def _parse_list(text: str) -> list[int]:
    """``"1,2,3"`` or ``"1..20"`` (inclusive) or a mix such as ``"1..3,6,12"``."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..")
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError(f"empty list {text!r}")
    return out


def _parse_floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _model(path: str, theta_override: Optional[Sequence[float]]):
    obj = _read_json(path)
    spec = VarmaSpec.from_dict(obj)
    theta = theta_override if theta_override is not None else obj.get("theta")
    return spec, None if theta is None else np.asarray(theta, dtype=float)


def _table(path: Optional[str], required: bool) -> Optional[QuantileTable]:
    path = path or os.environ.get(TABLE_ENV)
    if not path:
        if required:
            raise DomainError(f"a quantile table is required (--table or ${TABLE_ENV})")
        log.warning("no quantile table given; self-normalized p-values are not available")
        return None
    return load_table(path)


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _report_text(report: DiagnosticReport, fmt: str, extra: Optional[dict] = None) -> str:
    if fmt == "json":
        obj = report.to_dict()
        if extra:
            obj.update(extra)
        return json.dumps(obj, indent=2)
    if fmt == "md":
        text = report.to_markdown()
        if extra and "fit" in extra:
            fit = extra["fit"]
            text = f"theta_hat = {fit['theta_hat']}, sigma_e_hat = {fit['sigma_e_hat']}\n\n" + text
        return text
    lines = ["m,df," + ",".join(f"{t},{t}_p" for t in TESTS)]
    for row in report.rows:
        cells = [str(row.m), "n.a." if row.df is None else str(row.df)]
        for t in TESTS:
            stat_name, p_name = TESTS[t](report.d)
            for name in (stat_name, p_name):
                v = getattr(row, name)
                cells.append("n.a." if v is None else repr(float(v)))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Commands


def cmd_simulate(args) -> None:
    spec, theta = _model(args.model, args.theta)
    if theta is None:
        raise DomainError("model has no theta; pass --theta or add \"theta\" to the JSON")
    noise = noise_from_dict(_read_json(args.noise))
    x = simulate_varma(spec, theta, noise, args.n, RngStream(args.seed, args.stream), burnin=args.burnin)
    if args.out:
        write_csv(args.out, x)
    else:
        for row in x:
            print(",".join(repr(float(v)) for v in row))


def cmd_fit(args) -> None:
    spec, theta = _model(args.model, args.theta)
    data = load_csv(args.data)
    if data.dropped:
        log.warning("dropped %d rows with missing values", data.dropped)
    fit = qmle_fit(spec, data.data, init=theta)
    if not fit.converged:
        log.warning("optimizer did not converge (gradient norm %.3g)", fit.gradient_norm)
    _emit(json.dumps({"spec": spec.to_dict(), **fit.to_dict()}, indent=2), args.out)


def cmd_test(args) -> None:
    spec, _ = _model(args.model, None)
    data = load_csv(args.data).data
    if args.fit:
        fit = ParamEstimate.from_dict(_read_json(args.fit))
    else:
        fit = qmle_fit(spec, data)
    table = _table(args.table, required=False)
    report = run_diagnostics(spec, fit, data, args.m, table, args.alpha)
    _emit(_report_text(report, args.format), args.out)


def cmd_tabulate(args) -> None:
    if not args.out:
        raise DomainError("tabulate needs --out")
    table = tabulate_table(args.K, R=args.R, n_steps=args.steps, seed=args.seed, threads=args.threads)
    table.save(args.out)
    log.info("wrote %d K values, %d resampled draws", len(table.K_range), table.meta["resamples"])


def _plan(args, mode: str) -> ExperimentPlan:
    if args.plan:
        plan = ExperimentPlan.from_dict(_read_json(args.plan))
        overrides = {}
        if args.N:
            overrides["N"] = args.N
        if mode != "size":
            overrides["mode"] = mode
        if overrides:
            plan = replace(plan, **overrides)
        return plan
    if not args.preset:
        raise DomainError("give --plan or --preset")
    name, _, model = args.preset.partition(":")
    return preset_plan(name, model or "I", args.scale, mode=mode, seed=args.seed,
                       m_list=args.m or (1, 2, 3, 6, 12), N=args.N, n_list=args.n)


def cmd_mc_size(args) -> None:
    plan = _plan(args, "size")
    freq = run_size(plan, _table(args.table, required=True), threads=args.threads)
    _emit_freq(freq, args)


def cmd_mc_power(args) -> None:
    mode = {"raw": "raw_power", "adjusted": "adjusted_power"}[args.mode]
    plan = _plan(args, mode)
    freq = run_power(plan, _table(args.table, required=True), threads=args.threads)
    _emit_freq(freq, args)


def _emit_freq(freq, args) -> None:
    if args.format == "json":
        rows = [dict(label=r.label, n=r.n, m=r.m, rates=r.rates, n_valid=r.n_valid,
                     n_failed=r.n_failed, unreliable=r.unreliable) for r in freq.rows]
        _emit(json.dumps({"tests": list(freq.tests), "rows": rows}, indent=2), args.out)
    else:
        _emit(emit_table(freq, args.format), args.out)
    for r in freq.rows:
        if r.unreliable:
            log.warning("cell n=%d m=%d unreliable: %d of %d fits failed", r.n, r.m, r.n_failed,
                        r.n_failed + r.n_valid)


def cmd_analyze(args) -> None:
    transform = {"returns": "log_returns", "squared": "squared_log_returns"}[args.transform]
    config = ReturnsPipelineConfig(args.data, args.column, transform, tuple(args.m), args.alpha)
    report, fit = analyze_returns(config, _table(args.table, required=False))
    extra = {"fit": fit.to_dict()} if fit is not None else None
    _emit(_report_text(report, args.format, extra), args.out)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    common.add_argument("--threads", type=int, default=1, help="worker threads (default 1)")
    common.add_argument("--out", help="output file (default: standard output)")
    common.add_argument("--format", choices=("csv", "md", "json"), default="md")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="weakarma", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="simulate a (V)ARMA series")
    p.add_argument("--model", required=True, help="model JSON (may contain \"theta\")")
    p.add_argument("--noise", required=True, help="noise JSON, e.g. {\"kind\": \"product_pt\"}")
    p.add_argument("--theta", type=_parse_floats)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--burnin", type=int, default=1000)
    p.add_argument("--stream", type=int, default=0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", parents=[common], help="quasi-maximum-likelihood fit")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--theta", type=_parse_floats, help="starting value")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("test", parents=[common], help="portmanteau diagnostics of a fit")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--fit", help="fit JSON; refitted when omitted")
    p.add_argument("--m", type=_parse_list, default=[1, 2, 3, 6, 12])
    p.add_argument("--table")
    p.add_argument("--alpha", type=float, default=0.05)
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("tabulate", parents=[common], help="tabulate the U_K law")
    p.add_argument("--K", type=_parse_list, default=list(range(1, 21)))
    p.add_argument("--R", type=int, default=100_000)
    p.add_argument("--steps", type=int, default=2000)
    p.set_defaults(func=cmd_tabulate)

    for name, func, helptext in (("mc-size", cmd_mc_size, "Monte Carlo empirical size"),
                                 ("mc-power", cmd_mc_power, "Monte Carlo empirical power")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--plan", help="plan JSON")
        p.add_argument("--preset", help="e.g. arma:III, varma:I, arma_power:I")
        p.add_argument("--scale", choices=("desk", "full"), default="desk")
        p.add_argument("--N", type=int)
        p.add_argument("--n", type=_parse_list)
        p.add_argument("--m", type=_parse_list)
        p.add_argument("--table")
        if name == "mc-power":
            p.add_argument("--mode", choices=("raw", "adjusted"), default="adjusted")
        p.set_defaults(func=func)

    p = sub.add_parser("analyze", parents=[common], help="white-noise / ARMA(1,1) study of returns")
    p.add_argument("--data", required=True, help="CSV with a price column")
    p.add_argument("--column", default="Close")
    p.add_argument("--transform", choices=("returns", "squared"), default="returns")
    p.add_argument("--m", type=_parse_list, default=[1, 2, 3, 6, 12])
    p.add_argument("--table")
    p.add_argument("--alpha", type=float, default=0.05)
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        args.func(args)
    except (WeakArmaError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
