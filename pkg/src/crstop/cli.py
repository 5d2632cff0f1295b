"""Command-line driver: solve, simulate, sweep and compare.

Usage::

    crstop solve configs/fig3_throughput.json
    crstop sweep configs/fig2_delay.json --format csv -o delay.csv
    crstop compare configs/fig4_power_control.json \\
        --reference TwoLevelConstrained --mode OptimalPower

Exit codes: 0 ok, 2 bad config, 3 infeasible, 4 no convergence, 5 I/O.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from .errors import InfeasibleError, NonConvergenceError
from .model import ChannelEnsemble, Constraints, FadingKind, FadingLaw, SlotTiming
from .sim import packet_delay_trace, simulate
from .solver import SolverControl, solve_optimal, solve_two_level, unconstrained_two_level

log = logging.getLogger("crstop")

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_NONCONVERGENCE = 4
EXIT_IO = 5

MODES = ("TwoLevelUnconstrained", "TwoLevelConstrained", "OptimalPower")
MATCH_TWO_LEVEL = "two_level"

FIELDS = (
    "mean_gain",
    "mode",
    "throughput",
    "avg_power",
    "success_prob",
    "expected_delay",
    "sim_throughput",
    "sim_throughput_se",
    "sim_power",
    "sim_power_se",
    "sim_success",
    "sim_success_se",
    "sim_delay",
    "sim_delay_se",
    "sim_slots",
    "seed",
    "lambda_p",
    "lambda_d",
    "thresholds",
    "outer_iterations",
    "inner_iterations",
    "wall_time",
)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    count: int
    theta: tuple[float, ...]
    fading: FadingKind
    mean_gains: tuple[float, ...]
    tau_over_T: float
    modes: tuple[str, ...]
    d_max: float | None = None
    p_avg: float | str | None = None
    tol: float = 1e-10
    max_iters: int = 200
    simulate: bool = False
    slots: int = 1_000_000
    seed: int = 0
    packets: int = 0
    wall_time: bool = False

    def ensemble(self, mean_gain: float) -> ChannelEnsemble:
        return ChannelEnsemble(self.theta, FadingLaw(mean_gain, self.fading))

    @property
    def control(self) -> SolverControl:
        return SolverControl(tol=self.tol, max_bisection_iters=self.max_iters)


def _get(d: dict, key: str, kind, default=..., where=""):
    if key not in d:
        if default is ...:
            raise ConfigError(f"missing field {where}{key}")
        return default
    v = d[key]
    if kind is float and isinstance(v, int) and not isinstance(v, bool):
        v = float(v)
    if not isinstance(v, kind) or isinstance(v, bool) and kind is not bool:
        raise ConfigError(f"field {where}{key} has the wrong type: {v!r}")
    return v


def parse_config(doc: dict[str, Any]) -> ExperimentConfig:
    """Validate a config document (see README for the schema)."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")

    ch = _get(doc, "channels", dict)
    count = _get(ch, "count", int, where="channels.")
    if count < 1:
        raise ConfigError("channels.count must be >= 1")
    theta = ch.get("theta")
    if isinstance(theta, (int, float)) and not isinstance(theta, bool):
        theta = (float(theta),) * count
    elif isinstance(theta, list) and len(theta) == count:
        theta = tuple(float(t) for t in theta)
    else:
        raise ConfigError("channels.theta must be a number or a list of length channels.count")

    fad = _get(ch, "fading", dict, where="channels.")
    try:
        kind = FadingKind(fad.get("kind", "exponential"))
    except ValueError as exc:
        raise ConfigError(f"unknown fading kind {fad.get('kind')!r}") from exc
    if "mean_gains" in fad:
        gains = fad["mean_gains"]
        if not isinstance(gains, list) or not gains:
            raise ConfigError("channels.fading.mean_gains must be a nonempty list")
        gains = tuple(float(g) for g in gains)
    else:
        gains = (_get(fad, "mean_gain", float, where="channels.fading."),)

    timing = _get(doc, "timing", dict)
    tau = _get(timing, "tau_over_T", float, where="timing.")

    cons = doc.get("constraints", {})
    d_max = cons.get("d_max")
    p_avg = cons.get("p_avg")
    if p_avg is not None and p_avg != MATCH_TWO_LEVEL:
        p_avg = float(p_avg)

    modes = doc.get("modes", ["TwoLevelConstrained"])
    if not isinstance(modes, list) or not modes:
        raise ConfigError("modes must be a nonempty list")
    for m in modes:
        if m not in MODES:
            raise ConfigError(f"unknown mode {m!r}; choose from {', '.join(MODES)}")

    sv = doc.get("solver", {})
    sim = doc.get("simulation", {})
    out = doc.get("output", {})
    cfg = ExperimentConfig(
        count=count,
        theta=theta,
        fading=kind,
        mean_gains=gains,
        tau_over_T=tau,
        modes=tuple(modes),
        d_max=None if d_max is None else float(d_max),
        p_avg=p_avg,
        tol=float(sv.get("tol", 1e-10)),
        max_iters=int(sv.get("max_iters", 200)),
        simulate=bool(sim.get("enabled", False)),
        slots=int(sim.get("slots", 1_000_000)),
        seed=int(sim.get("seed", 0)),
        packets=int(sim.get("packets", 0)),
        wall_time=bool(out.get("wall_time", False)),
    )
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    try:
        for g in cfg.mean_gains:
            cfg.ensemble(g)
        SlotTiming(cfg.tau_over_T).fractions(cfg.count)
        cfg.control
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    needs_d = {"TwoLevelConstrained", "OptimalPower"} & set(cfg.modes)
    if needs_d and cfg.d_max is None:
        raise ConfigError(f"modes {sorted(needs_d)} need constraints.d_max")
    if cfg.d_max is not None and not cfg.d_max >= 1:
        raise ConfigError("constraints.d_max must be >= 1")
    if "OptimalPower" in cfg.modes:
        if cfg.p_avg is None:
            raise ConfigError("mode OptimalPower needs constraints.p_avg")
        if cfg.p_avg != MATCH_TWO_LEVEL and not cfg.p_avg > 0:
            raise ConfigError("constraints.p_avg must be positive")
    if cfg.slots < 1:
        raise ConfigError("simulation.slots must be >= 1")


@dataclass
class ResultRow:
    mean_gain: float
    mode: str
    throughput: float
    avg_power: float
    success_prob: float
    expected_delay: float
    lambda_p: float
    lambda_d: float
    thresholds: tuple[float, ...]
    outer_iterations: int
    inner_iterations: int
    seed: int
    sim_throughput: float | None = None
    sim_throughput_se: float | None = None
    sim_power: float | None = None
    sim_power_se: float | None = None
    sim_success: float | None = None
    sim_success_se: float | None = None
    sim_delay: float | None = None
    sim_delay_se: float | None = None
    sim_slots: int | None = None
    wall_time: float | None = None
    extra: dict[str, float] = field(default_factory=dict)

    def as_dict(self) -> dict[str, Any]:
        d = {name: getattr(self, name) for name in FIELDS}
        d["thresholds"] = list(self.thresholds)
        d.update(self.extra)
        return d


@dataclass
class PointResult:
    mean_gain: float
    rows: list[ResultRow]
    error: str | None = None
    code: int = EXIT_OK


def _solve_mode(mode, ens, timing, cfg, p_avg, cache):
    if mode == "TwoLevelUnconstrained":
        return unconstrained_two_level(ens, timing)
    if mode == "TwoLevelConstrained":
        if "two_level" not in cache:
            cache["two_level"] = solve_two_level(ens, timing, cfg.d_max, cfg.control)
        return cache["two_level"]
    if p_avg == MATCH_TWO_LEVEL:
        if "two_level" not in cache:
            cache["two_level"] = solve_two_level(ens, timing, cfg.d_max, cfg.control)
        p_avg = cache["two_level"].metrics.avg_power
    return solve_optimal(ens, timing, Constraints(cfg.d_max, p_avg), cfg.control)


def run_point(cfg: ExperimentConfig, mean_gain: float) -> PointResult:
    """Solve (and optionally simulate) every mode at one mean gain.

    Any failure drops all rows for this point.
    """
    ens = cfg.ensemble(mean_gain)
    timing = SlotTiming(cfg.tau_over_T)
    cache: dict = {}
    rows = []
    try:
        for mode in cfg.modes:
            t0 = time.perf_counter()
            rep = _solve_mode(mode, ens, timing, cfg, cfg.p_avg, cache)
            m = rep.metrics
            row = ResultRow(
                mean_gain=mean_gain,
                mode=mode,
                throughput=m.throughput,
                avg_power=m.avg_power,
                success_prob=m.success_prob,
                expected_delay=m.expected_delay,
                lambda_p=rep.duals.lambda_p,
                lambda_d=rep.duals.lambda_d,
                thresholds=rep.policy.thresholds,
                outer_iterations=rep.outer_iterations,
                inner_iterations=rep.inner_iterations,
                seed=cfg.seed,
            )
            if cfg.simulate:
                est = simulate(rep.policy, ens, timing, cfg.slots, cfg.seed)
                row.sim_throughput = est.throughput_mean
                row.sim_throughput_se = est.throughput_se
                row.sim_power = est.power_mean
                row.sim_power_se = est.power_se
                row.sim_success = est.success_rate
                row.sim_success_se = est.success_se
                row.sim_delay = est.delay_mean
                row.sim_delay_se = est.delay_se
                row.sim_slots = est.slots
                if cfg.packets > 0 and m.success_prob > 0:
                    # per-packet delay straight from a delay trace
                    trace = np.asarray(
                        packet_delay_trace(rep.policy, ens, timing, cfg.packets, cfg.seed)
                    )
                    row.sim_delay = float(trace.mean())
                    row.sim_delay_se = float(trace.std(ddof=1) / math.sqrt(trace.size)) if trace.size > 1 else math.inf
            if cfg.wall_time:
                row.wall_time = time.perf_counter() - t0
            rows.append(row)
    except InfeasibleError as exc:
        return PointResult(
            mean_gain, [],
            f"infeasible at mean_gain={mean_gain}: {exc}",
            EXIT_INFEASIBLE,
        )
    except NonConvergenceError as exc:
        return PointResult(
            mean_gain, [], f"no convergence at mean_gain={mean_gain}: {exc} {exc.residuals}",
            EXIT_NONCONVERGENCE,
        )
    return PointResult(mean_gain, rows)


def run(cfg: ExperimentConfig, workers: int = 1) -> tuple[list[ResultRow], int]:
    """Run every (mean_gain, mode) pair; rows ordered by mean_gain then mode."""
    gains = sorted(set(cfg.mean_gains))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_point, [cfg] * len(gains), gains))
    else:
        results = [run_point(cfg, g) for g in gains]
    rows: list[ResultRow] = []
    code = EXIT_OK
    for res in results:
        if res.error:
            print(f"crstop: {res.error}", file=sys.stderr)
            code = max(code, res.code)
        rows.extend(res.rows)
    order = {m: i for i, m in enumerate(MODES)}
    rows.sort(key=lambda r: (r.mean_gain, order[r.mode]))
    return rows, code


def add_relative_gain(rows: list[ResultRow], reference: str, mode: str) -> None:
    """Set ``relative_gain`` = (U_mode - U_ref) / U_ref on rows of ``mode``."""
    ref = {r.mean_gain: r.throughput for r in rows if r.mode == reference}
    for r in rows:
        if r.mode == mode and r.mean_gain in ref:
            r.extra["relative_gain"] = (r.throughput - ref[r.mean_gain]) / ref[r.mean_gain]
        else:
            r.extra["relative_gain"] = None


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.9g}"
    if isinstance(v, (list, tuple)):
        return ";".join(_fmt(float(x)) for x in v)
    return str(v)


def _json_value(v):
    if isinstance(v, float) and math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if isinstance(v, list):
        return [_json_value(x) for x in v]
    return v


def render(rows: list[ResultRow], fmt: str) -> str:
    if not rows:
        raise ValueError("no rows to emit")
    buf = io.StringIO()
    if fmt == "csv":
        header = list(FIELDS) + sorted(rows[0].extra)
        w = csv.writer(buf, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
        w.writerow(header)
        for r in rows:
            d = r.as_dict()
            w.writerow([_fmt(d.get(h)) for h in header])
    elif fmt == "jsonl":
        for r in rows:
            d = {k: _json_value(v) for k, v in r.as_dict().items()}
            buf.write(json.dumps(d, sort_keys=False) + "\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return buf.getvalue()


def emit(rows: list[ResultRow], fmt: str = "csv", destination: str = "-") -> None:
    """Write rows as CSV or JSON lines to a path, or stdout for ``-``.

    CSV columns follow ``FIELDS`` (plus ``relative_gain`` for compare);
    floats carry 9 significant digits, thresholds are joined with ``;`` and
    infinite values are written as ``inf``.
    """
    text = render(rows, fmt)
    if destination == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    with open(destination, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _load(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crstop", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", help="JSON experiment config")
        p.add_argument("-o", "--output", default="-", help="output path ('-' for stdout)")
        p.add_argument("--format", choices=("csv", "jsonl"), default="csv")
        p.add_argument("--seed", type=int)
        p.add_argument("--slots", type=int)
        p.add_argument("--mean-gain", type=float, action="append", dest="mean_gains")
        p.add_argument("--d-max", type=float)
        p.add_argument("--p-avg")
        p.add_argument("--tol", type=float)
        p.add_argument("--workers", type=int, default=1, help="sweep points run in parallel")
        p.add_argument("--wall-time", action="store_true", help="record solve wall time")

    common(sub.add_parser("solve", help="analytic solution only"))
    common(sub.add_parser("simulate", help="solve and Monte Carlo check"))
    common(sub.add_parser("sweep", help="solve over the configured sweep; simulate if enabled"))
    cmp = sub.add_parser("compare", help="two modes side by side with relative gain")
    common(cmp)
    cmp.add_argument("--reference", choices=MODES, default="TwoLevelConstrained")
    cmp.add_argument("--mode", choices=MODES, default="OptimalPower")
    return parser


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    changes: dict[str, Any] = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.slots is not None:
        changes["slots"] = args.slots
    if args.mean_gains:
        changes["mean_gains"] = tuple(args.mean_gains)
    if args.d_max is not None:
        changes["d_max"] = args.d_max
    if args.p_avg is not None:
        changes["p_avg"] = args.p_avg if args.p_avg == MATCH_TWO_LEVEL else float(args.p_avg)
    if args.tol is not None:
        changes["tol"] = args.tol
    if args.wall_time:
        changes["wall_time"] = True
    if args.command == "solve":
        changes["simulate"] = False
    elif args.command == "simulate":
        changes["simulate"] = True
    elif args.command == "compare":
        modes = [args.reference, args.mode]
        if len(set(modes)) != 2:
            raise ConfigError("compare needs two different modes")
        changes["modes"] = tuple(modes)
    cfg = replace(cfg, **changes)
    validate(cfg)
    return cfg


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = _apply_overrides(parse_config(_load(args.config)), args)
    except (ConfigError, ValueError) as exc:
        print(f"crstop: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    rows, code = run(cfg, workers=args.workers)
    if args.command == "compare":
        add_relative_gain(rows, args.reference, args.mode)
    if rows:
        try:
            emit(rows, args.format, args.output)
        except OSError as exc:
            print(f"crstop: cannot write {args.output}: {exc}", file=sys.stderr)
            return EXIT_IO
    return code


if __name__ == "__main__":
    sys.exit(main())
