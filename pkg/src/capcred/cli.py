"""Batch front door: parse a study config, run it, emit CSV tables.

Every command is a pure function of (system file, flags, seed): rerunning
with the same inputs produces byte-identical output files for any thread
count. Wall-clock timings are therefore only written when --timings is
passed. Exit codes: 0 success, 1 runtime/simulation failure, 2 config or
spec error.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .accredit import (
    AccreditationStudy,
    ZeroValueResourceError,
    sweep_load_scale,
    sweep_step_size,
)
from .dispatch import shortfall_surface
from .gradients import ipa_gradient
from .metrics import aggregate, aggregate_cvar, per_scenario_metric
from .oracle import (
    AdequateBaselineError,
    IrregularBaselineError,
    OracleUnsupportedError,
    oracle_assess,
    oracle_gradient,
)
from .streams import RngPolicy, sample_batch
from .system import SpecError, load_system_spec, perfect_direction, resource_direction

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2

OUT_DIR_ENV = "CAPCRED_OUT_DIR"


@dataclass
class StudyConfig:
    system_path: Path
    samples: int = 10_000
    seed: int = 0
    metric: str = "ue"
    risk: str = "expectation"
    beta: float = 0.95
    methods: tuple[str, ...] = ("mri_ipa",)
    resources: tuple[str, ...] = ()
    delta: float = 0.5
    delta_x: float = 10.0
    tolerance_mw: float = 0.01
    deltas: tuple[float, ...] = ()
    multipliers: tuple[float, ...] = ()
    out_dir: Path = field(default_factory=Path)
    threads: int = 1
    timings: bool = False
    dump_trace: bool = False

    def validate(self) -> None:
        if self.samples < 1:
            raise SpecError("samples", "must be at least 1")
        if not self.system_path.exists():
            raise SpecError(str(self.system_path), "system file does not exist")
        if self.metric not in ("ue", "lolh", "lold"):
            raise SpecError("metric", f"unknown metric {self.metric!r}")
        if self.risk not in ("expectation", "cvar"):
            raise SpecError("risk", f"unknown risk {self.risk!r}")


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".12g")
    if value is None:
        return ""
    return str(value)


def _write_csv(path: Path, header: list[str], rows: list[list], config: StudyConfig) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(
            f"# capcred v{__version__} seed={config.seed} samples={config.samples} "
            f"system={config.system_path.name}\n"
        )
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _batch_for(config: StudyConfig, system):
    policy = RngPolicy(master_seed=config.seed)
    return sample_batch(system, config.samples, policy, threads=config.threads)


def cmd_assess(config: StudyConfig) -> int:
    system = load_system_spec(config.system_path)
    batch = _batch_for(config, system)
    surface = shortfall_surface(system, batch, threads=config.threads)
    rows = []
    for metric in ("ue", "lolh", "lold"):
        values = per_scenario_metric(surface.shortfall, metric, system.hours_per_day)
        if config.risk == "cvar":
            est = aggregate_cvar(values, config.beta)
        else:
            est = aggregate(values)
        rse = est.rse
        rows.append(
            [
                metric,
                est.mean,
                est.std_error,
                "undefined" if rse is None else rse,
                est.ci95_halfwidth,
                est.n,
            ]
        )
    _write_csv(
        config.out_dir / "assess.csv",
        ["metric", "mean", "std_error", "rse", "ci95_halfwidth", "n"],
        rows,
        config,
    )
    print(f"wrote {config.out_dir / 'assess.csv'}")
    return EXIT_OK


def _report_row(report, config: StudyConfig) -> list:
    return [
        report.resource_id,
        report.method,
        report.alpha,
        report.l_c_mw,
        report.delta_x_mw,
        report.iterations,
        report.simulation_runs,
        report.gradient_stderr,
        report.wall_time_s if config.timings else None,
        ";".join(report.flags),
    ]


def cmd_accredit(config: StudyConfig) -> int:
    system = load_system_spec(config.system_path)
    batch = _batch_for(config, system)
    resources = list(config.resources) or [g.id for g in system.generators]
    study = AccreditationStudy(system, batch, metric=config.metric)
    rows = []
    traces = []
    for method in config.methods:
        if method == "mri_ipa":
            for report in study.mri_ipa(resources):
                rows.append(_report_row(report, config))
        elif method == "mri_fd":
            for rid in resources:
                rows.append(_report_row(study.mri_fd(rid, config.delta), config))
        elif method in ("elcc_bisection", "elcc_secant", "elcc_newton_ipa"):
            for rid in resources:
                report, trace = study.elcc(
                    rid, config.delta_x, method=method, tolerance_mw=config.tolerance_mw
                )
                rows.append(_report_row(report, config))
                traces.append((rid, method, trace))
        else:
            raise SpecError("methods", f"unknown method {method!r}")
    _write_csv(
        config.out_dir / "accredit.csv",
        [
            "resource_id", "method", "alpha", "l_c_mw", "delta_x_mw",
            "iterations", "simulation_runs", "stderr", "wall_time_s", "flags",
        ],
        rows,
        config,
    )
    if config.dump_trace:
        for rid, method, trace in traces:
            _write_csv(
                config.out_dir / f"trace_{rid}_{method}.csv",
                ["c_mw", "g"],
                [[c, g] for c, g in trace.evaluations],
                config,
            )
    print(f"wrote {config.out_dir / 'accredit.csv'}")
    return EXIT_OK


def cmd_sweep(config: StudyConfig, kind: str) -> int:
    system = load_system_spec(config.system_path)
    batch = _batch_for(config, system)
    if not config.resources:
        raise SpecError("resources", "sweep needs exactly one resource")
    resource = config.resources[0]
    if kind == "step":
        if not config.deltas:
            raise SpecError("deltas", "empty step-size list")
        rows = sweep_step_size(
            system, batch, resource, config.deltas,
            methods=config.methods, tolerance_mw=config.tolerance_mw,
            metric=config.metric,
        )
        header = ["delta_mw", "method", "alpha", "gradient_stderr", "flags"]
        out = config.out_dir / "sweep_step.csv"
    else:
        if not config.multipliers:
            raise SpecError("multipliers", "empty multiplier list")
        rows = sweep_load_scale(
            system, batch, config.multipliers, resource,
            method=config.methods[0], delta=config.delta,
            tolerance_mw=config.tolerance_mw, metric=config.metric,
        )
        header = ["multiplier", "method", "alpha", "flag"]
        out = config.out_dir / "sweep_load.csv"
    _write_csv(out, header, [[row[h] for h in header] for row in rows], config)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_oracle_check(config: StudyConfig) -> int:
    system = load_system_spec(config.system_path)
    try:
        exact = oracle_assess(system)
    except OracleUnsupportedError as exc:
        print(f"oracle unsupported: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    batch = _batch_for(config, system)
    surface = shortfall_surface(system, batch, threads=config.threads)
    rows = []
    ok = True

    def check(name: str, mc: float, se: float, ref: float):
        nonlocal ok
        passed = abs(mc - ref) <= 4.0 * se
        ok = ok and passed
        rows.append([name, mc, se, ref, "PASS" if passed else "FAIL"])

    ue = aggregate(per_scenario_metric(surface.shortfall, "ue", system.hours_per_day))
    lolh = aggregate(per_scenario_metric(surface.shortfall, "lolh", system.hours_per_day))
    check("eue", ue.mean, ue.std_error, exact.eue)
    check("lolh", lolh.mean, lolh.std_error, exact.lolh)
    grad = ipa_gradient(surface, batch, perfect_direction())
    check("gradient_perfect", grad.value, grad.std_error, oracle_gradient(system, perfect_direction()))
    for g in system.generators:
        if g.kind != "thermal":
            continue
        direction = resource_direction(g.id)
        est = ipa_gradient(surface, batch, direction)
        check(f"gradient_{g.id}", est.value, est.std_error, oracle_gradient(system, direction))
    _write_csv(
        config.out_dir / "oracle_check.csv",
        ["quantity", "mc_value", "mc_stderr", "exact_value", "status"],
        rows,
        config,
    )
    assessment_rows = [
        [tau, exact.lolp_per_hour[tau], exact.eue_per_hour[tau]]
        for tau in range(system.horizon_hours)
    ]
    assessment_rows.append(["total", exact.lolh, exact.eue])
    _write_csv(
        config.out_dir / "oracle_assessment.csv",
        ["hour", "lolp", "eue_mwh"],
        assessment_rows,
        config,
    )
    for row in rows:
        print(f"{row[0]}: {row[4]}")
    print(f"wrote {config.out_dir / 'oracle_check.csv'}")
    return EXIT_OK if ok else EXIT_RUNTIME


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in text.split(",") if tok)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="capcred", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("assess", "accredit", "sweep-step", "sweep-load", "oracle-check"):
        p = sub.add_parser(name)
        p.add_argument("--system", required=True, type=Path)
        p.add_argument("--samples", type=int, default=10_000)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--metric", default="ue", choices=("ue", "lolh", "lold"))
        p.add_argument("--risk", default="expectation", choices=("expectation", "cvar"))
        p.add_argument("--beta", type=float, default=0.95)
        p.add_argument("--methods", default="mri_ipa")
        p.add_argument("--resources", default="")
        p.add_argument("--delta", type=float, default=0.5)
        p.add_argument("--delta-x", dest="delta_x", type=float, default=10.0)
        p.add_argument("--tolerance-mw", dest="tolerance_mw", type=float, default=0.01)
        p.add_argument("--deltas", default="")
        p.add_argument("--multipliers", default="")
        p.add_argument("--out", type=Path, default=None)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--timings", action="store_true")
        p.add_argument("--trace", dest="dump_trace", action="store_true")
    return parser


def config_from_args(args: argparse.Namespace) -> StudyConfig:
    out = args.out or Path(os.environ.get(OUT_DIR_ENV, "."))
    config = StudyConfig(
        system_path=args.system,
        samples=args.samples,
        seed=args.seed,
        metric=args.metric,
        risk=args.risk,
        beta=args.beta,
        methods=tuple(tok for tok in args.methods.split(",") if tok),
        resources=tuple(tok for tok in args.resources.split(",") if tok),
        delta=args.delta,
        delta_x=args.delta_x,
        tolerance_mw=args.tolerance_mw,
        deltas=_parse_floats(args.deltas),
        multipliers=_parse_floats(args.multipliers),
        out_dir=Path(out),
        threads=args.threads,
        timings=args.timings,
        dump_trace=args.dump_trace,
    )
    config.validate()
    return config


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = config_from_args(args)
        if args.command == "assess":
            return cmd_assess(config)
        if args.command == "accredit":
            return cmd_accredit(config)
        if args.command == "sweep-step":
            return cmd_sweep(config, "step")
        if args.command == "sweep-load":
            return cmd_sweep(config, "load")
        return cmd_oracle_check(config)
    except (SpecError, OracleUnsupportedError, ValueError) as exc:
        if isinstance(exc, IrregularBaselineError):
            print(f"irregular baseline: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        if isinstance(exc, (AdequateBaselineError, ZeroValueResourceError)):
            print(f"simulation failure: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # runtime failures keep the 1/2 contract stable
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
