"""Command-line front end: parse a config, run experiments, emit reports.

Commands: ``epr``, ``w-state``, ``teleport``, ``scaling-sweep``.  Reports are
JSON (schema version 1) with a full config echo so every report reproduces
itself; ``scaling-sweep`` can also emit a CSV summary.  Wall-clock timing
goes to stderr only, so a re-run with the same config and seed writes a
byte-identical report regardless of ``--workers``.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import secrets
import sys
import time
from dataclasses import dataclass
from typing import Sequence

from .errors import InsufficientDataError, UsageError, WClassError
from .montecarlo import (
    RunReport,
    run_batch,
    run_epr_batch,
    run_teleport_batch,
)
from .protocol import ProtocolConfig, TeleportConfig

SCHEMA_VERSION = 1

WORKERS_ENV = "WCLASS_SIM_WORKERS"


@dataclass
class ExperimentSpec:
    command: str
    config: ProtocolConfig
    teleport: TeleportConfig | None
    trials: int
    output_path: str | None
    fmt: str  # "json" | "csv-summary"
    workers: int
    n_min: int | None = None
    n_max: int | None = None
    seed_was_auto: bool = False


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would sys.exit(2) with noise
        raise UsageError(message)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file (flags override it)")
    p.add_argument("--n", type=int, default=None, help="number of ensembles")
    p.add_argument("--eta", type=float, default=None, help="photon loss probability")
    p.add_argument("--pe", type=float, default=None, help="pair-emission probability")
    p.add_argument("--phases", default=None, help="comma-separated phi_1i (radians)")
    p.add_argument("--na", type=float, default=None, help="atom number N_a")
    p.add_argument("--finite-size", action="store_true", default=None)
    p.add_argument("--t0", type=float, default=None, help="interaction time (s)")
    p.add_argument("--cap", type=int, default=None, help="total-occupation cap")
    p.add_argument("--max-attempts", type=int, default=None)
    p.add_argument(
        "--no-double-pair",
        action="store_true",
        default=None,
        help="truncate the pump at first order",
    )
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--seed", default=None, help="integer seed, or 'auto'")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("-o", "--output", default=None, help="report path (default stdout)")
    p.add_argument("--format", choices=["json", "csv-summary"], default=None)


def _build_parser() -> _Parser:
    p = _Parser(prog="wclass-sim", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("epr", "w-state", "teleport", "scaling-sweep"):
        sp = sub.add_parser(name)
        _add_common(sp)
        if name == "teleport":
            sp.add_argument("--alpha-re", type=float, default=None)
            sp.add_argument("--alpha-im", type=float, default=None)
            sp.add_argument("--beta-re", type=float, default=None)
            sp.add_argument("--beta-im", type=float, default=None)
        if name == "scaling-sweep":
            sp.add_argument("--n-min", type=int, default=None)
            sp.add_argument("--n-max", type=int, default=None)
    return p


_DEFAULTS = {
    "n": 3,
    "p_e": 0.01,
    "eta": 0.0,
    "phases": None,
    "n_a": None,
    "finite_size": False,
    "t0": 1e-6,
    "truncation_cap": 4,
    "max_attempts": 10**15,
    "second_order_pump": True,
    "trials": 1000,
    "alpha": [1.0, 0.0],
    "beta": [0.0, 0.0],
    "n_min": 3,
    "n_max": 5,
}


def _load_config_file(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise UsageError("config file must hold a JSON object")
    return data


def _resolve_workers(flag: int | None) -> int:
    if flag is not None:
        value = flag
    elif os.environ.get(WORKERS_ENV):
        try:
            value = int(os.environ[WORKERS_ENV])
        except ValueError as exc:
            raise UsageError(f"{WORKERS_ENV} must be an integer") from exc
    else:
        value = os.cpu_count() or 1
    if value < 1:
        raise UsageError("--workers must be at least 1")
    return value


def parse_args(argv: Sequence[str]) -> ExperimentSpec:
    """Parse the command line into a validated experiment spec.

    Flags override config-file values; unknown flags are rejected; ``--seed``
    is required (the literal ``auto`` draws one, prints it, and embeds it in
    the report).
    """
    ns = _build_parser().parse_args(list(argv))
    file_cfg = _load_config_file(ns.config) if ns.config else {}

    def pick(flag_value, file_key, default):
        if flag_value is not None:
            return flag_value
        if file_key in file_cfg:
            return file_cfg[file_key]
        return default

    seed_raw = ns.seed if ns.seed is not None else file_cfg.get("seed")
    if seed_raw is None:
        raise UsageError("--seed is required (use '--seed auto' to draw one)")
    seed_was_auto = False
    if isinstance(seed_raw, str) and seed_raw.lower() == "auto":
        seed = secrets.randbits(63)
        seed_was_auto = True
    else:
        try:
            seed = int(seed_raw)
        except (TypeError, ValueError) as exc:
            raise UsageError("--seed must be an integer or 'auto'") from exc

    n = int(pick(ns.n, "n", _DEFAULTS["n"]))
    if ns.command == "teleport" and n != 3:
        raise UsageError("teleportation uses two 3-party W states (n must be 3)")
    if ns.command == "w-state" and n < 3:
        raise UsageError("w-state needs --n >= 3")
    if ns.command == "epr" and n < 2:
        raise UsageError("epr needs --n >= 2")

    phases = pick(
        None if ns.phases is None else ns.phases, "phases", _DEFAULTS["phases"]
    )
    if isinstance(phases, str):
        try:
            phases = tuple(float(x) for x in phases.split(","))
        except ValueError as exc:
            raise UsageError("--phases must be comma-separated numbers") from exc
    elif phases is not None:
        phases = tuple(float(x) for x in phases)

    n_a = pick(ns.na, "n_a", _DEFAULTS["n_a"])
    second_order = pick(
        None if ns.no_double_pair is None else not ns.no_double_pair,
        "second_order_pump",
        _DEFAULTS["second_order_pump"],
    )
    try:
        config = ProtocolConfig(
            n=n,
            p_e=float(pick(ns.pe, "p_e", _DEFAULTS["p_e"])),
            eta=float(pick(ns.eta, "eta", _DEFAULTS["eta"])),
            phases=phases,
            n_a=math.inf if n_a is None else float(n_a),
            finite_size=bool(
                pick(ns.finite_size, "finite_size", _DEFAULTS["finite_size"])
            ),
            t0=float(pick(ns.t0, "t0", _DEFAULTS["t0"])),
            truncation_cap=int(pick(ns.cap, "truncation_cap", _DEFAULTS["truncation_cap"])),
            max_attempts=int(
                pick(ns.max_attempts, "max_attempts", _DEFAULTS["max_attempts"])
            ),
            seed=seed,
            second_order_pump=bool(second_order),
        )
    except (ValueError, WClassError) as exc:
        raise UsageError(str(exc)) from exc

    teleport_cfg = None
    if ns.command == "teleport":
        alpha_file = file_cfg.get("alpha", _DEFAULTS["alpha"])
        beta_file = file_cfg.get("beta", _DEFAULTS["beta"])
        alpha = complex(
            pick(ns.alpha_re, None, alpha_file[0]),
            pick(ns.alpha_im, None, alpha_file[1]),
        )
        beta = complex(
            pick(ns.beta_re, None, beta_file[0]),
            pick(ns.beta_im, None, beta_file[1]),
        )
        try:
            teleport_cfg = TeleportConfig(alpha, beta, config)
        except WClassError as exc:
            raise UsageError(str(exc)) from exc

    trials = int(pick(ns.trials, "trials", _DEFAULTS["trials"]))
    if trials < 1:
        raise UsageError("--trials must be at least 1")

    fmt = pick(ns.format, "format", "json")
    if fmt == "csv-summary" and ns.command != "scaling-sweep":
        raise UsageError("csv-summary output is only defined for scaling-sweep")

    n_min = n_max = None
    if ns.command == "scaling-sweep":
        n_min = int(pick(ns.n_min, "n_min", _DEFAULTS["n_min"]))
        n_max = int(pick(ns.n_max, "n_max", _DEFAULTS["n_max"]))
        if n_min < 3 or n_max < n_min:
            raise UsageError("need 3 <= --n-min <= --n-max")

    return ExperimentSpec(
        command=ns.command,
        config=config,
        teleport=teleport_cfg,
        trials=trials,
        output_path=ns.output,
        fmt=fmt,
        workers=_resolve_workers(ns.workers),
        n_min=n_min,
        n_max=n_max,
        seed_was_auto=seed_was_auto,
    )


# ---------------------------------------------------------------------------
# report assembly
# ---------------------------------------------------------------------------


def _config_echo(spec: ExperimentSpec) -> dict:
    cfg = spec.config
    echo = {
        "n": cfg.n,
        "p_e": cfg.p_e,
        "eta": cfg.eta,
        "phases": list(cfg.phases),
        "n_a": None if math.isinf(cfg.n_a) else cfg.n_a,
        "finite_size": cfg.finite_size,
        "t0": cfg.t0,
        "truncation_cap": cfg.truncation_cap,
        "max_attempts": cfg.max_attempts,
        "seed": cfg.seed,
        "second_order_pump": cfg.second_order_pump,
        "trials": spec.trials,
    }
    if spec.teleport is not None:
        echo["alpha"] = [spec.teleport.alpha.real, spec.teleport.alpha.imag]
        echo["beta"] = [spec.teleport.beta.real, spec.teleport.beta.imag]
    if spec.command == "scaling-sweep":
        echo["n_min"] = spec.n_min
        echo["n_max"] = spec.n_max
    return echo


def _attempts_of(report: RunReport, t0: float) -> int:
    return round(report.mean_time_s * report.trials / t0)


def _run_sweep(spec: ExperimentSpec) -> tuple[dict, int]:
    rows = []
    prev_time = None
    attempts_total = 0
    base_phases = spec.config.phases
    for n in range(spec.n_min, spec.n_max + 1):
        phases = tuple(
            base_phases[k] if k < len(base_phases) else 0.0 for k in range(n)
        )
        cfg = dataclasses.replace(spec.config, n=n, phases=phases)
        report = run_batch(cfg, spec.trials, workers=spec.workers)
        ratio = None if prev_time is None else report.mean_time_s / prev_time
        prev_time = report.mean_time_s
        attempts_total += _attempts_of(report, cfg.t0)
        rows.append({"n": n, "ratio_to_prev": ratio, **report.to_dict()})
    return {"sweep": rows}, attempts_total


def _sweep_csv(results: dict) -> str:
    header = "n,p_c_hat,mean_time_s,predicted_time_s,ratio_to_prev,c_n_hat,fidelity_mean"
    lines = [header]
    for row in results["sweep"]:
        cells = [
            str(row["n"]),
            repr(float(row["p_c_hat"])),
            repr(float(row["mean_time_s"])),
            "" if row["predicted_time_s"] is None else repr(float(row["predicted_time_s"])),
            "" if row["ratio_to_prev"] is None else repr(float(row["ratio_to_prev"])),
            "" if row["c_n_hat"] is None else repr(float(row["c_n_hat"])),
            "" if row["fidelity_mean"] is None else repr(float(row["fidelity_mean"])),
        ]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def run(spec: ExperimentSpec) -> int:
    """Execute the experiment and write its report.  Returns the exit code."""
    started = time.monotonic()
    if spec.seed_was_auto:
        print(f"seed: {spec.config.seed}", file=sys.stderr)
    starved = False
    try:
        if spec.command == "epr":
            report = run_epr_batch(spec.config, spec.trials, workers=spec.workers)
            results = report.to_dict()
            attempts_total = _attempts_of(report, spec.config.t0)
            starved = report.successes == 0
        elif spec.command == "w-state":
            report = run_batch(spec.config, spec.trials, workers=spec.workers)
            results = report.to_dict()
            attempts_total = _attempts_of(report, spec.config.t0)
            starved = report.successes == 0
        elif spec.command == "teleport":
            treport = run_teleport_batch(spec.teleport, spec.trials, workers=spec.workers)
            results = treport.to_dict()
            attempts_total = round(
                treport.mean_time_s * treport.trials / spec.config.t0
            )
            starved = treport.successes == 0
        else:
            results, attempts_total = _run_sweep(spec)
            starved = any(row["successes"] == 0 for row in results["sweep"])
    except InsufficientDataError as exc:
        print(f"insufficient data: {exc}", file=sys.stderr)
        return 1

    document = {
        "schema_version": SCHEMA_VERSION,
        "command": spec.command,
        "config": _config_echo(spec),
        "results": results,
        "timing": {
            "attempts_total": attempts_total,
            "simulated_time_s": attempts_total * spec.config.t0,
        },
    }
    if spec.fmt == "csv-summary":
        payload = _sweep_csv(results)
    else:
        payload = json.dumps(document, indent=2) + "\n"

    try:
        if spec.output_path:
            with open(spec.output_path, "w", encoding="utf-8") as fh:
                fh.write(payload)
        else:
            sys.stdout.write(payload)
    except OSError as exc:
        print(f"cannot write report: {exc}", file=sys.stderr)
        return 3
    print(f"wall-clock: {time.monotonic() - started:.3f} s", file=sys.stderr)
    if starved:
        print("insufficient data: no successful trials", file=sys.stderr)
        return 1
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    try:
        spec = parse_args(sys.argv[1:] if argv is None else argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    return run(spec)


if __name__ == "__main__":
    sys.exit(main())
