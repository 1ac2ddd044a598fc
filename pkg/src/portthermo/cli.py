"""Command-line front end: validate | simulate | lyapunov | list.

Exit codes: 0 success, 1 config/usage error, 2 check failure,
3 domain exit mid-run (the partial CSV is still written and flagged).
Set PORTTHERMO_LOG to DEBUG/INFO/WARNING/ERROR to control logging.
"""

from __future__ import annotations

import argparse
import itertools
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .config import (RunSetup, build_run, empty_csv, preset_config_text,
                     run_lyapunov, run_trajectory, run_validation,
                     simulation_report, trajectory_csv)
from .errors import DomainExit, PortThermoError
from .scenarios import SCENARIOS

log = logging.getLogger("portthermo")

OK, CONFIG_ERROR, CHECK_FAILED, DOMAIN_EXIT = 0, 1, 2, 3


def _setup_logging() -> None:
    level = os.environ.get("PORTTHERMO_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _out_path(outdir: str, name: str) -> Path:
    path = Path(outdir) / name
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _write(path: Path, text: str) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def cmd_validate(args) -> int:
    try:
        setup = build_run(args.config, args.seed)
        report = run_validation(setup)
    except PortThermoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return CONFIG_ERROR
    text = "\n".join(report.lines()) + "\n"
    print(text, end="")
    if "report" in setup.outputs:
        _write(_out_path(args.out, setup.outputs["report"]), text)
    return OK if report.passed else CHECK_FAILED


def _simulate_one(setup: RunSetup, outdir: str, suffix: str = "") -> int:
    sysm = setup.bundle.system
    csv_name = setup.outputs.get("csv", f"{sysm.name}.csv")
    report_name = setup.outputs.get("report", f"{sysm.name}_report.txt")
    if suffix:
        csv_name = _suffixed(csv_name, suffix)
        report_name = _suffixed(report_name, suffix)
    t0 = float(setup.integration["t0"])
    t1 = float(setup.integration["t1"])
    if t1 == t0:
        _write(_out_path(outdir, csv_name), empty_csv(sysm))
        text = f"simulation of {sysm.name!r}\nzero-duration span; header-only CSV\n"
        _write(_out_path(outdir, report_name), text)
        print(text, end="")
        return OK
    code = OK
    try:
        traj = run_trajectory(setup)
    except DomainExit as exc:
        traj = exc.trajectory
        code = DOMAIN_EXIT
    if len(traj) == 0:
        print(f"error: {traj.exit_reason or 'no samples produced'}", file=sys.stderr)
        return DOMAIN_EXIT
    _write(_out_path(outdir, csv_name), trajectory_csv(traj))
    text = simulation_report(setup, traj)
    _write(_out_path(outdir, report_name), text)
    print(text, end="")
    return code


def _suffixed(name: str, suffix: str) -> str:
    stem, dot, ext = name.rpartition(".")
    if not dot:
        return name + suffix
    return f"{stem}{suffix}.{ext}"


def _sweep_worker(packed) -> tuple[str, int]:
    config, seed, outdir, overrides = packed
    setup = build_run(config, seed)
    doc_params = dict(overrides)
    bundle_spec = setup  # rebuilt below with parameter overrides
    from .config import load_config, build_bundle  # local import for workers
    doc = load_config(config)
    doc.setdefault("system", {}).setdefault("parameters", {}).update(doc_params)
    setup.bundle = build_bundle(doc, Path(config).parent)
    suffix = "".join(f"__{k}={v:g}" for k, v in overrides.items())
    return suffix, _simulate_one(setup, outdir, suffix)


def cmd_simulate(args) -> int:
    try:
        setup = build_run(args.config, args.seed)
    except PortThermoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return CONFIG_ERROR
    if setup.sweep:
        combos = [dict(zip(setup.sweep, values))
                  for values in itertools.product(*setup.sweep.values())]
        packed = [(args.config, setup.seed, args.out, combo) for combo in combos]
        worst = OK
        if args.jobs > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                for suffix, code in pool.map(_sweep_worker, packed):
                    log.info("sweep %s -> exit %d", suffix, code)
                    worst = max(worst, code)
        else:
            for item in packed:
                suffix, code = _sweep_worker(item)
                log.info("sweep %s -> exit %d", suffix, code)
                worst = max(worst, code)
        return worst
    try:
        return _simulate_one(setup, args.out)
    except PortThermoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return CONFIG_ERROR


def cmd_lyapunov(args) -> int:
    try:
        setup = build_run(args.config, args.seed)
        report = run_lyapunov(setup)
    except DomainExit as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DOMAIN_EXIT
    except PortThermoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return CONFIG_ERROR
    text = "\n".join(report.lines()) + "\n"
    print(text, end="")
    if "report" in setup.outputs:
        _write(_out_path(args.out, setup.outputs["report"]), text)
    return OK if report.verdict else CHECK_FAILED


def cmd_list(args) -> int:
    for name in sorted(SCENARIOS):
        info = SCENARIOS[name]
        print(f"{name:26s} {info.doc}")
        if info.defaults and args.verbose:
            defaults = ", ".join(f"{k}={v}" for k, v in info.defaults.items())
            print(f"{'':26s} defaults: {defaults}")
    return OK


def cmd_export(args) -> int:
    try:
        text = preset_config_text(args.scenario, seed=args.seed or 0)
    except PortThermoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return CONFIG_ERROR
    if args.config:
        _write(Path(args.config), text)
    else:
        print(text, end="")
    return OK


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="portthermo",
        description="Model, compose, certify, and simulate port-based "
                    "thermodynamic systems.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="TOML config path")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--jobs", type=int, default=1,
                       help="parallel workers for parameter sweeps")

    p = sub.add_parser("validate", help="run the structural and law checks")
    common(p)
    p.set_defaults(fn=cmd_validate)
    p = sub.add_parser("simulate", help="integrate and write CSV + report")
    common(p)
    p.set_defaults(fn=cmd_simulate)
    p = sub.add_parser("lyapunov", help="certify a Lyapunov candidate")
    common(p)
    p.set_defaults(fn=cmd_lyapunov)
    p = sub.add_parser("list", help="list built-in scenarios")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(fn=cmd_list)
    p = sub.add_parser("export", help="print or write a preset config")
    p.add_argument("scenario")
    p.add_argument("--config", default=None, help="write here instead of stdout")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_export)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = make_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
