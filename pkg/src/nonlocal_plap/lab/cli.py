"""Command line interface.

Exit status is 0 when every verdict passes, 2 when some verdict fails and 1
on configuration or solver errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..covering import CoverError
from ..kernel import c_n
from ..solver import SolverError
from .config import ConfigError, ExperimentConfig, load_config
from .experiments import run_experiment
from .matrix import fixture_matrix
from .report import Report, emit_report

log = logging.getLogger("nonlocal_plap")

EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2

SWEEP_EXPERIMENTS = ("ponce_sweep", "measurable_check", "simple_check", "cn_table")


def _summary(report: Report, label: str) -> str:
    lines = [f"[{label}] {report.experiment}: {'PASS' if report.passed else 'FAIL'}"]
    for r in report.rows:
        extra = "" if r.sol_err is None else f"  sol_err={r.sol_err:.4e}  iters={r.iters}"
        lines.append(f"  delta={r.delta:<8g} nonlocal={r.nonlocal_:.6f} local={r.local:.6f} gap={r.gap:+.3e}{extra}")
    if report.order is not None:
        lines.append(f"  fitted order {report.order:.3f}")
    if report.tol_ineq is not None:
        lines.append(f"  tol_ineq {report.tol_ineq:.3e}")
    if not report.rows and report.verdicts:
        passed = sum(report.verdicts.values())
        lines.append(f"  {passed}/{len(report.verdicts)} checks pass")
    for key, ok in report.verdicts.items():
        if not ok:
            lines.append(f"  FAIL {key}")
    return "\n".join(lines)


def _run(cfg: ExperimentConfig, config_path: Path | None, out_dir: str | None, stem: str | None = None) -> Report:
    report = run_experiment(cfg)
    directory = out_dir or cfg.output.dir
    if directory is None and config_path is not None:
        directory = config_path.parent
    if directory is not None:
        stem = stem or cfg.output.stem or (config_path.stem if config_path else cfg.name)
        for path in emit_report(report, directory, stem, cfg.output.formats, cfg.output.plot):
            log.info("wrote %s", path)
    return report


def _config_command(args, allowed) -> int:
    path = Path(args.config)
    cfg = load_config(path)
    if cfg.experiment not in allowed:
        raise ConfigError(f"'{args.command}' cannot run experiment {cfg.experiment!r}")
    report = _run(cfg, path, args.out)
    print(_summary(report, path.name))
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_cn(args) -> int:
    print(f"{c_n(args.dim, args.p):.15g}")
    return EXIT_OK


def cmd_check(args) -> int:
    if not args.all:
        raise ConfigError("check needs --all")
    ok = True
    for label, cfg in fixture_matrix(quick=not args.full):
        report = _run(cfg, None, args.out, stem=label)
        print(_summary(report, label))
        ok &= report.passed
    return EXIT_OK if ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nonlocal-plap",
                                     description="Nonlocal p-Laplacian energies, solvers and limit checks.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cn", help="print the normalization constant C_N")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--p", type=float, required=True)
    p.set_defaults(func=cmd_cn)

    for name, allowed, text in (
        ("sweep", SWEEP_EXPERIMENTS, "run an energy sweep (ponce_sweep, measurable_check, simple_check, cn_table)"),
        ("gconv", ("gconv",), "run a G-convergence study"),
        ("vitali", ("vitali_check",), "run the covering checks"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="TOML experiment file")
        p.add_argument("--out", help="output directory (defaults to [output].dir or the config's folder)")
        p.set_defaults(func=lambda a, allowed=allowed: _config_command(a, allowed))

    p = sub.add_parser("check", help="run the built-in fixture matrix")
    p.add_argument("--all", action="store_true", help="run every fixture")
    p.add_argument("--full", action="store_true", help="use acceptance-size grids instead of quick ones")
    p.add_argument("--out", help="write a report per fixture into this directory")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, SolverError, CoverError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
