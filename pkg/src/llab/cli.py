"""Command line entry point: ``llab <subcommand> --config <path> [--out <dir>] [--seed N] [--threads N]``.

Exit codes: 0 when every check passes, 2 on a numerical failure, 3 on a
configuration error. ``LLAB_THREADS`` overrides ``--threads``.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import atom_model as am
from . import commutator_lab as cl
from . import fgr
from . import liouvillian as lv
from . import pipeline
from . import report as rp
from . import suites
from . import thermal_field as tf
from .config import ConfigError, RunConfig, load, shipped_config
from .model import Model, build_model

EXIT_OK, EXIT_NUMERICAL, EXIT_CONFIG = 0, 2, 3
VIRIAL_MAX_DIMENSION = 3000
DUMP_MAX_DIMENSION = 5000
NUMERICAL_ERRORS = (fgr.FgrError, cl.AssemblyError, cl.ResolventError, am.EmptyProjectionError,
                    np.linalg.LinAlgError, ArithmeticError)
CONFIG_ERRORS = (ConfigError, am.AtomSpecError, tf.FieldError, lv.LiouvillianError)

COMMANDS = ("validate", "build", "fgr", "spectrum", "certify", "diagnose", "sweep", "selftest")


def thread_count(cli_value: int | None) -> int:
    env = os.environ.get("LLAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError([f"LLAB_THREADS={env!r} is not an integer"]) from exc
    return max(1, cli_value or 1)


def resolve_config(args) -> RunConfig:
    if args.config:
        return load(args.config)
    return shipped_config(args.shipped or "reference")


def run_selftest(model: Model, report: rp.RunReport, seed: int) -> None:
    with pipeline.timed(report, "selftest.ccr"):
        ccr = suites.ccr_suite(seed)
        zt = suites.zero_temperature_suite()
    report.add("selftest.bogoliubov", {"seed": seed}, {"ccr": ccr, "zero_temperature": zt})
    report.check("Bogoliubov map preserves Im of the inner product", ccr["passed"], "selftest.bogoliubov",
                 max_relative_error=ccr["max_relative_error"], tol=ccr["tol"])
    report.check("zero-temperature limit", zt["passed"], "selftest.bogoliubov",
                 max_negative_ratio=zt["max_negative_ratio"], bound=zt["bound"])
    with pipeline.timed(report, "selftest.feshbach"):
        fs = suites.feshbach_suite(seed)
    report.add("selftest.feshbach", {"seed": seed}, fs)
    report.check("Feshbach isospectrality", fs["passed"], "selftest.feshbach",
                 max_relative_mismatch=fs["max_relative_mismatch"], tol=fs["tol"])
    with pipeline.timed(report, "selftest.assembly"):
        asm = suites.assembly_suite(model)
    report.add("selftest.assembly", {"lambda": asm["lambda"]}, asm)
    report.check("closed-form commutators match matrix commutators", asm["passed"], "selftest.assembly",
                 C1=asm["C1_exact_identity_defect"], A0=asm["A0_identity_defect"], PM1P=asm["PM1P_defect"])
    target = model
    if model.kit.space.dimension > VIRIAL_MAX_DIMENSION:
        target = build_model(model.config.with_field(n_u=min(6, int(model.config.raw["field"]["n_u"]))))
    lams = pipeline._ladder(target, "lambda_ladder", "lambda")
    with pipeline.timed(report, "selftest.virial"):
        vir = suites.virial_suite(target, lams)
    report.add("selftest.virial", {"n_u": int(target.config.raw["field"]["n_u"]),
                                   "dimension": target.kit.space.dimension}, vir)
    report.check("virial gate", vir["passed"], "selftest.virial", **vir["max_relative"], tol=vir["tol"])
    with pipeline.timed(report, "selftest.fgr_scaling"):
        sc = suites.fgr_scaling_suite(model)
    report.add("selftest.fgr_scaling", {"s": sc["s"]}, sc)
    report.check("rates scale as coupling squared", sc["passed"], "selftest.fgr_scaling",
                 max_relative_error=sc["max_relative_error"])
    pipeline.run_build(model, report)


def execute(command: str, model: Model, report: rp.RunReport, threads: int, seed: int) -> None:
    if command == "build":
        pipeline.run_build(model, report)
    elif command == "fgr":
        pipeline.run_fgr(model, report, threads)
    elif command == "spectrum":
        pipeline.run_spectrum(model, report, threads)
    elif command == "certify":
        pipeline.run_certify(model, report)
    elif command == "diagnose":
        pipeline.run_diagnose(model, report, threads)
    elif command == "sweep":
        pipeline.run_sweep(model, report, threads)
    elif command == "selftest":
        run_selftest(model, report, seed)
    else:
        raise ValueError(f"unknown command {command!r}")


def write_outputs(report: rp.RunReport, out: Path, dump=None) -> list[Path]:
    written = [rp.atomic_write_text(out / f"{report.command}.json", report.to_json()),
               rp.atomic_write_text(out / f"{report.command}.timing.json", report.timing_json())]
    for name, (header, rows) in sorted(report.artifacts.items()):
        written.append(rp.atomic_write_text(out / name, rp.csv_text(header, rows, report.config_hash)))
    if dump is not None:
        written.append(rp.atomic_write_bytes(out / f"{report.command}.L.bin", rp.matrix_bytes(dump, report.config_hash)))
    return written


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="llab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"llab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        src = p.add_mutually_exclusive_group()
        src.add_argument("--config", type=Path, help="path to a JSON run configuration")
        src.add_argument("--shipped", help="name of a bundled configuration (default: reference)")
        p.add_argument("--out", type=Path, help="directory for the JSON report, timing block and CSV files")
        p.add_argument("--seed", type=int, help="overrides the configuration seed")
        p.add_argument("--threads", type=int, default=1, help="worker threads for ladder sweeps")
        if name == "build":
            p.add_argument("--dump", action="store_true", help="write L_lambda as a binary matrix file")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = resolve_config(args)
        threads = thread_count(args.threads)
        seed = args.seed if args.seed is not None else config.seed
        if args.command == "validate":
            print(f"ok: {config.name} (hash {config.hash})")
            return EXIT_OK
        model = build_model(config)
        model.kit  # checks delta_width against the coupled level gaps
    except CONFIG_ERRORS as exc:
        errors = exc.errors if isinstance(exc, ConfigError) else [str(exc)]
        print(f"configuration error ({len(errors)} problem{'s' if len(errors) != 1 else ''}):", file=sys.stderr)
        for e in errors:
            print(f"  - {e}", file=sys.stderr)
        return EXIT_CONFIG
    report = rp.RunReport(args.command, config.hash, config.name, seed)
    t0 = time.perf_counter()
    try:
        execute(args.command, model, report, threads, seed)
    except NUMERICAL_ERRORS as exc:
        record = {"type": type(exc).__name__, "message": str(exc)}
        if isinstance(exc, fgr.FgrAccuracyError):
            record["diagnostics"] = exc.diagnostics
        report.add("error", {}, record)
        report.check("completed without numerical error", False, args.command, error=record["type"])
    report.timing["total"] = time.perf_counter() - t0
    report.timing["threads"] = threads
    dump = None
    if getattr(args, "dump", False):
        if model.kit.space.dimension <= DUMP_MAX_DIMENSION:
            dump = model.L(float(model.params["lambda"])).matrix
        else:
            print(f"skipping dump: dimension {model.kit.space.dimension} exceeds {DUMP_MAX_DIMENSION}",
                  file=sys.stderr)
    if args.out:
        for path in write_outputs(report, args.out, dump):
            print(f"wrote {path}", file=sys.stderr)
    else:
        sys.stdout.write(report.to_json())
    for line in report.summary_lines():
        print(line, file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
