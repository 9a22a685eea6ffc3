"""Command-line front end: ``byzdetect run|preset|list-presets|check``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .channel import BlindingError, blinding_product
from .detectors import FusionContext, glrt_group_weights, lmpt_group_weights
from .sensing import SensorBank, SensorSpec, assumption_check, make_reference_thresholds
from .sim.config import ConfigError, ExperimentConfig, load_config
from .sim.engine import run_sweep
from .sim.estimator import emit_estimator_csv, run_estimator
from .sim.output import emit_csv, emit_gnuplot
from .sim.presets import describe, preset, preset_names

EXIT_OK, EXIT_CONFIG, EXIT_DETECTOR, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("byzdetect")


def _add_run_flags(p):
    p.add_argument("--out", default=".", help="output directory (default: current)")
    p.add_argument("--seed", type=int, help="override the master seed")
    p.add_argument("--trials", type=int, help="override trials per point")
    p.add_argument("--workers", type=int, help="parallel worker processes")
    p.add_argument("--gnuplot", action="store_true", help="also write a gnuplot script next to the CSV")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="byzdetect", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the sweep described by a YAML config")
    run.add_argument("config")
    _add_run_flags(run)
    pre = sub.add_parser("preset", help="run a named experiment")
    pre.add_argument("name")
    _add_run_flags(pre)
    sub.add_parser("list-presets", help="list the named experiments")
    chk = sub.add_parser("check", help="check the reference-sensor assumption and print the blinding point")
    src = chk.add_mutually_exclusive_group(required=True)
    src.add_argument("config", nargs="?")
    src.add_argument("--preset")
    return ap


def _overrides(args) -> dict:
    return {"seed": args.seed, "trials": args.trials, "workers": args.workers}


def execute(cfg: ExperimentConfig, name: str, out_dir, gnuplot: bool = False) -> int:
    out = Path(out_dir) / f"{name}.csv"
    if cfg.kind == "estimator":
        emit_estimator_csv(run_estimator(cfg), out)
        log.info("wrote %s", out)
        return EXIT_OK
    records = run_sweep(cfg)
    emit_csv(records, out)
    log.info("wrote %s (%d records)", out, len(records))
    if gnuplot:
        x_col = "t" if cfg.record_steps == "all" else "p_attack"
        emit_gnuplot(records, out, out.with_suffix(".gp"), x_column=x_col, title=name)
    failed = [r for r in records if r.error]
    for r in failed:
        print(f"error: {r.detector} q={r.q} alpha={r.alpha} p_attack={r.p_attack}: {r.error}", file=sys.stderr)
    return EXIT_DETECTOR if failed else EXIT_OK


def check(cfg: ExperimentConfig) -> int:
    ok = True
    model = cfg.model
    for q in cfg.q_bits:
        reg = cfg.regular_thresholds(q)
        ref = SensorSpec(0, make_reference_thresholds(SensorSpec(0, reg), cfg.reference_offset, cfg.mirror), cfg.gain2, True)
        holds, mass = assumption_check(model, ref)
        ok &= holds
        print(f"q={q} reference thresholds {list(ref.thresholds[1:-1])}: assumption {'holds' if holds else 'VIOLATED'} (mass {mass:.12f})")
        bank = SensorBank.homogeneous(cfg.n_sensors, reg, cfg.gain2)
        ctx = FusionContext(model, bank)
        weights = {
            "GLRT": glrt_group_weights(ctx, np.array([model.p]))[0][ctx.index],
            "LMPT": lmpt_group_weights(ctx)[ctx.index],
        }
        for det, w in weights.items():
            try:
                x_star = blinding_product(bank, model, w)
                print(f"q={q} {det}: blinding at alpha*P_A = {x_star:.6g}")
            except BlindingError as exc:
                print(f"q={q} {det}: no blinding point ({exc})")
    return EXIT_OK if ok else EXIT_CONFIG


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "list-presets":
            for name in preset_names():
                print(f"{name:10s} {describe(name)}")
            return EXIT_OK
        if args.command == "check":
            cfg = preset(args.preset) if args.preset else load_config(args.config)
            return check(cfg)
        if args.command == "run":
            cfg = load_config(args.config, **_overrides(args))
            name = Path(args.config).stem
        else:
            cfg = preset(args.name, **_overrides(args))
            name = args.name
        return execute(cfg, name, args.out, args.gnuplot)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, ArithmeticError) as exc:
        print(f"detector error: {exc}", file=sys.stderr)
        return EXIT_DETECTOR


if __name__ == "__main__":
    sys.exit(main())
